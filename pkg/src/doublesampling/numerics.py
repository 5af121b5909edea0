"""Special functions used by the policies.

All functions accept numpy arrays and broadcast. The heavy lifting is done by
:mod:`scipy.special` (``ndtr``, ``betaincinv``, ``stdtrit``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class TruncatedGaussianSpec:
    mean: float
    std: float
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"empty truncation range [{self.lower}, {self.upper}]")
        if self.std < 0:
            raise ValueError(f"std must be non-negative, got {self.std}")


def std_normal_cdf(z):
    """Standard normal CDF, saturating at 0/1 for extreme arguments."""
    out = special.ndtr(z)
    return float(out) if np.ndim(out) == 0 else out


def _log_mass(lo, hi):
    """``log P(lo <= Z <= hi)`` for standard normal ``Z``, safe deep in either tail."""
    upper_tail = lo >= 0
    # Work with the tail that does not round to 1: P = F(far) - F(near) on that side.
    near = np.where(upper_tail, -lo, hi)
    far = np.where(upper_tail, -hi, lo)
    log_near = special.log_ndtr(near)
    with np.errstate(divide="ignore", invalid="ignore"):
        return log_near + np.log1p(-np.exp(special.log_ndtr(far) - log_near))


def truncnorm_sf(x, mean, std, lower=0.0, upper=1.0):
    """Survival function ``1 - F(x)`` of ``N(mean, std**2)`` truncated to ``[lower, upper]``.

    Evaluated as a ratio of log-probabilities so that tiny tails keep their
    relative accuracy even when the truncation range sits far from the mean.
    ``std`` must be positive; callers own the ``std == 0`` case.
    """
    x, mean, std = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, mean, std)))
    a = (lower - mean) / std
    b = (upper - mean) / std
    z = (np.clip(x, lower, upper) - mean) / std
    with np.errstate(invalid="ignore"):
        out = np.clip(np.exp(_log_mass(z, b) - _log_mass(a, b)), 0.0, 1.0)
    out = np.where(x <= lower, 1.0, np.where(x >= upper, 0.0, out))
    return float(out) if out.ndim == 0 else out


def truncated_normal_cdf(x, spec: TruncatedGaussianSpec):
    if spec.std <= 0:
        raise ValueError("std = 0 is a point mass; use the caller's point-mass convention")
    sf = truncnorm_sf(x, spec.mean, spec.std, spec.lower, spec.upper)
    return 1.0 - sf


def beta_quantile(q, a, b):
    """Inverse of the regularized incomplete beta function."""
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("quantile level must lie in (0, 1)")
    if np.any(np.asarray(a) <= 0) or np.any(np.asarray(b) <= 0):
        raise ValueError("Beta parameters must be positive")
    out = special.betaincinv(a, b, q)
    return float(out) if np.ndim(out) == 0 else out


def student_t_quantile(q, dof, location=0.0, scale=1.0):
    """Quantile of a location-scale Student-t distribution."""
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("quantile level must lie in (0, 1)")
    if np.any(np.asarray(dof) <= 0):
        raise ValueError("degrees of freedom must be positive")
    if np.any(np.asarray(scale) <= 0):
        raise ValueError("scale must be positive")
    out = location + scale * special.stdtrit(dof, q)
    return float(out) if np.ndim(out) == 0 else out
