"""Conjugate posterior inference for Bernoulli and linear-Gaussian arms.

Posterior states are immutable value objects holding one set of
hyperparameters per arm. Every array may carry leading batch dimensions
(e.g. one posterior per simulated realization); the arm axis is always the
last axis of the scalar hyperparameters.

Updates are available in sequential form (one observation at a time, for the
played arm only) and in batch form (from a :class:`~doublesampling.core.History`);
both give the same posterior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core import History


class NumericalError(ArithmeticError):
    """A posterior update produced a non-SPD or non-finite state."""


def _onehot(arm, n_arms: int) -> np.ndarray:
    return np.arange(n_arms) == np.asarray(arm)[..., None]


# --------------------------------------------------------------------------- Beta


@dataclass(frozen=True)
class BetaPosterior:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a, b = np.broadcast_arrays(np.asarray(self.alpha, dtype=float), np.asarray(self.beta, dtype=float))
        if not (np.all(a > 0) and np.all(b > 0)):
            raise ValueError("Beta parameters must be positive")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def prior(cls, n_arms: int, alpha0: float = 1.0, beta0: float = 1.0, batch=()) -> "BetaPosterior":
        shape = tuple(batch) + (n_arms,)
        return cls(np.full(shape, float(alpha0)), np.full(shape, float(beta0)))

    @property
    def n_arms(self) -> int:
        return self.alpha.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.alpha.shape[:-1]

    def __getitem__(self, idx) -> "BetaPosterior":
        return BetaPosterior(self.alpha[idx], self.beta[idx])


def _check_binary(reward):
    y = np.asarray(reward, dtype=float)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError(f"Bernoulli rewards must be 0 or 1, got {reward!r}")
    return y


def beta_sequential_update(post: BetaPosterior, arm, reward) -> BetaPosterior:
    y = _check_binary(reward)
    hit = _onehot(arm, post.n_arms)
    return BetaPosterior(post.alpha + hit * y[..., None], post.beta + hit * (1.0 - y)[..., None])


def beta_batch_update(prior: BetaPosterior, history: History) -> BetaPosterior:
    if prior.batch_shape:
        raise ValueError("batch updates take an unbatched prior")
    y = _check_binary(history.rewards) if len(history) else np.zeros(0)
    arms = np.asarray(history.arms, dtype=int)
    if arms.size and arms.max() >= prior.n_arms:
        raise IndexError("history references an arm outside the posterior")
    successes = np.bincount(arms, weights=y, minlength=prior.n_arms)
    plays = np.bincount(arms, minlength=prior.n_arms)
    return BetaPosterior(prior.alpha + successes, prior.beta + (plays - successes))


# ---------------------------------------------------------------------------- NIG


@dataclass(frozen=True)
class NIGPosterior:
    """Normal-Inverse-Gamma posterior ``N(w | u, s2 V) * IG(s2 | alpha, beta)`` per arm.

    Stored in precision form: ``precision`` is ``V^{-1}`` with shape
    ``(..., A, d, d)``; ``u`` is ``(..., A, d)``; ``alpha``/``beta`` are ``(..., A)``.
    """

    u: np.ndarray
    precision: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        for name in ("u", "precision", "alpha", "beta"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.u.shape[:-1] != self.alpha.shape or self.precision.shape != self.u.shape + self.u.shape[-1:]:
            raise ValueError("inconsistent NIG hyperparameter shapes")
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must have the same shape")
        if not (np.all(self.alpha > 0) and np.all(self.beta > 0)):
            raise ValueError("NIG alpha and beta must be positive")

    @classmethod
    def prior(cls, n_arms: int, d: int, alpha0: float = 1.0, beta0: float = 1.0,
              v_scale: float = 1.0, u0=None, batch=()) -> "NIGPosterior":
        """Prior ``u = u0 (default 0)``, ``V = v_scale * I``."""
        lead = tuple(batch) + (n_arms,)
        u = np.zeros(lead + (d,)) if u0 is None else np.broadcast_to(np.asarray(u0, float), lead + (d,)).copy()
        prec = np.broadcast_to(np.eye(d) / v_scale, lead + (d, d)).copy()
        return cls(u, prec, np.full(lead, float(alpha0)), np.full(lead, float(beta0)))

    @property
    def n_arms(self) -> int:
        return self.alpha.shape[-1]

    @property
    def dim(self) -> int:
        return self.u.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.alpha.shape[:-1]

    @property
    def cov(self) -> np.ndarray:
        """The scale matrix ``V`` (materialized from the precision)."""
        return np.linalg.inv(self.precision)

    def cov_cholesky(self) -> np.ndarray:
        """Lower Cholesky factor of ``V``."""
        try:
            return np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("posterior scale matrix is not positive definite") from exc

    def __getitem__(self, idx) -> "NIGPosterior":
        return NIGPosterior(self.u[idx], self.precision[idx], self.alpha[idx], self.beta[idx])


def _check_spd(precision: np.ndarray):
    if not np.all(np.isfinite(precision)):
        raise NumericalError("non-finite posterior precision")
    try:
        np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("posterior precision lost positive definiteness") from exc


def nig_sequential_update(post: NIGPosterior, arm, context, reward) -> NIGPosterior:
    x = np.asarray(context, dtype=float)
    y = np.asarray(reward, dtype=float)
    if x.shape != post.batch_shape + (post.dim,):
        raise ValueError(f"context shape {x.shape} does not match {post.batch_shape + (post.dim,)}")
    xa = np.broadcast_to(x[..., None, :], post.u.shape)
    P, u = post.precision, post.u

    P_new = P + xa[..., :, None] * xa[..., None, :]
    rhs = np.einsum("...ij,...j->...i", P, u) + xa * y[..., None, None]
    try:
        Vx = np.linalg.solve(P, xa[..., None])[..., 0]
        u_new = np.linalg.solve(P_new, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular posterior precision") from exc
    spread = 1.0 + np.einsum("...d,...d->...", xa, Vx)
    resid = y[..., None] - np.einsum("...d,...d->...", xa, u)

    hit = _onehot(arm, post.n_arms)
    P_new = np.where(hit[..., None, None], P_new, P)
    _check_spd(P_new)
    return NIGPosterior(
        np.where(hit[..., None], u_new, u),
        P_new,
        post.alpha + 0.5 * hit,
        post.beta + hit * resid**2 / (2.0 * spread),
    )


def nig_batch_update(prior: NIGPosterior, history: History) -> NIGPosterior:
    if prior.batch_shape:
        raise ValueError("batch updates take an unbatched prior")
    u, P = prior.u.copy(), prior.precision.copy()
    alpha, beta = prior.alpha.copy(), prior.beta.copy()
    for a in range(prior.n_arms):
        X, y = history.arm_data(a)
        if y.size == 0:
            continue
        if X.shape[1] != prior.dim:
            raise ValueError(f"history contexts have dimension {X.shape[1]}, expected {prior.dim}")
        P0, u0 = prior.precision[a], prior.u[a]
        Pt = P0 + X.T @ X
        _check_spd(Pt)
        ut = np.linalg.solve(Pt, P0 @ u0 + X.T @ y)
        P[a], u[a] = Pt, ut
        alpha[a] += y.size / 2.0
        beta[a] += 0.5 * (y @ y + u0 @ P0 @ u0 - ut @ Pt @ ut)
    if not np.all(beta > 0):
        raise NumericalError("batch update produced a non-positive beta")
    return NIGPosterior(u, P, alpha, beta)


# ----------------------------------------------------------------------- sampling


@dataclass(frozen=True)
class BernoulliSample:
    """Success probabilities ``theta``, shape ``(..., M, A)``."""

    theta: np.ndarray

    def mean_rewards(self, context=None) -> np.ndarray:
        return self.theta


@dataclass(frozen=True)
class GaussianSample:
    """NIG draws kept in factored form.

    Sample ``m`` of arm ``a`` has noise variance ``variances[..., m, a]`` and
    weights ``loc[a] + sqrt(variance) * chol[a] @ normals[..., m, a, :]``.
    """

    loc: np.ndarray
    chol: np.ndarray
    variances: np.ndarray
    normals: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        """Weight vectors, shape ``(..., M, A, d)``."""
        d = self.loc.shape[-1]
        Lz = sum(self.chol[..., None, :, :, j] * self.normals[..., j, None] for j in range(d))
        return self.loc[..., None, :, :] + np.sqrt(self.variances)[..., None] * Lz

    def mean_rewards(self, context) -> np.ndarray:
        """``x @ w`` for every sample and arm without forming the weights."""
        if context is None:
            raise ValueError("linear-Gaussian samples need a context")
        x = np.asarray(context, dtype=float)
        d = self.loc.shape[-1]
        if x.shape[-1] != d:
            raise ValueError(f"context dimension {x.shape[-1]} does not match d={d}")
        base = np.einsum("...ad,...d->...a", self.loc, x)
        proj = np.einsum("...aij,...i->...aj", self.chol, x)
        spread = sum(self.normals[..., j] * proj[..., None, :, j] for j in range(d))
        return base[..., None, :] + np.sqrt(self.variances) * spread


ParameterSample = Union[BernoulliSample, GaussianSample]
Posterior = Union[BetaPosterior, NIGPosterior]


def _fill(rng, batch_shape, shape, draw):
    """Raw variates for every batch element into one array.

    ``rng`` is either a single Generator (one call over the whole batch) or a
    sequence of Generators, one per element of a 1-d batch, so that each
    element's randomness is independent of the others.
    """
    if isinstance(rng, np.random.Generator):
        out = np.empty(batch_shape + shape)
        draw(rng, ..., out)
        return out
    if len(batch_shape) != 1 or len(rng) != batch_shape[0]:
        raise ValueError(f"need one generator per batch element, got {len(rng)} for batch {batch_shape}")
    out = np.empty(batch_shape + shape)
    for i, g in enumerate(rng):
        draw(g, i, out[i])
    return out


def sample_posterior(post: Posterior, M: int, rng: Union[np.random.Generator, Sequence[np.random.Generator]]):
    """Draw ``M`` parameter samples per batch element.

    Beta draws are the ratio of two Gamma variates. NIG draws take the noise
    variance from ``InverseGamma(alpha, beta)`` and then the weights from
    ``N(u, variance * V)`` through the Cholesky factor of ``V``.
    """
    M = int(M)
    if M < 1:
        raise ValueError(f"need at least one posterior sample, got M={M}")
    batch = post.batch_shape
    A = post.n_arms

    if isinstance(post, BetaPosterior):
        def draw(g, i, out):
            ga = g.standard_gamma(post.alpha[i][..., None, :], size=out.shape)
            g.standard_gamma(post.beta[i][..., None, :], out=out)
            out += ga
            np.divide(ga, out, out=out)

        return BernoulliSample(_fill(rng, batch, (M, A), draw))

    d = post.dim
    gam = _fill(rng, batch, (M, A), lambda g, i, out: g.standard_gamma(post.alpha[i][..., None, :], out=out))
    z = _fill(rng, batch, (M, A, d), lambda g, i, out: g.standard_normal(out=out))
    variances = post.beta[..., None, :] / gam
    return GaussianSample(post.u, post.cov_cholesky(), variances, z)
