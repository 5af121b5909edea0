"""Arm-selection policies: double sampling, Thompson sampling and Bayes-UCB.

Double sampling works in two stages:

1. Monte-Carlo: draw ``M`` parameter sets from the posterior, find the best
   arm under each, and turn the winner counts into an estimate ``p_hat`` of
   each arm's probability of being optimal (plus its spread ``sigma_hat``).
2. Candidate sampling: draw ``N`` candidate arms from ``Categorical(p_hat)``
   and play their mode. ``N`` grows like ``log(1 / p_fa)``, where ``p_fa``
   is the estimated chance that some non-leading arm is actually the best.
   With ``N = 1`` this is Thompson sampling; large ``N`` is greedy.

The selectors work on a single posterior with one Generator, or on a batch of
posteriors (leading axis ``R``) with a list of ``R`` Generators. In the batch
case realization ``r`` only ever consumes ``rngs[r]``, so its decisions do not
depend on what else is in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conjugate import BetaPosterior, NIGPosterior, sample_posterior
from .numerics import beta_quantile, student_t_quantile, truncnorm_sf

ALGORITHMS = ("double-sampling", "thompson", "bayes-ucb")
UCB_Q_MIN = 1e-12


@dataclass(frozen=True)
class PolicyConfig:
    """Double-sampling knobs.

    ``p_fa_floor`` defaults to ``1 / mc_samples`` and ``n_max`` to
    ``mc_samples``. Setting ``n_max = 1`` turns double sampling into
    Thompson sampling over the Monte-Carlo measure.
    """

    mc_samples: int = 1000
    n_scale: float = 1.0
    p_fa_floor: Optional[float] = None
    n_max: Optional[int] = None
    tie_break: str = "uniform"

    def __post_init__(self):
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if not self.n_scale > 0:
            raise ValueError("n_scale must be positive")
        if self.p_fa_floor is not None and not 0 < self.p_fa_floor < 1:
            raise ValueError("p_fa_floor must lie in (0, 1)")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.tie_break != "uniform":
            raise ValueError("only uniform random tie-breaking is supported")

    @property
    def floor(self) -> float:
        return 1.0 / self.mc_samples if self.p_fa_floor is None else self.p_fa_floor

    @property
    def cap(self) -> int:
        return self.mc_samples if self.n_max is None else self.n_max


@dataclass(frozen=True)
class OptimalityEstimate:
    p_hat: np.ndarray
    sigma_hat: np.ndarray
    best_arm: np.ndarray
    best_prob: np.ndarray
    sample_count: int


@dataclass(frozen=True)
class PolicyDecision:
    chosen: np.ndarray
    n_candidates: np.ndarray
    p_fa: np.ndarray
    per_arm_p_fa: np.ndarray
    estimate: OptimalityEstimate


def _rows(rng):
    return None if isinstance(rng, np.random.Generator) else rng


def argmax_random(values, rng) -> np.ndarray:
    """Argmax over the last axis, ties broken uniformly at random.

    The generator is touched only when a tie occurs. With a list of
    generators, row ``r`` of the leading axis draws from ``rng[r]``.
    """
    values = np.asarray(values)
    # Loop over the (short) arm axis; reductions along it are slow in numpy.
    A = values.shape[-1]
    top = values[..., 0]
    choice = np.zeros(top.shape, dtype=np.int64)
    for a in range(1, A):
        better = values[..., a] > top
        choice[better] = a
        top = np.maximum(top, values[..., a])
    n_top = sum((values[..., a] == top).astype(np.int8) for a in range(A))
    tied = n_top > 1
    if not tied.any():
        return choice
    is_top = values == top[..., None]
    rows = _rows(rng)
    if rows is None:
        block = is_top[tied]
        choice[tied] = (block * (1.0 + rng.random(block.shape))).argmax(axis=-1)
        return choice
    if len(rows) != values.shape[0]:
        raise ValueError("need one generator per leading row")
    for r in np.flatnonzero(tied.reshape(len(rows), -1).any(axis=1)):
        c, t, top = choice[r], tied[r], is_top[r]
        if np.ndim(c) == 0:
            choice[r] = (top * (1.0 + rows[r].random(top.shape))).argmax()
        else:
            block = top[t]
            c[t] = (block * (1.0 + rows[r].random(block.shape))).argmax(axis=-1)
    return choice


def estimate_optimality(mean_rewards, rng) -> OptimalityEstimate:
    """Monte-Carlo estimate of each arm's probability of being optimal.

    Args:
        mean_rewards: expected reward of every arm under every posterior
            sample, shape ``(..., M, A)``.
        rng: Generator (or per-row list) for argmax tie-breaking.
    """
    mu = np.asarray(mean_rewards, dtype=float)
    if mu.ndim < 2 or mu.shape[-2] < 1:
        raise ValueError("need at least one posterior sample")
    M, A = mu.shape[-2:]
    winners = argmax_random(mu, rng)
    lead = winners.shape[:-1]
    offsets = np.arange(int(np.prod(lead))).reshape(lead + (1,)) * A
    counts = np.bincount((winners + offsets).ravel(), minlength=offsets.size * A).reshape(lead + (A,))
    p_hat = counts / M
    # Second moment of the indicator around its mean, accumulated from counts.
    var = (counts * (1.0 - p_hat) ** 2 + (M - counts) * p_hat**2) / M
    best = argmax_random(p_hat, rng)
    best_prob = np.take_along_axis(p_hat, best[..., None], axis=-1)[..., 0]
    return OptimalityEstimate(p_hat, np.sqrt(var), best, best_prob, M)


def false_alarm_probs(est: OptimalityEstimate):
    """Per-arm and averaged probability that a non-leading arm is optimal.

    For arm ``a`` this is the upper tail, beyond ``p*``, of a Normal with mean
    ``p_hat[a]`` and std ``sigma_hat[a]`` truncated to ``[0, 1]``. A zero std
    is a point mass at ``p_hat[a]``. The average excludes the leading arm.
    """
    p, s = est.p_hat, est.sigma_hat
    A = p.shape[-1]
    if A < 2:
        raise ValueError("false-alarm probabilities need at least two arms")
    p_star = np.asarray(est.best_prob)[..., None]
    point_mass = np.where(p < p_star, 0.0, 1.0)
    degenerate = s <= 0
    tail = truncnorm_sf(np.broadcast_to(p_star, p.shape), p, np.where(degenerate, 1.0, s))
    per_arm = np.where(degenerate, point_mass, tail)
    others = np.arange(A) != np.asarray(est.best_arm)[..., None]
    mean = (per_arm * others).sum(axis=-1) / (A - 1)
    return per_arm, mean


def num_candidates(p_fa, cfg: PolicyConfig):
    """``clamp(ceil(c * ln(1 / max(p_fa, floor))), 1, n_max)``."""
    p = np.maximum(np.asarray(p_fa, dtype=float), cfg.floor)
    n = np.clip(np.ceil(-cfg.n_scale * np.log(p)), 1, cfg.cap).astype(np.int64)
    return int(n) if n.ndim == 0 else n


def _mode_of_candidates(p_hat, n, rng):
    rows = _rows(rng)
    if rows is None:
        counts = rng.multinomial(n, p_hat)
    else:
        counts = np.stack([g.multinomial(int(n[r]), p_hat[r]) for r, g in enumerate(rows)])
    return argmax_random(counts, rng)


def _sample_means(post, context, M, rng):
    return sample_posterior(post, M, rng).mean_rewards(context)


def double_sampling_select(post, context, cfg: PolicyConfig, rng) -> PolicyDecision:
    mu = _sample_means(post, context, cfg.mc_samples, rng)
    est = estimate_optimality(mu, rng)
    per_arm, p_fa = false_alarm_probs(est)
    n = num_candidates(p_fa, cfg)
    chosen = _mode_of_candidates(est.p_hat, n, rng)
    return PolicyDecision(chosen, n, p_fa, per_arm, est)


def thompson_select(post, context, rng):
    mu = _sample_means(post, context, 1, rng)
    return argmax_random(mu[..., 0, :], rng)


def ucb_level(t: int) -> float:
    if t < 1:
        raise ValueError(f"Bayes-UCB needs t >= 1, got {t}")
    return max(1.0 - 1.0 / t, UCB_Q_MIN)


def bayes_ucb_indices(post, t: int, context=None) -> np.ndarray:
    """Posterior quantile of each arm's expected reward at level ``1 - 1/t``."""
    q = ucb_level(t)
    if isinstance(post, BetaPosterior):
        return beta_quantile(q, post.alpha, post.beta)
    x = np.asarray(context, dtype=float)[..., None, :]
    loc = np.einsum("...ad,...ad->...a", post.u, np.broadcast_to(x, post.u.shape))
    Vx = np.linalg.solve(post.precision, np.broadcast_to(x, post.u.shape)[..., None])[..., 0]
    quad = np.einsum("...ad,...ad->...a", np.broadcast_to(x, post.u.shape), Vx)
    scale = np.sqrt(post.beta / post.alpha * quad)
    return student_t_quantile(q, 2.0 * post.alpha, loc, scale)


def bayes_ucb_select(post, t: int, context=None):
    """Arm with the highest Bayes-UCB index; ties go to the lowest index."""
    idx = np.asarray(bayes_ucb_indices(post, t, context))
    return idx.argmax(axis=-1)


def posterior_prior(instance, batch=(), **kw):
    """Default conjugate prior for an instance: Beta(1, 1) or NIG(0, I, 1, 1)."""
    if instance.contextual:
        return NIGPosterior.prior(instance.n_arms, instance.context_dim, batch=batch, **kw)
    return BetaPosterior.prior(instance.n_arms, batch=batch, **kw)


__all__ = [
    "ALGORITHMS",
    "OptimalityEstimate",
    "PolicyConfig",
    "PolicyDecision",
    "argmax_random",
    "bayes_ucb_indices",
    "bayes_ucb_select",
    "double_sampling_select",
    "estimate_optimality",
    "false_alarm_probs",
    "num_candidates",
    "posterior_prior",
    "thompson_select",
    "ucb_level",
]
