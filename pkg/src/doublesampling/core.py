"""Ground-truth bandit environments, reward simulation and interaction history.

Two reward models are supported:

* :class:`BernoulliBandit` -- binary rewards with per-arm success probability.
* :class:`LinearGaussianBandit` -- rewards ``N(x @ w_a, sigma_a**2)`` that depend
  on a d-dimensional context ``x`` drawn fresh every step.

Arms are indexed from 0. Time indices in :class:`History` are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

# Purposes for independent generators derived from the same (seed, stream_id).
ENV_STREAM = 0
POLICY_STREAM = 1


@dataclass(frozen=True)
class BernoulliBandit:
    theta: np.ndarray

    contextual = False
    context_dim = 0

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1 or theta.size < 2:
            raise ValueError("a Bernoulli bandit needs a vector of at least 2 arm probabilities")
        if not np.all((theta >= 0.0) & (theta <= 1.0)):
            raise ValueError(f"arm probabilities must lie in [0, 1], got {theta.tolist()}")
        object.__setattr__(self, "theta", theta)

    @property
    def n_arms(self) -> int:
        return self.theta.size

    def mean_rewards(self, context=None) -> np.ndarray:
        """Expected reward of every arm, shape ``(A,)``."""
        if context is not None and np.size(context) > 0:
            raise ValueError("Bernoulli bandits take no context")
        return self.theta


@dataclass(frozen=True)
class LinearGaussianBandit:
    weights: np.ndarray
    noise_std: np.ndarray

    contextual = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] < 2 or w.shape[1] < 1:
            raise ValueError("weights must be an (A, d) array with A >= 2 and d >= 1")
        s = np.broadcast_to(np.asarray(self.noise_std, dtype=float), (w.shape[0],)).copy()
        if not np.all(s > 0):
            raise ValueError(f"noise standard deviations must be positive, got {s.tolist()}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "noise_std", s)

    @property
    def n_arms(self) -> int:
        return self.weights.shape[0]

    @property
    def context_dim(self) -> int:
        return self.weights.shape[1]

    def mean_rewards(self, context=None) -> np.ndarray:
        """Expected reward ``x @ w_a`` of every arm.

        ``context`` may carry leading batch dimensions, ``(..., d) -> (..., A)``.
        """
        if context is None:
            raise ValueError("a contextual instance needs a context")
        x = np.asarray(context, dtype=float)
        if x.shape[-1:] != (self.context_dim,):
            raise ValueError(f"context dimension {x.shape[-1:]} does not match d={self.context_dim}")
        return x @ self.weights.T


BanditInstance = Union[BernoulliBandit, LinearGaussianBandit]


def _check_arm(instance: BanditInstance, arm: int) -> int:
    arm = int(arm)
    if not 0 <= arm < instance.n_arms:
        raise IndexError(f"arm {arm} out of range for {instance.n_arms} arms")
    return arm


def expected_reward(instance: BanditInstance, arm: int, context=None) -> float:
    arm = _check_arm(instance, arm)
    return float(instance.mean_rewards(context)[arm])


def optimal_arm(instance: BanditInstance, context=None) -> int:
    """Arm with the highest expected reward; ties go to the lowest index."""
    return int(np.argmax(instance.mean_rewards(context)))


def reward_from_noise(instance: BanditInstance, arm, context, noise):
    """Map a standard noise draw to a reward.

    Bernoulli noise is ``U(0, 1)`` and the reward is ``noise < theta_a``;
    Gaussian noise is ``N(0, 1)`` and the reward is ``x @ w_a + sigma_a * noise``.
    Works elementwise on arrays of arms/noise (contexts shaped ``(..., d)``).
    """
    arm = np.asarray(arm)
    if isinstance(instance, BernoulliBandit):
        return (np.asarray(noise) < instance.theta[arm]).astype(float)
    x = np.asarray(context, dtype=float)
    mean = np.einsum("...d,...d->...", x, instance.weights[arm])
    return mean + instance.noise_std[arm] * np.asarray(noise)


def draw_reward(instance: BanditInstance, arm: int, context, rng: np.random.Generator) -> float:
    arm = _check_arm(instance, arm)
    if isinstance(instance, BernoulliBandit):
        if context is not None and np.size(context) > 0:
            raise ValueError("Bernoulli bandits take no context")
        return float(reward_from_noise(instance, arm, None, rng.random()))
    instance.mean_rewards(context)  # validates the context
    return float(reward_from_noise(instance, arm, context, rng.standard_normal()))


def generate_context(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform, uncorrelated context: ``d`` independent ``U(0, 1)`` entries."""
    if d < 1:
        raise ValueError(f"context dimension must be >= 1, got {d}")
    return rng.random(d)


@dataclass(frozen=True)
class RngStream:
    """Named random stream ``(seed, stream_id)``.

    Generators are derived with :class:`numpy.random.SeedSequence` using the
    stream id (and a purpose tag) as spawn key, so each realization owns its
    randomness regardless of where or in which order it runs.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self, purpose: int = ENV_STREAM) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), int(purpose)))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass
class History:
    """Append-only record of played arms, contexts and rewards."""

    arms: list = field(default_factory=list)
    contexts: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    context_dim: Optional[int] = None

    def __len__(self):
        return len(self.arms)

    def arm_times(self, arm: int) -> set:
        """The set ``t_a`` of 1-based time indices at which ``arm`` was played."""
        return {t for t, a in enumerate(self.arms, start=1) if a == arm}

    def arm_data(self, arm: int):
        """Contexts ``(n, d)`` and rewards ``(n,)`` observed for one arm."""
        idx = [i for i, a in enumerate(self.arms) if a == arm]
        y = np.asarray([self.rewards[i] for i in idx], dtype=float)
        d = self.context_dim or 0
        X = np.asarray([self.contexts[i] for i in idx], dtype=float).reshape(len(idx), d)
        return X, y


def record(history: History, arm: int, context, reward: float) -> History:
    arm = int(arm)
    if arm < 0:
        raise IndexError(f"arm index must be non-negative, got {arm}")
    x = np.empty(0) if context is None else np.asarray(context, dtype=float).ravel()
    if history.context_dim is None:
        history.context_dim = x.size
    elif x.size != history.context_dim:
        raise ValueError(f"context dimension {x.size} does not match history's {history.context_dim}")
    history.arms.append(arm)
    history.contexts.append(x)
    history.rewards.append(float(reward))
    return history


def history_from_sequences(arms: Sequence[int], rewards: Sequence[float], contexts=None) -> History:
    h = History()
    for i, (a, y) in enumerate(zip(arms, rewards)):
        record(h, a, None if contexts is None else contexts[i], y)
    return h
