"""Regret experiments: episodes, aggregation, KL index and parameter sweeps.

Realizations are simulated in lockstep batches for speed, but realization
``r`` draws all of its randomness from two generators derived from
``(seed, r)``: one for the environment (contexts and reward noise) and one for
the policy. Batch size and worker count therefore never change results, and
every algorithm run with the same seed sees the same environment noise
(common random numbers).
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .conjugate import (
    BetaPosterior,
    NumericalError,
    beta_sequential_update,
    nig_sequential_update,
)
from .core import (
    ENV_STREAM,
    POLICY_STREAM,
    BanditInstance,
    BernoulliBandit,
    LinearGaussianBandit,
    RngStream,
    optimal_arm,
    reward_from_noise,
)
from .policy import (
    ALGORITHMS,
    PolicyConfig,
    bayes_ucb_select,
    double_sampling_select,
    posterior_prior,
    thompson_select,
)

REGRET_MODES = ("pseudo", "observed")
CHUNK = 100


@dataclass(frozen=True)
class ExperimentConfig:
    instance: BanditInstance
    algorithm: str = "double-sampling"
    horizon: int = 1500
    realizations: int = 500
    seed: int = 0
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    regret_mode: str = "pseudo"
    prior: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.horizon < 1 or self.realizations < 1:
            raise ValueError("horizon and realizations must be >= 1")
        if self.regret_mode not in REGRET_MODES:
            raise ValueError(f"regret_mode must be one of {REGRET_MODES}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class RegretTrace:
    """One realization. Arrays have length ``T``; ``p_hat``/``sigma_hat`` are ``(T, A)``."""

    optimal_mean: np.ndarray
    arms: np.ndarray
    rewards: np.ndarray
    regret: np.ndarray
    cumulative: np.ndarray
    n_candidates: Optional[np.ndarray] = None
    p_fa: Optional[np.ndarray] = None
    p_hat: Optional[np.ndarray] = None
    sigma_hat: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.regret)


def _update(post, arm, context, reward):
    if isinstance(post, BetaPosterior):
        return beta_sequential_update(post, arm, reward)
    return nig_sequential_update(post, arm, context, reward)


def run_block(config: ExperimentConfig, stream_ids: Sequence[int]) -> List[RegretTrace]:
    """Run the realizations ``stream_ids`` side by side."""
    inst = config.instance
    ids = [int(s) for s in stream_ids]
    R, T, A = len(ids), config.horizon, inst.n_arms
    streams = [RngStream(config.seed, s) for s in ids]
    env = [s.generator(ENV_STREAM) for s in streams]
    pol = [s.generator(POLICY_STREAM) for s in streams]

    if inst.contextual:
        contexts = np.stack([g.random((T, inst.context_dim)) for g in env])
        noise = np.stack([g.standard_normal((T, A)) for g in env])
    else:
        contexts = None
        noise = np.stack([g.random((T, A)) for g in env])

    post = posterior_prior(inst, batch=(R,), **config.prior)
    rows = np.arange(R)
    arms = np.empty((R, T), dtype=np.int64)
    rewards = np.empty((R, T))
    best_mean = np.empty((R, T))
    regret = np.empty((R, T))
    ds = config.algorithm == "double-sampling"
    if ds:
        n_cand = np.empty((R, T), dtype=np.int64)
        p_fa = np.empty((R, T))
        p_hat = np.empty((R, T, A))
        sigma_hat = np.empty((R, T, A))

    for t in range(1, T + 1):
        x = None if contexts is None else contexts[:, t - 1]
        try:
            if ds:
                dec = double_sampling_select(post, x, config.policy, pol)
                arm = dec.chosen
                n_cand[:, t - 1] = dec.n_candidates
                p_fa[:, t - 1] = dec.p_fa
                p_hat[:, t - 1] = dec.estimate.p_hat
                sigma_hat[:, t - 1] = dec.estimate.sigma_hat
            elif config.algorithm == "thompson":
                arm = thompson_select(post, x, pol)
            else:
                arm = bayes_ucb_select(post, t, x)
            y = reward_from_noise(inst, arm, x, noise[rows, t - 1, arm])
            post = _update(post, arm, x, y)
        except NumericalError as exc:
            raise NumericalError(
                f"{exc} ({config.algorithm}, step {t}, streams {ids[0]}..{ids[-1]}, seed {config.seed})"
            ) from exc

        means = np.broadcast_to(inst.mean_rewards(x), (R, A))
        best_mean[:, t - 1] = means.max(axis=-1)
        played = means[rows, arm]
        arms[:, t - 1] = arm
        rewards[:, t - 1] = y
        regret[:, t - 1] = best_mean[:, t - 1] - (played if config.regret_mode == "pseudo" else y)

    cumulative = np.cumsum(regret, axis=1)
    traces = []
    for r in range(R):
        tr = RegretTrace(best_mean[r], arms[r], rewards[r], regret[r], cumulative[r])
        if ds:
            tr.n_candidates, tr.p_fa, tr.p_hat, tr.sigma_hat = n_cand[r], p_fa[r], p_hat[r], sigma_hat[r]
        traces.append(tr)
    return traces


def run_episode(config: ExperimentConfig, stream_id: int) -> RegretTrace:
    return run_block(config, [stream_id])[0]


def _chunks(n: int, size: int = CHUNK):
    return [list(range(i, min(i + size, n))) for i in range(0, n, size)]


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def run_experiment(config: ExperimentConfig, workers: int = 1) -> List[RegretTrace]:
    """All ``config.realizations`` episodes, in stream order."""
    tasks = [(config, ids) for ids in _chunks(config.realizations)]
    return [tr for block in _map(run_block, tasks, workers) for tr in block]


# ----------------------------------------------------------------- aggregation


@dataclass
class AggregateCurve:
    mean: np.ndarray
    std: np.ndarray
    count: int

    @property
    def stderr(self) -> np.ndarray:
        return self.std / math.sqrt(self.count)


def aggregate(traces: Sequence) -> AggregateCurve:
    """Pointwise mean and population std of cumulative regret.

    Accepts :class:`RegretTrace` objects or plain cumulative-regret arrays.
    """
    curves = [np.asarray(getattr(tr, "cumulative", tr), dtype=float) for tr in traces]
    if len(curves) < 2:
        raise ValueError("aggregation needs at least two traces")
    if len({c.shape for c in curves}) != 1:
        raise ValueError("traces have mismatched lengths")
    stack = np.stack(curves)
    return AggregateCurve(stack.mean(axis=0), stack.std(axis=0), len(curves))


def relative_regret_diff(r_ds: float, r_other: float) -> Optional[float]:
    """``r_ds / r_other - 1``; ``None`` when the baseline regret is not positive."""
    if not r_other > 0:
        return None
    return r_ds / r_other - 1.0


# ------------------------------------------------------------------------- KL


def bernoulli_kl(p: float, q: float) -> float:
    """``KL(Bern(p) || Bern(q))`` with ``0 ln 0 = 0``; ``inf`` when unbounded."""

    def term(a, b):
        if a == 0:
            return 0.0
        if b == 0:
            return math.inf
        return a * math.log(a / b)

    return term(p, q) + term(1.0 - p, 1.0 - q)


def context_second_moment(d: int) -> np.ndarray:
    """``E[x x^T]`` for ``x`` uniform on the unit cube: ``I/12 + J/4``."""
    return np.eye(d) / 12.0 + np.full((d, d), 0.25)


def gaussian_expected_kl(w_a, s_a, w_b, s_b) -> float:
    """Context-averaged ``KL(N(x.w_a, s_a^2) || N(x.w_b, s_b^2))`` for uniform contexts."""
    delta = np.asarray(w_a, float) - np.asarray(w_b, float)
    msq = float(delta @ context_second_moment(delta.size) @ delta)
    return math.log(s_b / s_a) + (s_a**2 + msq) / (2.0 * s_b**2) - 0.5


def reference_optimal_arm(instance: BanditInstance) -> int:
    """Optimal arm, for contextual instances at the mean context ``(1/2, ..., 1/2)``."""
    if isinstance(instance, BernoulliBandit):
        return optimal_arm(instance)
    return optimal_arm(instance, np.full(instance.context_dim, 0.5))


def min_kl(instance: BanditInstance) -> float:
    """Smallest divergence from any other arm to the optimal arm."""
    if instance.n_arms < 2:
        raise ValueError("KL index needs at least two arms")
    best = reference_optimal_arm(instance)
    others = [a for a in range(instance.n_arms) if a != best]
    if isinstance(instance, BernoulliBandit):
        th = instance.theta
        return min(bernoulli_kl(th[a], th[best]) for a in others)
    w, s = instance.weights, instance.noise_std
    return min(gaussian_expected_kl(w[a], s[a], w[best], s[best]) for a in others)


# ---------------------------------------------------------------------- sweeps


def _grid_values(lower: float, upper: float, step: float) -> np.ndarray:
    if not step > 0 or upper < lower:
        raise ValueError("grid needs step > 0 and upper >= lower")
    n = int(math.floor((upper - lower) / step + 1e-9))
    return np.round(lower + step * np.arange(n + 1), 10)


@dataclass(frozen=True)
class BernoulliGrid:
    """All tuples of per-arm success probabilities on a regular grid.

    ``unique=True`` keeps one representative (sorted ascending) of every
    permutation class; relabeling arms does not change a problem.
    """

    n_arms: int = 2
    step: float = 0.05
    lower: float = 0.0
    upper: float = 1.0
    unique: bool = False

    def param_names(self) -> List[str]:
        return [f"theta_{a}" for a in range(self.n_arms)]

    def points(self):
        vals = _grid_values(self.lower, self.upper, self.step)
        for combo in itertools.product(vals, repeat=self.n_arms):
            if self.unique and list(combo) != sorted(combo):
                continue
            yield tuple(float(v) for v in combo), BernoulliBandit(np.array(combo))


@dataclass(frozen=True)
class GaussianGrid:
    """Per-arm weight vectors on a regular grid, with a noise std shared by all arms."""

    n_arms: int = 2
    dim: int = 2
    w_step: float = 0.1
    w_lower: float = -1.0
    w_upper: float = 1.0
    sigma_step: float = 0.1
    sigma_lower: float = 0.1
    sigma_upper: float = 1.0
    unique: bool = False

    def param_names(self) -> List[str]:
        names = [f"w_{a}_{i}" for a in range(self.n_arms) for i in range(self.dim)]
        return names + ["sigma"]

    def points(self):
        wv = _grid_values(self.w_lower, self.w_upper, self.w_step)
        sv = _grid_values(self.sigma_lower, self.sigma_upper, self.sigma_step)
        vectors = list(itertools.product(wv, repeat=self.dim))
        for arms in itertools.product(vectors, repeat=self.n_arms):
            if self.unique and list(arms) != sorted(arms):
                continue
            for s in sv:
                params = tuple(float(v) for vec in arms for v in vec) + (float(s),)
                yield params, LinearGaussianBandit(np.array(arms), np.full(self.n_arms, s))


@dataclass
class SweepRow:
    params: Tuple[float, ...]
    kl: float
    regret: Dict[str, float]
    delta_ts: Optional[float]
    delta_bucb: Optional[float]

    @property
    def defined(self) -> bool:
        return self.delta_ts is not None and self.delta_bucb is not None


@dataclass
class SweepResult:
    param_names: List[str]
    eval_t: int
    rows: List[SweepRow]


def _all_arms_equal(instance: BanditInstance) -> bool:
    if isinstance(instance, BernoulliBandit):
        return bool(np.all(instance.theta == instance.theta[0]))
    return bool(np.all(instance.weights == instance.weights[0]))


def final_regret_block(config: ExperimentConfig, stream_ids, eval_t: int) -> np.ndarray:
    if config.regret_mode == "pseudo" and _all_arms_equal(config.instance):
        # every arm is optimal at every step, so pseudo-regret is identically zero
        return np.zeros(len(stream_ids))
    return np.array([tr.cumulative[eval_t - 1] for tr in run_block(config, stream_ids)])


def run_sweep(grid, config: ExperimentConfig, eval_t: Optional[int] = None, workers: int = 1) -> SweepResult:
    """Compare the three algorithms on every grid point with matched seeds.

    Rows are sorted by KL index (ascending; grid order breaks ties).
    """
    eval_t = config.horizon if eval_t is None else int(eval_t)
    if not 1 <= eval_t <= config.horizon:
        raise ValueError(f"eval_t must lie in [1, {config.horizon}]")
    points = list(grid.points())
    if not points:
        raise ValueError("empty sweep grid")

    tasks, keys = [], []
    for i, (_, inst) in enumerate(points):
        for algo in ALGORITHMS:
            cfg = replace(config, instance=inst, algorithm=algo)
            for ids in _chunks(config.realizations):
                tasks.append((cfg, ids, eval_t))
                keys.append((i, algo))
    results = _map(final_regret_block, tasks, workers)

    finals: Dict[tuple, list] = {}
    for key, vals in zip(keys, results):
        finals.setdefault(key, []).append(vals)

    rows = []
    for i, (params, inst) in enumerate(points):
        reg = {algo: float(np.concatenate(finals[(i, algo)]).mean()) for algo in ALGORITHMS}
        ds = reg["double-sampling"]
        rows.append(SweepRow(
            params, min_kl(inst), reg,
            relative_regret_diff(ds, reg["thompson"]),
            relative_regret_diff(ds, reg["bayes-ucb"]),
        ))
    rows.sort(key=lambda row: row.kl)
    return SweepResult(grid.param_names(), eval_t, rows)
