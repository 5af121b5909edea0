"""Command-line front end: ``dsbandit run`` and ``dsbandit sweep``.

Configuration is a flat ``key = value`` text file. Values are integers,
floats, booleans (``true``/``false``), bare strings, or bracketed lists
(``theta = [0.4, 0.8]``, ``weights = [[0.4, 0.4], [0.8, 0.8]]``). ``#`` starts
a comment. Precedence: command-line flags > ``--set key=value`` > file > defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import subprocess
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .bench import (
    REGRET_MODES,
    BernoulliGrid,
    ExperimentConfig,
    GaussianGrid,
    aggregate,
    run_experiment,
    run_sweep,
)
from .conjugate import NumericalError
from .core import BernoulliBandit, LinearGaussianBandit
from .policy import ALGORITHMS, PolicyConfig

MODELS = ("bernoulli", "linear-gaussian")


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    """Fixed 17-significant-digit rendering so reruns are byte-identical."""
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


# ----------------------------------------------------------------- config keys


def _positive_int(v):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_int(v):
    if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < 2**64:
        raise ValueError("must be an integer in [0, 2^64)")
    return v


def _positive_float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise ValueError("must be a positive number")
    return float(v)


def _number(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError("must be a number")
    return float(v)


def _unit_interval_open(v):
    v = _number(v)
    if not 0 < v < 1:
        raise ValueError("must lie in (0, 1)")
    return v


def _boolean(v):
    if not isinstance(v, bool):
        raise ValueError("must be true or false")
    return v


def _choice(options):
    def check(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return check


def _theta(v):
    if not isinstance(v, list):
        raise ValueError("must be a list of probabilities")
    out = [_number(x) for x in v]
    bad = [x for x in out if not 0.0 <= x <= 1.0]
    if bad:
        raise ValueError(f"entries must lie in [0, 1], got {bad}")
    if len(out) < 2:
        raise ValueError("needs at least two arms")
    return out


def _weights(v):
    if not isinstance(v, list) or len(v) < 2 or not all(isinstance(r, list) and r for r in v):
        raise ValueError("must be a list of at least two weight vectors")
    rows = [[_number(x) for x in r] for r in v]
    if len({len(r) for r in rows}) != 1:
        raise ValueError("all weight vectors must have the same dimension")
    return rows


def _noise_std(v):
    vals = v if isinstance(v, list) else [v]
    out = [_positive_float(x) for x in vals]
    return out if isinstance(v, list) else out[0]


def _string(v):
    if not isinstance(v, str):
        raise ValueError("must be a string")
    return v


@dataclass(frozen=True)
class Key:
    check: Callable[[Any], Any]
    default: Any = None
    help: str = ""


KEYS: Dict[str, Key] = {
    "model": Key(_choice(MODELS), "bernoulli", "reward model"),
    "theta": Key(_theta, None, "Bernoulli success probabilities"),
    "weights": Key(_weights, None, "linear-Gaussian weight vectors, one per arm"),
    "noise_std": Key(_noise_std, 0.2, "linear-Gaussian noise std (scalar or per arm)"),
    "algorithm": Key(_choice(("all",) + ALGORITHMS), "all", "policy to run"),
    "horizon": Key(_positive_int, 1500, "steps per episode"),
    "realizations": Key(_positive_int, 500, "independent episodes"),
    "seed": Key(_nonneg_int, 0, "master seed"),
    "mc_samples": Key(_positive_int, 1000, "posterior samples per step (M)"),
    "n_scale": Key(_positive_float, 1.0, "candidate-count scale c"),
    "p_fa_floor": Key(_unit_interval_open, None, "false-alarm floor (default 1/M)"),
    "n_max": Key(_positive_int, None, "candidate-count cap (default M)"),
    "regret_mode": Key(_choice(REGRET_MODES), "pseudo", "pseudo or observed regret"),
    "prior_alpha": Key(_positive_float, 1.0, "prior alpha (Beta or NIG)"),
    "prior_beta": Key(_positive_float, 1.0, "prior beta (Beta or NIG)"),
    "prior_v_scale": Key(_positive_float, 1.0, "NIG prior V = scale * I"),
    "threads": Key(_positive_int, 1, "worker processes"),
    "out": Key(_string, "results", "output directory"),
    # sweep
    "n_arms": Key(_positive_int, 2, "arms per sweep instance"),
    "context_dim": Key(_positive_int, 2, "context dimension for linear-Gaussian sweeps"),
    "grid_step": Key(_positive_float, None, "theta / weight grid step"),
    "grid_lower": Key(_number, None, "grid lower end"),
    "grid_upper": Key(_number, None, "grid upper end"),
    "sigma_step": Key(_positive_float, None, "noise-std grid step"),
    "sigma_lower": Key(_positive_float, None, "noise-std grid lower end"),
    "sigma_upper": Key(_positive_float, None, "noise-std grid upper end"),
    "unique": Key(_boolean, True, "drop arm permutations of the same instance"),
    "full_grid": Key(_boolean, False, "use the full published grids"),
    "eval_t": Key(_positive_int, None, "step at which regret is compared (default horizon)"),
}

# (desk-scale, full) sweep grid defaults
GRID_DEFAULTS = {
    "bernoulli": (
        dict(grid_step=0.2, grid_lower=0.0, grid_upper=1.0),
        dict(grid_step=0.05, grid_lower=0.0, grid_upper=1.0),
    ),
    "linear-gaussian": (
        dict(grid_step=1.0, grid_lower=-1.0, grid_upper=1.0, sigma_step=0.45, sigma_lower=0.1, sigma_upper=1.0),
        dict(grid_step=0.1, grid_lower=-1.0, grid_upper=1.0, sigma_step=0.1, sigma_lower=0.1, sigma_upper=1.0),
    ),
}


def parse_value(text: str):
    text = text.strip()
    if not text:
        raise ValueError("missing value")
    if text.startswith("["):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed list: {exc.msg}") from None
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


@dataclass
class Settings:
    """Fully resolved configuration plus where each value came from."""

    values: Dict[str, Any]
    sources: Dict[str, str] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def where(self, key) -> str:
        return self.sources.get(key, "config")

    def instance(self):
        if self["model"] == "bernoulli":
            if self["theta"] is None:
                raise ConfigError(f"{self.where('model')}: model=bernoulli needs theta")
            return BernoulliBandit(np.array(self["theta"]))
        if self["weights"] is None:
            raise ConfigError(f"{self.where('model')}: model=linear-gaussian needs weights")
        w = np.array(self["weights"])
        s = self["noise_std"]
        if isinstance(s, list) and len(s) != len(w):
            raise ConfigError(f"{self.where('noise_std')}: noise_std needs one entry per arm")
        return LinearGaussianBandit(w, np.broadcast_to(np.asarray(s, float), (len(w),)))

    def policy(self) -> PolicyConfig:
        return PolicyConfig(
            mc_samples=self["mc_samples"],
            n_scale=self["n_scale"],
            p_fa_floor=self["p_fa_floor"],
            n_max=self["n_max"],
        )

    def prior(self) -> Dict[str, float]:
        kw = dict(alpha0=self["prior_alpha"], beta0=self["prior_beta"])
        if self["model"] == "linear-gaussian":
            kw["v_scale"] = self["prior_v_scale"]
        return kw

    def experiment(self, algorithm: str, instance=None) -> ExperimentConfig:
        return ExperimentConfig(
            instance=self.instance() if instance is None else instance,
            algorithm=algorithm,
            horizon=self["horizon"],
            realizations=self["realizations"],
            seed=self["seed"],
            policy=self.policy(),
            regret_mode=self["regret_mode"],
            prior=self.prior(),
        )

    def algorithms(self) -> Tuple[str, ...]:
        return ALGORITHMS if self["algorithm"] == "all" else (self["algorithm"],)

    def grid(self):
        model = self["model"]
        g = dict(GRID_DEFAULTS[model][1 if self["full_grid"] else 0])
        for k in list(g):
            if self[k] is not None:
                g[k] = self[k]
        if model == "bernoulli":
            return BernoulliGrid(self["n_arms"], g["grid_step"], g["grid_lower"], g["grid_upper"], self["unique"])
        return GaussianGrid(
            self["n_arms"], self["context_dim"], g["grid_step"], g["grid_lower"], g["grid_upper"],
            g["sigma_step"], g["sigma_lower"], g["sigma_upper"], self["unique"],
        )

    def echo(self) -> Dict[str, Any]:
        return dict(sorted(self.values.items()))


def _apply(values, sources, key, raw, origin):
    if key not in KEYS:
        raise ConfigError(f"{origin}: unknown key {key!r}")
    try:
        values[key] = None if raw is None else KEYS[key].check(raw)
    except ValueError as exc:
        raise ConfigError(f"{origin}: {key} {exc}") from None
    sources[key] = origin


def read_config_file(path) -> List[Tuple[str, Any, str]]:
    """``(key, value, 'file:line')`` entries of a key-value config file."""
    entries = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        origin = f"{path}:{lineno}"
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{origin}: expected 'key = value', got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        try:
            value = parse_value(raw)
        except ValueError as exc:
            raise ConfigError(f"{origin}: {key} {exc}") from None
        entries.append((key, value, origin))
    return entries


def parse_config(path=None, overrides: Optional[Dict[str, Any]] = None, sets: Optional[List[str]] = None,
                 need_instance: bool = True) -> Settings:
    """Resolve a configuration: defaults, then file, then ``--set`` pairs, then flags.

    Sweeps build their own instances, so they pass ``need_instance=False``.
    """
    values = {k: spec.default for k, spec in KEYS.items()}
    sources = {k: "default" for k in KEYS}
    if path is not None:
        for key, value, origin in read_config_file(path):
            _apply(values, sources, key, value, origin)
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set {item}: expected KEY=VALUE")
        key, raw = (p.strip() for p in item.split("=", 1))
        try:
            value = parse_value(raw)
        except ValueError as exc:
            raise ConfigError(f"--set {key}: {exc}") from None
        _apply(values, sources, key, value, f"--set {key}")
    for key, value in (overrides or {}).items():
        if value is not None:
            _apply(values, sources, key, value, f"--{key.replace('_', '-')}")
    settings = Settings(values, sources)
    if need_instance:
        settings.instance()  # cross-key checks
    return settings


# --------------------------------------------------------------------- outputs


def version_string() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_csv(path: Path, header: List[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


class Manifest:
    """``manifest.json``: written before any result file, finalized at the end."""

    def __init__(self, out: Path, command: str, settings: Settings, argv):
        self.path = out / "manifest.json"
        self.data = {
            "command": command,
            "version": version_string(),
            "seed": settings["seed"],
            "config": settings.echo(),
            "argv": list(argv),
            "started": _now(),
            "finished": None,
            "status": "running",
            "outputs": [],
        }
        self._write()

    def add(self, path: Path):
        self.data["outputs"].append(path.name)

    def finish(self, status="ok"):
        self.data["finished"] = _now()
        self.data["status"] = status
        self._write()

    def _write(self):
        self.path.write_text(json.dumps(self.data, indent=2) + "\n")


def _prepare_out(settings: Settings) -> Path:
    out = Path(settings["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable ({exc.strerror})") from None
    return out


def cmd_run(settings: Settings, argv=()) -> List[Path]:
    """Run every configured algorithm; write regret curves and diagnostics."""
    out = _prepare_out(settings)
    manifest = Manifest(out, "run", settings, argv)
    written = []
    try:
        for algo in settings.algorithms():
            cfg = settings.experiment(algo)
            traces = run_experiment(cfg, workers=settings["threads"])
            T = cfg.horizon
            if len(traces) >= 2:
                curve = aggregate(traces)
                mean, std = curve.mean, curve.std
            else:
                mean, std = traces[0].cumulative, np.zeros(T)
            path = out / f"regret_{algo}.csv"
            write_csv(path, ["t", "mean_regret", "std_regret"],
                      ([t + 1, _fmt(mean[t]), _fmt(std[t])] for t in range(T)))
            manifest.add(path)
            written.append(path)
            if algo == "double-sampling":
                A = cfg.instance.n_arms
                n = np.mean([tr.n_candidates for tr in traces], axis=0)
                pfa = np.mean([tr.p_fa for tr in traces], axis=0)
                ph = np.mean([tr.p_hat for tr in traces], axis=0)
                path = out / "diagnostics.csv"
                write_csv(
                    path,
                    ["t", "mean_N", "mean_p_fa"] + [f"mean_p_hat_{a}" for a in range(A)],
                    ([t + 1, _fmt(n[t]), _fmt(pfa[t])] + [_fmt(v) for v in ph[t]] for t in range(T)),
                )
                manifest.add(path)
                written.append(path)
    except Exception:
        manifest.finish("failed")
        raise
    manifest.finish()
    return written


def cmd_sweep(settings: Settings, argv=()) -> List[Path]:
    """Relative regret of double sampling vs both baselines over a parameter grid."""
    out = _prepare_out(settings)
    manifest = Manifest(out, "sweep", settings, argv)
    try:
        grid = settings.grid()
        base = settings.experiment("double-sampling", instance=next(iter(grid.points()))[1])
        result = run_sweep(grid, base, eval_t=settings["eval_t"], workers=settings["threads"])
        path = out / "sweep.csv"
        write_csv(
            path,
            result.param_names + ["kl", "delta_ts", "delta_bucb", "defined"],
            ([_fmt(p) for p in row.params] + [_fmt(row.kl), _fmt(row.delta_ts), _fmt(row.delta_bucb),
                                              int(row.defined)] for row in result.rows),
        )
        manifest.add(path)
    except Exception:
        manifest.finish("failed")
        raise
    manifest.finish()
    return [path]


# ------------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsbandit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (("run", "regret curves for one instance"), ("sweep", "relative regret over a grid")):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", help="key-value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--realizations", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--algorithm", choices=("all",) + ALGORITHMS)
        p.add_argument("--mc-samples", type=int, dest="mc_samples")
        p.add_argument("--out")
        p.add_argument("--regret-mode", choices=REGRET_MODES, dest="regret_mode")
        p.add_argument("--threads", type=int, help="worker processes (results do not depend on it)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key; repeatable")
    return parser


FLAG_KEYS = ("seed", "realizations", "horizon", "algorithm", "mc_samples", "out", "regret_mode", "threads")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        flags = {k: getattr(args, k) for k in FLAG_KEYS}
        settings = parse_config(args.config, flags, args.set, need_instance=args.command == "run")
        files = (cmd_run if args.command == "run" else cmd_sweep)(settings, argv)
    except ConfigError as exc:
        print(f"dsbandit: config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"dsbandit: numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"dsbandit: {exc}", file=sys.stderr)
        return 1
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
