"""Experiment orchestration: instance construction, seed fan-out, aggregation, output."""
from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Union

import numpy as np

from .env_model import LinearMixtureMDP, load_mdp, validate_mixture
from .errors import ConfigError, InvalidModelError
from .icvar_g import FiniteKernelClass, GeneralConfig, load_kernel_class, run_icvar_g
from .icvar_l import LinearConfig, run_icvar_l
from .instance_gen import (hard_instance, make_hard_params, random_kernel_class,
                           random_linear_mixture, random_tabular)
from .results import RunResult, fmt, results_to_csv, results_to_json
from .risk_ops import _check_alpha, icvar_optimal_dp

ALGORITHMS = ("icvar_l", "icvar_g", "oracle_dp")
SOURCES = ("file", "class_file", "hard", "random", "random_tabular", "random_class")
SUMMARY_QUANTILES = (0.1, 0.25, 0.75, 0.9)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a batch of runs.

    ``instance`` is a dict with a ``source`` key:

    * ``file``: ``path`` to a model JSON
    * ``class_file``: ``path`` to a kernel-class JSON carrying ``rewards``
    * ``hard``: ``d, H, n`` plus optional ``K, c, seed, delta``; alpha defaults to the run's
    * ``random``: ``d, S, A, H, seed`` plus optional ``concentration, state_rewards``
    * ``random_tabular``: ``S, A, H, seed``
    * ``random_class``: ``N, S, A, H, seed``
    """

    algorithm: str = "icvar_l"
    instance: dict = field(default_factory=lambda: {"source": "random", "d": 4, "S": 5, "A": 3, "H": 3, "seed": 0})
    alpha: float = 0.5
    K: int = 100
    seeds: list = field(default_factory=lambda: [0])
    epsilon: Union[float, None] = None
    lam: Union[float, None] = None
    beta: Union[float, str] = "theory"
    gamma: Union[float, str] = "theory"
    grid_epsilon: Union[float, None] = None
    delta: float = 0.1
    workers: int = 1
    output_csv: Union[str, None] = None
    output_json: Union[str, None] = None
    output_summary: Union[str, None] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> "ExperimentConfig":
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        _check_alpha(self.alpha)
        if int(self.K) != self.K or self.K < 0:
            raise ConfigError(f"K must be a nonnegative integer, got {self.K}")
        self.K = int(self.K)
        if isinstance(self.seeds, int):
            self.seeds = [self.seeds]
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be nonnegative")
        if self.instance.get("source") not in SOURCES:
            raise ConfigError(f"instance source must be one of {SOURCES}, got {self.instance.get('source')!r}")
        if not 0 < self.delta <= 1:
            raise ConfigError("delta must lie in (0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- instances

def build_instance(config: ExperimentConfig):
    """Return ``(mdp, kernel_class_or_None)`` for the configured source."""
    spec = dict(config.instance)
    src = spec.pop("source")
    try:
        if src == "file":
            mdp = load_mdp(spec["path"])
            if isinstance(mdp, LinearMixtureMDP):
                report = validate_mixture(mdp)
                if not report.ok:
                    raise InvalidModelError("; ".join(report.messages))
            return mdp, None
        if src == "class_file":
            kc, extra = load_kernel_class(spec["path"])
            if "rewards" not in extra:
                raise InvalidModelError("kernel-class file needs a rewards field to define an environment")
            return kc.mdp(extra["rewards"], extra.get("initial_state", 0)), kc
        if src == "hard":
            p = make_hard_params(spec["d"], spec["H"], spec["n"], spec.get("alpha", config.alpha),
                                 spec.get("K", max(config.K, 1)), spec.get("c", 1.0),
                                 spec.get("seed", 0), spec.get("delta"))
            return hard_instance(p), None
        if src == "random":
            return random_linear_mixture(spec["d"], spec["S"], spec["A"], spec["H"], spec.get("seed", 0),
                                         concentration=spec.get("concentration", 1.0),
                                         state_rewards=spec.get("state_rewards", False)), None
        if src == "random_tabular":
            return random_tabular(spec["S"], spec["A"], spec["H"], spec.get("seed", 0)), None
        kc, mdp = random_kernel_class(spec["N"], spec["S"], spec["A"], spec["H"], spec.get("seed", 0))
        return mdp, kc
    except KeyError as exc:
        raise ConfigError(f"instance source {src!r} needs parameter {exc}") from None


def truth_class(mdp) -> FiniteKernelClass:
    """Kernel class made of the model's own per-step kernels (ICVaR-G on a known-class model)."""
    return FiniteKernelClass(np.asarray(mdp.transitions), tuple(range(mdp.horizon)))


# ---------------------------------------------------------------- running

def _oracle_run(mdp, config: ExperimentConfig, v1: float) -> RunResult:
    K = config.K
    _, _, pi = icvar_optimal_dp(mdp, config.alpha)
    return RunResult("oracle_dp", config.seeds[0], {"alpha": config.alpha, "K": K},
                     np.zeros(K), np.ones(K, dtype=bool), {}, v1,
                     extras={"policy": pi})


def _run_one(args):
    mdp, kc, config, seed = args
    if config.algorithm == "icvar_l":
        if not isinstance(mdp, LinearMixtureMDP):
            raise ConfigError("icvar_l needs a linear mixture instance")
        cfg = LinearConfig(alpha=config.alpha, K=config.K, seed=seed, epsilon=config.epsilon,
                           lam=config.lam, beta=config.beta, delta=config.delta)
        return run_icvar_l(mdp, cfg)
    cfg = GeneralConfig(alpha=config.alpha, K=config.K, seed=seed, gamma=config.gamma,
                        delta=config.delta, grid_epsilon=config.grid_epsilon)
    return run_icvar_g(mdp, kc if kc is not None else truth_class(mdp), cfg)


def run_experiment(config: ExperimentConfig, instance=None) -> list:
    """One :class:`RunResult` per seed, in seed order.

    ``instance`` optionally supplies a prebuilt ``(mdp, kernel_class)`` pair.
    Gaps are exact: each episode's greedy policy is evaluated by dynamic programming.
    """
    config.validate()
    mdp, kc = build_instance(config) if instance is None else instance
    v1 = float(icvar_optimal_dp(mdp, config.alpha)[0][0, mdp.initial_state])
    if config.algorithm == "oracle_dp":
        return [_oracle_run(mdp, config, v1)]
    jobs = [(mdp, kc, config, s) for s in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, jobs))     # map keeps submission order
    else:
        results = [_run_one(j) for j in jobs]
    for r in results:
        r.config["instance"] = dict(config.instance)
    return results


# ---------------------------------------------------------------- aggregation

@dataclass
class Summary:
    """Cross-seed statistics of cumulative regret curves."""

    algorithm: str
    seeds: list
    K: int
    mean: np.ndarray
    median: np.ndarray
    std: np.ndarray
    quantiles: dict                       # level -> curve
    optimism_frequency: float             # share of runs optimistic in every episode
    optimism_rate: np.ndarray             # per-episode share of optimistic runs
    membership_frequency: Union[float, None] = None

    def to_dict(self) -> dict:
        out = {
            "algorithm": self.algorithm, "seeds": list(self.seeds), "K": self.K,
            "mean": self.mean.tolist(), "median": self.median.tolist(), "std": self.std.tolist(),
            "quantiles": {fmt(q): c.tolist() for q, c in self.quantiles.items()},
            "optimism_frequency": self.optimism_frequency,
            "optimism_rate": self.optimism_rate.tolist(),
        }
        if self.membership_frequency is not None:
            out["membership_frequency"] = self.membership_frequency
        return out

    def to_csv(self) -> str:
        qs = sorted(self.quantiles)
        lines = [",".join(["episode", "mean", "median", "std"] + [f"q{fmt(q)}" for q in qs] + ["optimism_rate"])]
        for k in range(self.K):
            row = [k + 1, self.mean[k], self.median[k], self.std[k]]
            row += [self.quantiles[q][k] for q in qs] + [self.optimism_rate[k]]
            lines.append(",".join(fmt(v) for v in row))
        return "\n".join(lines) + "\n"


def aggregate(results, quantiles=SUMMARY_QUANTILES) -> Summary:
    if not results:
        raise ConfigError("cannot aggregate an empty result list")
    Ks = {r.num_episodes for r in results}
    if len(Ks) != 1:
        raise ConfigError(f"runs have different episode counts {sorted(Ks)}")
    curves = np.stack([r.cum_regret for r in results])
    opt = np.stack([r.optimism for r in results]).astype(float)
    member = None
    if all("membership_flag" in r.diagnostics for r in results):
        member = float(np.mean([np.all(r.diagnostics["membership_flag"]) for r in results]))
    return Summary(
        algorithm=results[0].algorithm,
        seeds=[r.seed for r in results],
        K=Ks.pop(),
        mean=curves.mean(axis=0),
        median=np.median(curves, axis=0),
        std=curves.std(axis=0),
        quantiles={q: np.quantile(curves, q, axis=0) for q in quantiles},
        optimism_frequency=float(np.mean(np.all(opt > 0, axis=1))) if opt.shape[1] else 1.0,
        optimism_rate=opt.mean(axis=0),
        membership_frequency=member,
    )


# ---------------------------------------------------------------- output

def emit(obj, fmt_: str, path=None) -> str:
    """Render results (a list of runs) or a :class:`Summary` as CSV or JSON.

    Writes to ``path`` when given and always returns the text.
    """
    if fmt_ not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt_!r}")
    if isinstance(obj, Summary):
        text = obj.to_csv() if fmt_ == "csv" else json.dumps(obj.to_dict(), indent=1)
    else:
        obj = list(obj)
        text = results_to_csv(obj) if fmt_ == "csv" else results_to_json(obj)
    if path is not None:
        Path(path).write_text(text)
    return text


def run_and_emit(config: ExperimentConfig, instance=None) -> list:
    """Run the experiment and write whichever outputs the config names."""
    t0 = time.perf_counter()
    results = run_experiment(config, instance)
    if config.output_csv:
        emit(results, "csv", config.output_csv)
    if config.output_json:
        emit(results, "json", config.output_json)
    if config.output_summary:
        emit(aggregate(results), "json", config.output_summary)
    for r in results:
        r.extras.setdefault("total_wall_clock", time.perf_counter() - t0)
    return results
