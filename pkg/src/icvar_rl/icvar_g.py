"""ICVaR-G over a finite class of candidate transition kernels.

Each kernel is an array of shape (S, A, S').  For a function ``f`` on states
the class induces ``z_P(s, a, f) = sum_s' P(s'|s,a) f(s')``; estimation,
confidence sets and the exploration diameter are all phrased through ``z``.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .env_model import TabularMDP, sample_episode
from .errors import BudgetExceededError, ConfigError, InvalidModelError
from .results import RunResult
from .risk_ops import EpsNet, _check_alpha, cvar_rows, icvar_optimal_dp, icvar_policy_eval
from .seeding import make_rng


@dataclass(frozen=True)
class FiniteKernelClass:
    kernels: np.ndarray            # (N, S, A, S')
    true_index: tuple              # one class index per step

    def __post_init__(self):
        P = np.array(self.kernels, dtype=float)
        P.setflags(write=False)
        object.__setattr__(self, "kernels", P)
        object.__setattr__(self, "true_index", tuple(int(i) for i in self.true_index))
        if P.ndim != 4 or P.shape[1] != P.shape[3] or P.shape[0] == 0:
            raise InvalidModelError(f"kernels must have shape (N, S, A, S), got {P.shape}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=-1) - 1) > 1e-12):
            raise InvalidModelError("every kernel row must be a probability vector")
        if any(not 0 <= i < P.shape[0] for i in self.true_index):
            raise InvalidModelError("true_index entries must index the class")

    @property
    def size(self) -> int:
        return self.kernels.shape[0]

    @property
    def horizon(self) -> int:
        return len(self.true_index)

    def true_transitions(self) -> np.ndarray:
        return self.kernels[list(self.true_index)]

    def mdp(self, rewards, initial_state: int = 0) -> TabularMDP:
        return TabularMDP(self.true_transitions(), rewards, initial_state)

    def to_dict(self) -> dict:
        return {"kernels": self.kernels.tolist(), "true_index": list(self.true_index)}


def load_kernel_class(path):
    """Read a kernel-class file; returns the class and the optional extra fields."""
    data = json.loads(Path(path).read_text())
    try:
        kc = FiniteKernelClass(data["kernels"], data["true_index"])
    except KeyError as exc:
        raise InvalidModelError(f"missing field {exc}") from None
    return kc, {k: v for k, v in data.items() if k not in ("kernels", "true_index")}


# ---------------------------------------------------------------- z-function machinery

def z_value(kernel: np.ndarray, s: int, a: int, f) -> float:
    return float(kernel[s, a] @ np.asarray(f, dtype=float))


def dist_metric(P: np.ndarray, P2: np.ndarray, X) -> float:
    """Squared gap between the two kernels' ``z`` values at ``X = (s, a, f)``."""
    s, a, f = X
    return (z_value(P, s, a, f) - z_value(P2, s, a, f)) ** 2


@dataclass
class StepHistory:
    """Observations for one step: ``X_i = (s_i, a_i, f_i)`` and targets ``f_i(s'_i)``."""

    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    functions: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    estimates: list = field(default_factory=list)   # class index in use when X_i was recorded

    def __len__(self):
        return len(self.targets)

    def z_matrix(self, kernels: np.ndarray) -> np.ndarray:
        """``z_P(X_i)`` for every kernel and record, shape (N, n)."""
        if not self.targets:
            return np.zeros((kernels.shape[0], 0))
        rows = kernels[:, self.states, self.actions, :]              # (N, n, S')
        return np.einsum("knt,nt->kn", rows, np.asarray(self.functions))


def fit_least_squares(kclass: FiniteKernelClass, history: StepHistory) -> int:
    """Kernel minimizing the summed squared error to the observed targets."""
    Z = history.z_matrix(kclass.kernels)
    sse = ((np.asarray(history.targets)[None, :] - Z) ** 2).sum(axis=1)
    return int(np.argmin(sse))


def confidence_set(kclass: FiniteKernelClass, history: StepHistory, estimates, gamma: float) -> np.ndarray:
    """Indices whose summed squared ``z`` gap to the per-round estimates is at most ``gamma^2``."""
    if gamma < 0:
        raise ConfigError("gamma must be nonnegative")
    Z = history.z_matrix(kclass.kernels)
    est = np.asarray(estimates, dtype=int)
    if est.shape != (len(history),):
        raise ValueError("need one estimate index per history record")
    centers = Z[est, np.arange(len(history))]
    dist = ((Z - centers[None, :]) ** 2).sum(axis=1)
    return np.flatnonzero(dist <= gamma**2)


def gamma_from_theory(class_size: int, H: int, K: int, delta: float) -> float:
    if not 0 < delta <= 1:
        raise ConfigError(f"delta must lie in (0, 1], got {delta}")
    return 4 * H**2 * (2 * np.log(2 * H * class_size / delta) + 1 + np.sqrt(np.log(5 * K**2 / delta)))


def candidate_points(V_next, H: float, grid=None) -> np.ndarray:
    """Grid plus 0, H and every value of ``V_next`` inside [0, H]."""
    pts = [np.array([0.0, float(H)]), np.clip(np.asarray(V_next, dtype=float), 0.0, H)]
    if grid is not None:
        pts.append(grid.points if isinstance(grid, EpsNet) else np.asarray(grid, dtype=float))
    return np.unique(np.concatenate(pts))


def x_maximizing_diameter(kernels: np.ndarray, V_next, s: int, a: int, H: float, grid=None):
    """Threshold ``x`` maximizing ``max z - min z`` over the given kernels.

    Each ``z`` is piecewise linear in ``x`` with kinks only at values of
    ``V_next``, so evaluating at those values plus ``0`` and ``H`` gives the exact
    maximum over ``[0, H]``.  Returns ``(x, diameter)``; ties go to the smallest ``x``.
    """
    x = candidate_points(V_next, H, grid)
    F = np.maximum(x[:, None] - np.asarray(V_next, dtype=float)[None, :], 0.0)   # (m, S')
    Z = kernels[:, s, a, :] @ F.T                                                # (N, m)
    diam = Z.max(axis=0) - Z.min(axis=0)
    j = int(np.argmax(diam))
    return float(x[j]), float(max(diam[j], 0.0))


def optimistic_cvar_sup(kernels: np.ndarray, V_next, s: int, a: int, alpha: float) -> float:
    rows = kernels[:, s, a, :]
    return float(np.max(cvar_rows(rows, np.asarray(V_next, dtype=float), alpha)))


# ---------------------------------------------------------------- the learner

@dataclass
class GeneralConfig:
    alpha: float
    K: int
    seed: int = 0
    gamma: Union[float, str] = "theory"
    delta: float = 0.1
    grid_epsilon: Union[float, None] = None
    keep_history: bool = False

    def resolved(self, kclass: FiniteKernelClass) -> dict:
        alpha = _check_alpha(self.alpha)
        if self.K < 0:
            raise ConfigError("K must be nonnegative")
        H = kclass.horizon
        if self.gamma == "theory":
            gamma = gamma_from_theory(kclass.size, H, max(self.K, 1), self.delta)
        else:
            gamma = float(self.gamma)
            if gamma < 0:
                raise ConfigError("gamma must be nonnegative")
        return {"alpha": alpha, "K": int(self.K), "seed": int(self.seed), "gamma": float(gamma),
                "gamma_mode": "theory" if self.gamma == "theory" else "fixed", "delta": self.delta,
                "grid_epsilon": self.grid_epsilon}


@dataclass
class GeneralLearnerState:
    """Per-step estimates and confidence sets plus running distance sums."""

    sse: np.ndarray          # (H, N) least-squares objective per kernel
    conf_dist: np.ndarray    # (H, N) summed squared gap to per-round estimates
    estimate: np.ndarray     # (H,) current least-squares index
    members: list            # per step: sorted array of confidence-set indices
    gamma: float
    histories: list = None

    @classmethod
    def fresh(cls, N: int, H: int, gamma: float, keep_history: bool = False):
        return cls(np.zeros((H, N)), np.zeros((H, N)), np.zeros(H, dtype=np.int64),
                   [np.arange(N) for _ in range(H)], gamma,
                   [StepHistory() for _ in range(H)] if keep_history else None)

    def record(self, h: int, kernels: np.ndarray, s: int, a: int, f: np.ndarray, target: float):
        z = kernels[:, s, a, :] @ f
        if self.histories is not None:
            hist = self.histories[h]
            hist.states.append(s)
            hist.actions.append(a)
            hist.functions.append(f.copy())
            hist.targets.append(target)
            hist.estimates.append(int(self.estimate[h]))
        self.conf_dist[h] += (z - z[self.estimate[h]]) ** 2
        self.sse[h] += (target - z) ** 2
        self.estimate[h] = int(np.argmin(self.sse[h]))
        inside = np.flatnonzero(self.conf_dist[h] <= self.gamma**2)
        # the per-round construction can in principle exclude everything
        self.members[h] = inside if inside.size else np.array([self.estimate[h]])


def run_icvar_g(mdp: TabularMDP, kclass: FiniteKernelClass, config: GeneralConfig,
                rng: np.random.Generator | None = None) -> RunResult:
    """Run ICVaR-G for ``config.K`` episodes and score each episode exactly.

    Diagnostics per episode: ``membership_flag`` (truth inside every step's
    confidence set), ``deviation_ok`` (optimistic minus exact backup within
    ``[0, g / alpha]`` at visited pairs where the truth is a member),
    ``optimism_all`` (optimistic values dominate the optimal ones at every step
    and state), ``g_sq_sum`` and ``conf_set_size`` per step.
    """
    t0 = time.perf_counter()
    cfg = config.resolved(kclass)
    alpha, K = cfg["alpha"], cfg["K"]
    H, S = mdp.horizon, mdp.num_states
    if kclass.horizon != H or kclass.kernels.shape[1:3] != (S, mdp.num_actions):
        raise InvalidModelError("kernel class does not match the environment's dimensions")
    if not np.allclose(kclass.true_transitions(), mdp.transitions, atol=1e-12, rtol=0):
        raise InvalidModelError("environment transitions are not the class's true kernels")
    rng = make_rng(cfg["seed"]) if rng is None else rng
    grid = EpsNet(cfg["grid_epsilon"], H) if cfg["grid_epsilon"] else None
    kernels = kclass.kernels
    state = GeneralLearnerState.fresh(kclass.size, H, cfg["gamma"], config.keep_history)

    V_star = icvar_optimal_dp(mdp, alpha)[0]
    s1 = mdp.initial_state
    v1 = V_star[0, s1]
    gap_cache = {}

    gaps = np.zeros(K)
    optimism = np.zeros(K, dtype=bool)
    optimism_all = np.zeros(K, dtype=bool)
    membership = np.zeros(K, dtype=bool)
    deviation_ok = np.ones(K, dtype=bool)
    g_sq = np.zeros(K)
    set_size = np.zeros((K, H), dtype=np.int64)
    for k in range(K):
        V = np.zeros((H + 1, S))
        pi = np.zeros((H, S), dtype=np.int64)
        sup_tables = [None] * H
        for h in range(H - 1, -1, -1):
            idx = state.members[h]
            sup = cvar_rows(kernels[idx], V[h + 1], alpha).max(axis=0)      # (S, A)
            Q = mdp.rewards[h] + sup
            pi[h] = np.argmax(Q, axis=1)
            V[h] = np.minimum(Q.max(axis=1), H)
            sup_tables[h] = sup
            set_size[k, h] = idx.size
        member_h = [kclass.true_index[h] in state.members[h] for h in range(H)]
        membership[k] = all(member_h)
        optimism[k] = V[0, s1] >= v1 - 1e-9
        optimism_all[k] = bool(np.all(V >= V_star - 1e-9))

        ep = sample_episode(mdp, pi, rng, episode=k)
        for st in ep.steps:
            h, s, a = st.h, st.state, st.action
            conf = kernels[state.members[h]]
            x, g = x_maximizing_diameter(conf, V[h + 1], s, a, H, grid)
            g_sq[k] += g * g
            if member_h[h]:
                exact = cvar_rows(mdp.transitions[h, s, a], V[h + 1], alpha)
                dev = sup_tables[h][s, a] - exact
                if dev < -1e-9 or dev > g / alpha + 1e-9:
                    deviation_ok[k] = False
            f = np.maximum(x - V[h + 1], 0.0)
            state.record(h, kernels, s, a, f, f[st.next_state])

        key = pi.tobytes()
        if key not in gap_cache:
            gap_cache[key] = v1 - icvar_policy_eval(mdp, pi, alpha)[0, s1]
        gaps[k] = gap_cache[key]

    res = RunResult(
        algorithm="icvar_g",
        seed=cfg["seed"],
        config=cfg,
        gaps=gaps,
        optimism=optimism,
        diagnostics={"membership_flag": membership, "deviation_ok": deviation_ok,
                     "optimism_all": optimism_all, "g_sq_sum": g_sq, "conf_set_size": set_size},
        v_star=float(v1),
        wall_clock=time.perf_counter() - t0,
    )
    if state.histories is not None:
        res.extras["histories"] = state.histories
    return res


# ---------------------------------------------------------------- eluder dimension

MAX_CLASS = 6
MAX_DOMAIN = 6
MAX_DEPTH = 8


def _merge(intervals):
    out = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def _intersect(a, b):
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo < hi:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def eluder_dimension(values, eps: float, max_depth: int = MAX_DEPTH) -> int:
    """Longest sequence of domain points each ``eps'``-independent of its predecessors.

    ``values`` has shape (num_functions, domain_size).  Repetition of domain
    points is allowed.  The search tracks, along each partial sequence, the
    set of admissible ``eps' >= eps`` as a union of half-open intervals: a
    point is ``eps'``-independent when some pair of functions is within
    ``eps'`` on the prefix (norm ``<= eps'``) yet differs by more than ``eps'``
    at the point.
    """
    Z = np.asarray(values, dtype=float)
    if Z.ndim != 2:
        raise ValueError("values must be a (functions x domain) matrix")
    if not eps > 0:
        raise ConfigError("eps must be positive")
    n_f, n_x = Z.shape
    if n_f > MAX_CLASS or n_x > MAX_DOMAIN:
        raise BudgetExceededError(
            f"class {n_f} x domain {n_x} exceeds the exhaustive-search budget "
            f"({MAX_CLASS} x {MAX_DOMAIN})")
    iu, ju = np.triu_indices(n_f, k=1)
    gap = np.abs(Z[iu] - Z[ju])                       # (pairs, domain)
    if gap.size == 0:
        return 0
    gap_sq = gap**2
    memo = {}

    def extend(counts, sq, feasible, depth):
        key = (counts, tuple(feasible))
        if key in memo:
            return memo[key]
        norms = np.sqrt(sq)
        best = 0
        for x in range(n_x):
            pieces = [(norms[p], gap[p, x]) for p in range(gap.shape[0]) if norms[p] < gap[p, x]]
            if not pieces:
                continue
            nxt = _intersect(feasible, _merge(pieces))
            if not nxt:
                continue
            if depth + 1 > max_depth:
                raise BudgetExceededError(f"eluder search exceeded depth {max_depth}")
            c = list(counts)
            c[x] += 1
            best = max(best, 1 + extend(tuple(c), sq + gap_sq[:, x], nxt, depth + 1))
        memo[key] = best
        return best

    return extend((0,) * n_x, np.zeros(gap.shape[0]), [(float(eps), np.inf)], 0)
