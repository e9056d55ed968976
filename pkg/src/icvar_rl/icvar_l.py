"""ICVaR-L: optimistic value iteration for linear mixture MDPs.

The learner keeps, for every step, a ridge regression of the clipped targets
``(x - V_next)^+(s')`` on the CVaR-adapted features ``psi_{(x - V_next)^+}(s, a)``
and plans with the net-restricted CVaR operator plus an elliptical bonus.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Union

import numpy as np

from .env_model import LinearMixtureMDP, psi_table, sample_episode
from .errors import ConfigError
from .results import RunResult
from .risk_ops import EpsNet, _check_alpha, icvar_optimal_dp, icvar_policy_eval
from .seeding import make_rng

REFRESH_EVERY = 500


def beta_from_theory(d: int, H: int, K: int, delta: float, lam: float) -> float:
    if not 0 < delta <= 1:
        raise ConfigError(f"delta must lie in (0, 1], got {delta}")
    return H * np.sqrt(d * np.log((H + K * H**3) / delta)) + np.sqrt(lam)


def default_epsilon(d: int, H: int, K: int, alpha: float) -> float:
    """Theory step ``d H sqrt(alpha^(H-3) / K)`` clamped to ``[1e-4 H, H / 2]``."""
    if K <= 0:
        return H / 2
    eps = d * H * np.sqrt(alpha ** (H - 3) / K)
    return float(np.clip(eps, 1e-4 * H, H / 2))


class RidgeStep:
    """Ridge regression state for one step: covariance, its inverse, estimate."""

    def __init__(self, d: int, lam: float):
        if not lam > 0:
            raise ConfigError(f"ridge parameter must be positive, got {lam}")
        self.lam = float(lam)
        self.cov = lam * np.eye(d)
        self.cov_inv = np.eye(d) / lam
        self.moment = np.zeros(d)
        self.theta = np.zeros(d)
        self.n_updates = 0

    def update(self, psi: np.ndarray, target: float) -> "RidgeStep":
        psi = np.asarray(psi, dtype=float)
        self.cov += np.outer(psi, psi)
        u = self.cov_inv @ psi
        self.cov_inv -= np.outer(u, u) / (1.0 + psi @ u)
        self.moment += psi * target
        self.n_updates += 1
        if self.n_updates % REFRESH_EVERY == 0:
            self.cov = 0.5 * (self.cov + self.cov.T)
            self.cov_inv = np.linalg.inv(self.cov)
        self.cov_inv = 0.5 * (self.cov_inv + self.cov_inv.T)
        self.theta = self.cov_inv @ self.moment
        return self

    def ellipsoid_distance(self, theta: np.ndarray) -> float:
        diff = np.asarray(theta) - self.theta
        return float(np.sqrt(max(diff @ self.cov @ diff, 0.0)))


def ridge_update(state: RidgeStep, psi, target: float) -> RidgeStep:
    return state.update(psi, target)


@dataclass
class LinearLearnerState:
    steps: list
    alpha: float
    beta: float
    net: EpsNet

    @classmethod
    def fresh(cls, d: int, H: int, lam: float, alpha: float, beta: float, net: EpsNet):
        return cls([RidgeStep(d, lam) for _ in range(H)], alpha, beta, net)


def _feature_norms(features, V_next, net, cov_inv):
    F = np.maximum(net.points[:, None] - V_next[None, :], 0.0)
    Psi = psi_table(features, F)                                   # (n, S, A, d)
    quad = np.einsum("nsad,de,nsae->nsa", Psi, cov_inv, Psi, optimize=True)
    return Psi, np.sqrt(np.maximum(quad, 0.0))


def select_x(state: LinearLearnerState, h: int, V_next, mdp: LinearMixtureMDP, s: int, a: int):
    """Net point whose adapted feature has the largest inverse-covariance norm.

    Returns ``(x, psi, norm)``; ties go to the smallest net point.
    """
    x = state.net.points
    F = np.maximum(x[:, None] - np.asarray(V_next)[None, :], 0.0)
    Psi = F @ mdp.features[:, s, a, :]
    Ainv = state.steps[h].cov_inv
    norms = np.sqrt(np.maximum(np.einsum("nd,de,ne->n", Psi, Ainv, Psi), 0.0))
    j = int(np.argmax(norms))
    return float(x[j]), Psi[j], float(norms[j])


def compute_bonus(state: LinearLearnerState, h: int, V_next, mdp: LinearMixtureMDP, s: int, a: int) -> float:
    _, _, norm = select_x(state, h, V_next, mdp, s, a)
    return state.beta / state.alpha * norm


@dataclass
class Backup:
    """Optimistic tables for one step."""

    Q: np.ndarray          # (S, A)
    V: np.ndarray          # (S,)
    policy: np.ndarray     # (S,)
    bonus: np.ndarray      # (S, A)
    x_index: np.ndarray    # (S, A) index of the maximizing net point
    psi: np.ndarray        # (n, S, A, d)


def optimistic_backup(state: LinearLearnerState, h: int, V_next, mdp: LinearMixtureMDP,
                      theta: np.ndarray | None = None) -> Backup:
    """One step of optimistic value iteration.

    ``theta`` overrides the regression estimate (used for oracle checks).
    """
    H = mdp.horizon
    V_next = np.asarray(V_next, dtype=float)
    step = state.steps[h]
    th = step.theta if theta is None else np.asarray(theta, dtype=float)
    Psi, norms = _feature_norms(mdp.features, V_next, state.net, step.cov_inv)
    x_idx = np.argmax(norms, axis=0)
    bonus = state.beta / state.alpha * np.max(norms, axis=0)
    x = state.net.points
    cvar = np.max(x[:, None, None] - (Psi @ th) / state.alpha, axis=0)
    Q = mdp.rewards[h] + cvar + 2 * state.net.eps + bonus
    pi = np.argmax(Q, axis=1)
    # lower clip keeps values inside the [0, H] range the features assume
    V = np.clip(Q.max(axis=1), 0.0, H)
    return Backup(Q, V, pi, bonus, x_idx, Psi)


@dataclass
class LinearConfig:
    alpha: float
    K: int
    seed: int = 0
    epsilon: Union[float, None] = None
    lam: Union[float, None] = None
    beta: Union[float, str] = "theory"
    delta: float = 0.1
    freeze_true_theta: bool = False
    net_zero: bool = True          # prepend x = 0 to the net (False: bare {n eps} grid)

    def resolved(self, mdp: LinearMixtureMDP) -> dict:
        alpha = _check_alpha(self.alpha)
        if self.K < 0:
            raise ConfigError("K must be nonnegative")
        d, H = mdp.dim, mdp.horizon
        lam = float(H**2 if self.lam is None else self.lam)
        eps = float(default_epsilon(d, H, self.K, alpha) if self.epsilon is None else self.epsilon)
        if self.beta == "theory":
            beta = beta_from_theory(d, H, max(self.K, 1), self.delta, lam)
        else:
            beta = float(self.beta)
            if beta < 0:
                raise ConfigError("beta must be nonnegative")
        return {"alpha": alpha, "K": int(self.K), "seed": int(self.seed), "epsilon": eps,
                "lam": lam, "beta": float(beta), "beta_mode": "theory" if self.beta == "theory" else "fixed",
                "delta": self.delta, "freeze_true_theta": bool(self.freeze_true_theta),
                "net_zero": bool(self.net_zero)}


def run_icvar_l(mdp: LinearMixtureMDP, config: LinearConfig, rng: np.random.Generator | None = None) -> RunResult:
    """Run ICVaR-L for ``config.K`` episodes and score each episode exactly.

    Diagnostics: ``bonus_sum`` (bonus at visited pairs summed over steps) and
    ``theta_err`` (``||theta_h - theta_hat||`` in the covariance norm, per step,
    measured before the episode's update).
    """
    t0 = time.perf_counter()
    cfg = config.resolved(mdp)
    alpha, K, H, S = cfg["alpha"], cfg["K"], mdp.horizon, mdp.num_states
    rng = make_rng(cfg["seed"]) if rng is None else rng
    net = EpsNet(cfg["epsilon"], H, include_zero=cfg["net_zero"])
    state = LinearLearnerState.fresh(mdp.dim, H, cfg["lam"], alpha, cfg["beta"], net)

    V_star = icvar_optimal_dp(mdp, alpha)[0]
    s1 = mdp.initial_state
    v1 = V_star[0, s1]
    gap_cache = {}

    gaps = np.zeros(K)
    optimism = np.zeros(K, dtype=bool)
    bonus_sum = np.zeros(K)
    theta_err = np.zeros((K, H))
    x = net.points
    for k in range(K):
        V = np.zeros((H + 1, S))
        pi = np.zeros((H, S), dtype=np.int64)
        backups = [None] * H
        for h in range(H - 1, -1, -1):
            th = mdp.thetas[h] if cfg["freeze_true_theta"] else None
            b = optimistic_backup(state, h, V[h + 1], mdp, theta=th)
            backups[h] = b
            V[h], pi[h] = b.V, b.policy
        optimism[k] = V[0, s1] >= v1 - 1e-9

        ep = sample_episode(mdp, pi, rng, episode=k)
        for st in ep.steps:
            h, s, a = st.h, st.state, st.action
            b = backups[h]
            j = b.x_index[s, a]
            target = max(x[j] - V[h + 1, st.next_state], 0.0)
            theta_err[k, h] = state.steps[h].ellipsoid_distance(mdp.thetas[h])
            bonus_sum[k] += b.bonus[s, a]
            state.steps[h].update(b.psi[j, s, a], target)

        key = pi.tobytes()
        if key not in gap_cache:
            gap_cache[key] = v1 - icvar_policy_eval(mdp, pi, alpha)[0, s1]
        gaps[k] = gap_cache[key]

    return RunResult(
        algorithm="icvar_l",
        seed=cfg["seed"],
        config=cfg,
        gaps=gaps,
        optimism=optimism,
        diagnostics={"bonus_sum": bonus_sum, "theta_err": theta_err},
        v_star=float(v1),
        wall_clock=time.perf_counter() - t0,
    )
