"""CVaR of discrete distributions and Iterated-CVaR dynamic programming."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env_model import Model, check_policy
from .errors import ConfigError

CUM_TOL = 1e-12


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"risk level alpha must lie in (0, 1], got {alpha}")
    return alpha


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely supported distribution; equal-valued atoms are merged."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        p = np.asarray(self.probs, dtype=float).ravel()
        if v.shape != p.shape or v.size == 0:
            raise ValueError("values and probs must be nonempty and of equal length")
        if not np.all(np.isfinite(v)):
            raise ValueError("atom values must be finite")
        if np.any(p < 0) or abs(p.sum() - 1.0) > CUM_TOL * max(1, v.size):
            raise ValueError("probabilities must be nonnegative and sum to one")
        uniq, inv = np.unique(v, return_inverse=True)
        merged = np.bincount(inv, weights=p, minlength=uniq.size)
        object.__setattr__(self, "values", uniq)
        object.__setattr__(self, "probs", merged)

    @classmethod
    def from_atoms(cls, atoms) -> "DiscreteDistribution":
        v, p = zip(*atoms)
        return cls(np.array(v), np.array(p))

    def mean(self) -> float:
        return float(self.values @ self.probs)


def var_discrete(dist: DiscreteDistribution, alpha: float) -> float:
    """Smallest atom ``x`` with ``F(x) >= alpha``."""
    alpha = _check_alpha(alpha)
    cdf = np.cumsum(dist.probs)
    i = int(np.searchsorted(cdf, alpha - CUM_TOL, side="left"))
    return float(dist.values[min(i, dist.values.size - 1)])


def cvar_discrete(dist: DiscreteDistribution, alpha: float) -> float:
    """``x* - E[(x* - X)^+] / alpha`` evaluated at the VaR ``x*``."""
    x = var_discrete(dist, alpha)
    shortfall = np.maximum(x - dist.values, 0.0) @ dist.probs
    return float(x - shortfall / alpha)


def tail_weights(probs: np.ndarray, values: np.ndarray, alpha: float) -> np.ndarray:
    """Weights of the lowest-``alpha`` tail for a batch of rows sharing ``values``.

    ``probs`` has shape (..., n).  The returned array has the same shape and
    every row sums to one; the straddling atom receives a fractional weight.
    """
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(probs[..., order], axis=-1)
    capped = np.minimum(cum, alpha)
    w_sorted = np.diff(capped, axis=-1, prepend=0.0) / alpha
    w = np.empty_like(w_sorted)
    w[..., order] = np.maximum(w_sorted, 0.0)
    return w


def cvar_rows(probs: np.ndarray, values: np.ndarray, alpha: float) -> np.ndarray:
    """Sorted-tail CVaR of ``values`` under each probability row of ``probs``."""
    alpha = _check_alpha(alpha)
    values = np.asarray(values, dtype=float)
    if alpha == 1.0:
        return probs @ values
    return tail_weights(probs, values, alpha) @ values


def distorted_distribution(probs, values, alpha: float) -> np.ndarray:
    """Reweighting of ``probs`` onto the lowest-``alpha`` portion of ``values``.

    The result ``Q`` is a probability vector with ``Q @ values`` equal to the CVaR.
    """
    alpha = _check_alpha(alpha)
    probs = np.asarray(probs, dtype=float)
    values = np.asarray(values, dtype=float)
    if probs.shape != values.shape or np.any(probs < 0) or abs(probs.sum() - 1) > 1e-9:
        raise ValueError("probs must be a probability vector matching values")
    return tail_weights(probs, values, alpha)


# ---------------------------------------------------------------- epsilon net

@dataclass(frozen=True)
class EpsNet:
    """The grid ``{n * eps : n = 1 .. floor(H / eps)}``, by default with ``0`` prepended.

    Without the zero point the net-restricted CVaR can undershoot by
    ``(1/alpha - 1) eps`` when the VaR lies below ``eps``; with it the error
    is at most ``eps`` everywhere.  ``include_zero=False`` gives the bare grid.
    """

    eps: float
    horizon: float
    include_zero: bool = True

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"net step must be positive, got {self.eps}")
        if self.num_steps == 0:
            raise ConfigError(f"net step {self.eps} exceeds horizon {self.horizon}; net is empty")

    @property
    def num_steps(self) -> int:
        # guard against floor(3 / 0.1) = 29 style rounding
        return int(np.floor(self.horizon / self.eps + 1e-9))

    @property
    def size(self) -> int:
        return self.num_steps + int(self.include_zero)

    @property
    def points(self) -> np.ndarray:
        pts = np.minimum(self.eps * np.arange(1, self.num_steps + 1), self.horizon)
        return np.concatenate([[0.0], pts]) if self.include_zero else pts


def cvar_eps_net_table(theta: np.ndarray, features: np.ndarray, V: np.ndarray,
                       alpha: float, net: EpsNet) -> np.ndarray:
    """Net-restricted CVaR operator for every (s, a); shape (S, A)."""
    x = net.points
    F = np.maximum(x[:, None] - V[None, :], 0.0)                  # (n, S')
    inner = np.einsum("nt,tsad,d->nsa", F, features, theta, optimize=True)
    return np.max(x[:, None, None] - inner / alpha, axis=0)


def cvar_eps_net(theta, mdp, V, s: int, a: int, alpha: float, net: EpsNet) -> float:
    """``max_{x in net} x - <theta, psi_{(x - V)^+}(s, a)> / alpha``."""
    alpha = _check_alpha(alpha)
    V = np.asarray(V, dtype=float)
    theta = np.asarray(theta, dtype=float)
    x = net.points
    F = np.maximum(x[:, None] - V[None, :], 0.0)
    inner = F @ mdp.features[:, s, a, :] @ theta
    return float(np.max(x - inner / alpha))


# ---------------------------------------------------------------- dynamic programming

def icvar_optimal_dp(mdp: Model, alpha: float):
    """Backward recursion of the Iterated-CVaR optimality equation.

    Returns ``(V, Q, policy)`` with shapes (H+1, S), (H, S, A), (H, S).
    Ties between actions go to the lowest index.
    """
    alpha = _check_alpha(alpha)
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    P = mdp.transitions
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    pi = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q[h] = mdp.rewards[h] + cvar_rows(P[h], V[h + 1], alpha)
        pi[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h].max(axis=1)
    return V, Q, pi


def icvar_policy_eval(mdp: Model, policy, alpha: float) -> np.ndarray:
    """Iterated-CVaR value of a deterministic policy, shape (H+1, S)."""
    alpha = _check_alpha(alpha)
    pi = check_policy(mdp, policy)
    H, S = mdp.horizon, mdp.num_states
    P = mdp.transitions
    states = np.arange(S)
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        a = pi[h]
        V[h] = mdp.rewards[h, states, a] + cvar_rows(P[h, states, a], V[h + 1], alpha)
    return V


def risk_neutral_dp(mdp: Model):
    """Expected-return value iteration; reference for the ``alpha = 1`` case."""
    H, S = mdp.horizon, mdp.num_states
    V = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q = mdp.rewards[h] + np.einsum("sat,t->sa", mdp.transitions[h], V[h + 1])
        pi[h] = np.argmax(Q, axis=1)
        V[h] = Q.max(axis=1)
    return V, pi
