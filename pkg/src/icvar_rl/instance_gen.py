"""Problem instances: the lower-bound construction and random test models."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .env_model import LinearMixtureMDP, TabularMDP
from .errors import ConfigError
from .icvar_g import FiniteKernelClass
from .seeding import INSTANCE_STREAM, make_rng

# rewards of the three absorbing states x1, x2, x3
ABSORBING_REWARDS = (1.0, 0.8, 0.2)


def hard_actions(d: int) -> np.ndarray:
    """All sign vectors in ``{-1, 1}^(d-1)``; row ``i`` is action index ``i``."""
    return np.array(list(itertools.product([-1, 1], repeat=d - 1)), dtype=float)


@dataclass(frozen=True)
class HardInstanceParams:
    d: int
    H: int
    n: int
    alpha: float
    delta: float
    mu: tuple
    K: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        if self.d < 2 or self.H < 2:
            raise ConfigError("need d >= 2 and H >= 2")
        if not 1 <= self.n <= self.H - 1:
            raise ConfigError(f"n must lie in [1, H-1], got {self.n}")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must lie in (0, 1]")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if len(self.mu) != self.d - 1 or any(abs(abs(m) - self.delta) > 1e-12 for m in self.mu):
            raise ConfigError("mu must be a vector in {-delta, +delta}^(d-1)")
        if not 2 * (self.d - 1) * self.delta < self.alpha / 2:
            raise ConfigError("need 2 (d-1) delta < alpha / 2")

    @property
    def best_action(self) -> np.ndarray:
        return np.sign(np.array(self.mu))


def theory_delta(d: int, n: int, alpha: float, K: int, c: float = 1.0) -> float:
    raw = c * np.sqrt(1.0 / (alpha ** (n - 2) * K))
    return float(min(raw, 0.9 * alpha / (4 * (d - 1))))


def make_hard_params(d: int, H: int, n: int, alpha: float, K: int, c: float = 1.0,
                     seed: int = 0, delta: float | None = None) -> HardInstanceParams:
    """Parameters with ``delta`` from the theory schedule and a uniformly drawn ``mu``."""
    if delta is None:
        delta = theory_delta(d, n, alpha, K, c)
    rng = make_rng(seed, INSTANCE_STREAM)
    mu = delta * rng.choice([-1.0, 1.0], size=d - 1)
    return HardInstanceParams(d, H, n, alpha, delta, tuple(mu), K)


def hard_instance(p: HardInstanceParams) -> LinearMixtureMDP:
    """Chain ``s_1 -> ... -> s_n`` feeding a linear bandit at ``s_n``.

    State order: ``s_1 .. s_n`` are ``0 .. n-1``; ``x_1, x_2, x_3`` are ``n .. n+2``.
    From ``s_i`` (``i < n``) the chain advances with probability ``alpha`` and
    otherwise falls into ``x_1``.  At ``s_n`` action ``a`` reaches ``x_2`` with
    probability ``1 - alpha + (d-1) delta + <mu, a>`` and ``x_3`` otherwise.
    """
    d, n, alpha = p.d, p.n, p.alpha
    acts = hard_actions(d)
    A = acts.shape[0]
    S = n + 3
    x1, x2, x3 = n, n + 1, n + 2
    e1 = np.eye(d)[0]
    phi = np.zeros((S, S, A, d))
    for i in range(n - 1):
        phi[i + 1, i, :, :] = alpha * e1
        phi[x1, i, :, :] = (1 - alpha) * e1
    base = (d - 1) * p.delta
    for j, a in enumerate(acts):
        phi[x2, n - 1, j] = np.concatenate([[1 - alpha + base], a])
        phi[x3, n - 1, j] = np.concatenate([[alpha - base], -a])
    for x in (x1, x2, x3):
        phi[x, x, :, :] = e1
    theta = np.concatenate([[1.0], p.mu])
    thetas = np.tile(theta, (p.H, 1))
    rewards = np.zeros((p.H, S, A))
    for x, r in zip((x1, x2, x3), ABSORBING_REWARDS):
        rewards[:, x, :] = r
    return LinearMixtureMDP(phi, thetas, rewards, initial_state=0)


def action_index(p: HardInstanceParams, a_n) -> int:
    a = np.asarray(a_n)
    if a.ndim == 0:
        return int(a)
    matches = np.flatnonzero(np.all(hard_actions(p.d) == a, axis=1))
    if matches.size != 1:
        raise ConfigError(f"{a_n} is not a sign vector of length {p.d - 1}")
    return int(matches[0])


def hard_instance_gap(p: HardInstanceParams, a_n) -> float:
    """Closed-form suboptimality of any policy playing ``a_n`` at ``s_n``."""
    a = hard_actions(p.d)[action_index(p, a_n)]
    mismatches = np.sum(np.sign(a) != np.sign(p.mu))
    return 1.2 * (p.H - p.n) * p.delta / p.alpha * float(mismatches)


def hard_instance_value(p: HardInstanceParams) -> float:
    """Closed-form optimal value at the start state."""
    b = 2 * (p.d - 1) * p.delta
    return (p.H - p.n) / p.alpha * (0.2 * (p.alpha - b) + 0.8 * b)


# ---------------------------------------------------------------- random models

def random_linear_mixture(d: int, S: int, A: int, H: int, seed: int = 0,
                          concentration: float = 1.0, state_rewards: bool = False) -> LinearMixtureMDP:
    """Random valid mixture of ``d`` anchor kernels.

    Coordinate ``j`` of ``phi(s', s, a)`` is ``anchor_j(s' | s, a)`` and ``theta_h``
    is a Dirichlet weight vector, so every ``<theta_h, phi>`` row is a convex
    combination of distributions.  ``concentration`` is the anchors' Dirichlet
    parameter (small values give peaked rows).  With ``state_rewards`` the
    reward depends on the state only, so actions matter only through transitions.
    """
    if d < 1 or d > S:
        raise ConfigError(f"need 1 <= d <= S, got d={d}, S={S}")
    if not concentration > 0:
        raise ConfigError("concentration must be positive")
    rng = make_rng(seed, INSTANCE_STREAM)
    anchors = rng.dirichlet(concentration * np.ones(S), size=(d, S, A))   # (d, S, A, S')
    phi = anchors.transpose(3, 1, 2, 0)                                  # (S', S, A, d)
    thetas = rng.dirichlet(np.ones(d), size=H)
    if state_rewards:
        rewards = np.repeat(rng.random((H, S, 1)), A, axis=2)
    else:
        rewards = rng.random((H, S, A))
    return LinearMixtureMDP(phi, thetas, rewards, initial_state=0)


def random_tabular(S: int, A: int, H: int, seed: int = 0, concentration: float = 1.0) -> TabularMDP:
    rng = make_rng(seed, INSTANCE_STREAM)
    P = rng.dirichlet(concentration * np.ones(S), size=(H, S, A))
    P /= P.sum(axis=-1, keepdims=True)
    return TabularMDP(P, rng.random((H, S, A)), initial_state=0)


def random_kernel_class(num_kernels: int, S: int, A: int, H: int, seed: int = 0):
    """Random class of kernels plus a matching environment.

    Step ``h`` uses kernel ``h mod num_kernels``.  Returns ``(class, mdp)``.
    """
    rng = make_rng(seed, INSTANCE_STREAM)
    kernels = rng.dirichlet(np.ones(S), size=(num_kernels, S, A))
    kernels /= kernels.sum(axis=-1, keepdims=True)
    true_index = [h % num_kernels for h in range(H)]
    kc = FiniteKernelClass(kernels, true_index)
    return kc, kc.mdp(rng.random((H, S, A)))
