"""Finite episodic MDPs: tabular and linear mixture models.

Steps are indexed ``0 .. H-1`` internally; step ``h`` here is step ``h + 1``
in the usual 1-based notation.  Value tables therefore have ``H + 1`` rows with
the last row identically zero.

Array conventions
-----------------
``transitions``  shape ``(H, S, A, S')``
``rewards``      shape ``(H, S, A)``
``features``     shape ``(S', S, A, d)`` (step independent)
``thetas``       shape ``(H, d)``
``policy``       int array of shape ``(H, S)``
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InvalidModelError

# deviations up to MODEL_TOL are float noise (clamped and renormalized); beyond it the model is broken
MODEL_TOL = 1e-6


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TabularMDP:
    transitions: np.ndarray
    rewards: np.ndarray
    initial_state: int = 0

    def __post_init__(self):
        P = _frozen(self.transitions)
        r = _frozen(self.rewards)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "initial_state", int(self.initial_state))
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise InvalidModelError(f"transitions must have shape (H, S, A, S), got {P.shape}")
        if r.shape != P.shape[:3]:
            raise InvalidModelError(f"rewards shape {r.shape} does not match {P.shape[:3]}")
        if not 0 <= self.initial_state < P.shape[1]:
            raise InvalidModelError(f"initial state {self.initial_state} out of range")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=-1) - 1.0) > 1e-12):
            raise InvalidModelError("every transition row must be a probability vector")
        if np.any(r < 0) or np.any(r > 1):
            raise InvalidModelError("rewards must lie in [0, 1]")

    @property
    def horizon(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[2]


@dataclass(frozen=True)
class LinearMixtureMDP:
    """Episodic MDP with ``P_h(s'|s,a) = <theta_h, phi(s', s, a)>``.

    Construction only checks shapes; probability constraints are checked by
    :func:`validate_mixture` and enforced lazily when transitions are read.
    """

    features: np.ndarray
    thetas: np.ndarray
    rewards: np.ndarray
    initial_state: int = 0

    def __post_init__(self):
        phi = _frozen(self.features)
        th = _frozen(self.thetas)
        r = _frozen(self.rewards)
        object.__setattr__(self, "features", phi)
        object.__setattr__(self, "thetas", th)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "initial_state", int(self.initial_state))
        if phi.ndim != 4 or phi.shape[0] != phi.shape[1]:
            raise InvalidModelError(f"features must have shape (S, S, A, d), got {phi.shape}")
        S, _, A, d = phi.shape
        if th.ndim != 2 or th.shape[1] != d:
            raise InvalidModelError(f"thetas must have shape (H, {d}), got {th.shape}")
        if r.shape != (th.shape[0], S, A):
            raise InvalidModelError(f"rewards must have shape {(th.shape[0], S, A)}, got {r.shape}")
        if not 0 <= self.initial_state < S:
            raise InvalidModelError(f"initial state {self.initial_state} out of range")

    @property
    def horizon(self) -> int:
        return self.thetas.shape[0]

    @property
    def num_states(self) -> int:
        return self.features.shape[0]

    @property
    def num_actions(self) -> int:
        return self.features.shape[2]

    @property
    def dim(self) -> int:
        return self.features.shape[3]

    @cached_property
    def raw_transitions(self) -> np.ndarray:
        """Unprocessed inner products, shape (H, S, A, S')."""
        return np.einsum("tsad,hd->hsat", self.features, self.thetas)

    @cached_property
    def transitions(self) -> np.ndarray:
        P = _clean_rows(self.raw_transitions)
        P.setflags(write=False)
        return P


Model = Union[TabularMDP, LinearMixtureMDP]


def _clean_rows(raw: np.ndarray) -> np.ndarray:
    if raw.min() < -MODEL_TOL:
        raise InvalidModelError(f"negative transition probability {raw.min():.3g}")
    sums = raw.sum(axis=-1)
    if np.max(np.abs(sums - 1.0)) > MODEL_TOL:
        raise InvalidModelError(
            f"transition rows do not normalize (worst deviation {np.max(np.abs(sums - 1.0)):.3g})"
        )
    P = np.maximum(raw, 0.0)
    # rows already exact are left untouched so embedded tables round-trip bit for bit
    fix = (np.abs(sums - 1.0) > 1e-12) | np.any(raw < 0.0, axis=-1)
    P[fix] /= P[fix].sum(axis=-1, keepdims=True)
    return P


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_mixture`.

    ``ok`` only reflects the probability structure (nonnegativity and
    normalization).  Norm bounds are advisory: several useful constructions
    (including the lower-bound instance) exceed them by design.
    """

    ok: bool
    worst_negative: np.ndarray          # (H, S, A) most negative inner product, 0 if none
    worst_normalization: np.ndarray     # (H, S, A) |sum - 1|
    theta_norms: np.ndarray             # (H,)
    theta_bound: float                  # sqrt(d)
    psi_norm_max: float                 # over indicator functions and the constant 1
    messages: list = field(default_factory=list)

    @property
    def theta_norm_ok(self) -> bool:
        return bool(np.all(self.theta_norms <= self.theta_bound + 1e-9))

    def summary(self) -> dict:
        return {
            "ok": self.ok,
            "max_negative": float(-self.worst_negative.min(initial=0.0)),
            "max_normalization_error": float(self.worst_normalization.max(initial=0.0)),
            "theta_norms": self.theta_norms.tolist(),
            "psi_norm_max": self.psi_norm_max,
            "messages": list(self.messages),
        }


def validate_mixture(mdp: LinearMixtureMDP, tol: float = 1e-9) -> ValidationReport:
    raw = mdp.raw_transitions
    neg = np.minimum(raw.min(axis=-1), 0.0)
    norm_err = np.abs(raw.sum(axis=-1) - 1.0)
    theta_norms = np.linalg.norm(mdp.thetas, axis=1)

    # psi_f for f = indicator of s' is phi(s', s, a); f = 1 sums over s'
    ind_norms = np.linalg.norm(mdp.features, axis=-1)
    ones_norms = np.linalg.norm(mdp.features.sum(axis=0), axis=-1)
    psi_max = float(max(ind_norms.max(), ones_norms.max()))

    msgs = []
    ok = True
    if neg.min() < -tol:
        ok = False
        h, s, a = np.unravel_index(np.argmin(neg), neg.shape)
        msgs.append(f"negative probability {neg.min():.3g} at (h={h}, s={s}, a={a})")
    if norm_err.max() > tol:
        ok = False
        h, s, a = np.unravel_index(np.argmax(norm_err), norm_err.shape)
        msgs.append(f"row sum off by {norm_err.max():.3g} at (h={h}, s={s}, a={a})")
    if np.any(theta_norms > np.sqrt(mdp.dim) + tol):
        msgs.append("advisory: some ||theta_h|| exceeds sqrt(d)")
    if psi_max > 1 + tol:
        msgs.append(f"advisory: ||psi_f|| reaches {psi_max:.3g} > 1 on indicator functions")
    return ValidationReport(ok, neg, norm_err, theta_norms, float(np.sqrt(mdp.dim)), psi_max, msgs)


def transition_distribution(mdp: Model, h: int, s: int, a: int) -> np.ndarray:
    return mdp.transitions[h, s, a].copy()


def psi_feature(mdp: LinearMixtureMDP, f, s: int, a: int) -> np.ndarray:
    """Sum over successor states of ``phi(s', s, a) * f(s')``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (mdp.num_states,) or not np.all(np.isfinite(f)):
        raise ValueError("f must be a finite vector over states")
    return f @ mdp.features[:, s, a, :]


def psi_table(features: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Batch version: ``F`` of shape (n, S') gives features of shape (n, S, A, d)."""
    return np.einsum("nt,tsad->nsad", F, features, optimize=True)


@dataclass(frozen=True)
class Step:
    h: int
    state: int
    action: int
    reward: float
    next_state: int


@dataclass(frozen=True)
class EpisodeLog:
    steps: tuple
    episode: int = 0

    def __len__(self):
        return len(self.steps)

    @property
    def states(self) -> list:
        return [st.state for st in self.steps] + ([self.steps[-1].next_state] if self.steps else [])

    @property
    def actions(self) -> list:
        return [st.action for st in self.steps]


def check_policy(mdp: Model, policy) -> np.ndarray:
    pi = np.asarray(policy)
    if pi.shape != (mdp.horizon, mdp.num_states) or not np.issubdtype(pi.dtype, np.integer):
        raise ValueError(f"policy must be an int array of shape {(mdp.horizon, mdp.num_states)}")
    if pi.min(initial=0) < 0 or pi.max(initial=0) >= mdp.num_actions:
        raise ValueError("policy action index out of range")
    return pi


def sample_episode(mdp: Model, policy, rng: np.random.Generator, episode: int = 0,
                   initial_state: int | None = None) -> EpisodeLog:
    pi = check_policy(mdp, policy)
    P = mdp.transitions
    s = mdp.initial_state if initial_state is None else int(initial_state)
    u = rng.random(mdp.horizon)
    steps = []
    for h in range(mdp.horizon):
        a = int(pi[h, s])
        cdf = np.cumsum(P[h, s, a])
        nxt = int(min(np.searchsorted(cdf, u[h] * cdf[-1], side="right"), mdp.num_states - 1))
        steps.append(Step(h, s, a, float(mdp.rewards[h, s, a]), nxt))
        s = nxt
    return EpisodeLog(tuple(steps), episode)


def occupancy(mdp: Model, policy, initial_state: int | None = None) -> np.ndarray:
    """Exact state-visitation probabilities, shape (H + 1, S)."""
    pi = check_policy(mdp, policy)
    P = mdp.transitions
    S = mdp.num_states
    w = np.zeros((mdp.horizon + 1, S))
    w[0, mdp.initial_state if initial_state is None else initial_state] = 1.0
    for h in range(mdp.horizon):
        rows = P[h, np.arange(S), pi[h]]
        w[h + 1] = w[h] @ rows
    return w


def embed_tabular(tab: TabularMDP) -> LinearMixtureMDP:
    """Canonical linear-mixture embedding with one coordinate per (s', s, a)."""
    H, S, A = tab.horizon, tab.num_states, tab.num_actions
    d = S * S * A
    phi = np.zeros((S, S, A, d))
    idx = np.arange(d).reshape(S, S, A)
    for t in range(S):
        for s in range(S):
            for a in range(A):
                phi[t, s, a, idx[t, s, a]] = 1.0
    thetas = np.stack([tab.transitions[h].transpose(2, 0, 1).reshape(d) for h in range(H)])
    return LinearMixtureMDP(phi, thetas, tab.rewards, tab.initial_state)


# ---------------------------------------------------------------- serialization

def mdp_to_dict(mdp: Model) -> dict:
    if isinstance(mdp, LinearMixtureMDP):
        return {
            "type": "linear_mixture",
            "S": mdp.num_states, "A": mdp.num_actions, "H": mdp.horizon, "d": mdp.dim,
            "phi": mdp.features.tolist(),
            "thetas": mdp.thetas.tolist(),
            "rewards": mdp.rewards.tolist(),
            "initial_state": mdp.initial_state,
        }
    return {
        "type": "tabular",
        "S": mdp.num_states, "A": mdp.num_actions, "H": mdp.horizon,
        "transitions": mdp.transitions.tolist(),
        "rewards": mdp.rewards.tolist(),
        "initial_state": mdp.initial_state,
    }


def mdp_from_dict(data: dict) -> Model:
    try:
        if "phi" in data:
            mdp = LinearMixtureMDP(data["phi"], data["thetas"], data["rewards"],
                                   data.get("initial_state", 0))
            dims = (mdp.num_states, mdp.num_actions, mdp.horizon, mdp.dim)
            declared = tuple(data.get(k, v) for k, v in zip("SAHd", dims))
        else:
            mdp = TabularMDP(data["transitions"], data["rewards"], data.get("initial_state", 0))
            dims = (mdp.num_states, mdp.num_actions, mdp.horizon)
            declared = tuple(data.get(k, v) for k, v in zip("SAH", dims))
    except KeyError as exc:
        raise InvalidModelError(f"missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidModelError):
            raise
        raise InvalidModelError(f"malformed model: {exc}") from None
    if declared != dims:
        raise InvalidModelError(f"declared sizes {declared} disagree with arrays {dims}")
    return mdp


def save_mdp(mdp: Model, path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp)))


def load_mdp(path) -> Model:
    return mdp_from_dict(json.loads(Path(path).read_text()))
