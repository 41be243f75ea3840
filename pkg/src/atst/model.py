"""Linear ATST-MDP models, augmented states and action sequences.

A model is stored in finite-state form: ``phi`` has shape ``(S, A, d)``,
``mu`` has shape ``(d, S)`` and the transition kernel is recovered as
``P[s, a, :] = phi[s, a] @ mu``.  States and actions are addressed by
integer index everywhere; the name tuples only matter for file I/O.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CostOutOfRange,
    ModelValidationError,
    NonStochasticKernel,
    NonStochasticReset,
    NormBoundViolated,
)

STOCH_TOL = 1e-9
EXACT_TOL = 1e-12

REPEAT_LAST = "repeat-last"
CYCLE_PREFIX = "cycle-prefix"


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class LinearAtstMdp:
    phi: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    gamma: float
    beta: np.ndarray
    states: tuple = ()
    actions: tuple = ()
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        phi = _frozen(self.phi)
        if phi.ndim != 3:
            raise ModelValidationError(f"phi must have shape (S, A, d), got {phi.shape}")
        S, A, d = phi.shape
        mu = _frozen(self.mu)
        if mu.shape != (d, S):
            raise ModelValidationError(f"mu must have shape ({d}, {S}), got {mu.shape}")
        theta = _frozen(self.theta).reshape(-1)
        if theta.shape != (d,):
            raise ModelValidationError(f"theta must have shape ({d},), got {theta.shape}")
        beta = _frozen(self.beta).reshape(-1)
        if beta.shape != (A,):
            raise ModelValidationError(f"beta must have shape ({A},), got {beta.shape}")
        states = tuple(self.states) or tuple(f"s{i}" for i in range(S))
        actions = tuple(self.actions) or tuple(f"a{i}" for i in range(A))
        if len(states) != S or len(actions) != A:
            raise ModelValidationError("state/action name count does not match phi")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        P = np.einsum("sad,dt->sat", phi, mu)
        P.setflags(write=False)
        object.__setattr__(self, "_P", P)
        r = phi @ theta
        r.setflags(write=False)
        object.__setattr__(self, "_r", r)
        if self.validate:
            check_invariants(self)

    @property
    def d(self):
        return self.phi.shape[2]

    @property
    def S(self):
        return self.phi.shape[0]

    @property
    def A(self):
        return self.phi.shape[1]

    @property
    def beta_bar(self):
        return 1.0 - self.beta

    def kernel(self):
        """Transition kernel of shape ``(S, A, S)`` with float noise clipped."""
        return np.clip(self._P, 0.0, None)

    def raw_kernel(self):
        return self._P

    def rewards(self):
        return self._r

    def with_beta(self, beta):
        return LinearAtstMdp(self.phi, self.mu, self.theta, self.gamma, beta,
                             self.states, self.actions)

    def state_index(self, name):
        return self.states.index(name) if not isinstance(name, (int, np.integer)) else int(name)

    def action_index(self, name):
        return self.actions.index(name) if not isinstance(name, (int, np.integer)) else int(name)


def check_invariants(mdp: LinearAtstMdp):
    """Raise on the first violated model invariant, naming its cell."""
    S, A, d = mdp.phi.shape
    if not 0.0 < mdp.gamma < 1.0:
        raise ModelValidationError(f"gamma must lie in (0, 1), got {mdp.gamma}")
    for a in range(A):
        if not (0.0 <= mdp.beta[a] <= 1.0) or not math.isfinite(mdp.beta[a]):
            raise ModelValidationError(f"beta={mdp.beta[a]} outside [0, 1]",
                                       cell=("action", mdp.actions[a]))
    norms = np.linalg.norm(mdp.phi, axis=2)
    for s in range(S):
        for a in range(A):
            if norms[s, a] > 1.0 + STOCH_TOL:
                raise NormBoundViolated(f"||phi||_2={norms[s, a]:.6g} > 1",
                                        cell=(mdp.states[s], mdp.actions[a]))
    root_d = math.sqrt(d)
    if np.linalg.norm(mdp.theta) > root_d + STOCH_TOL:
        raise NormBoundViolated(f"||theta||_2={np.linalg.norm(mdp.theta):.6g} > sqrt(d)")
    mass = np.linalg.norm(np.abs(mdp.mu).sum(axis=1))
    if mass > root_d + STOCH_TOL:
        raise NormBoundViolated(f"||mu mass||_2={mass:.6g} > sqrt(d)")
    P = mdp.raw_kernel()
    r = mdp.rewards()
    for s in range(S):
        for a in range(A):
            cell = (mdp.states[s], mdp.actions[a])
            row = P[s, a]
            if row.min() < -EXACT_TOL:
                raise NonStochasticKernel(f"negative transition mass {row.min():.3g}", cell=cell)
            if abs(row.sum() - 1.0) > STOCH_TOL:
                raise NonStochasticKernel(f"kernel row sums to {row.sum():.12g}", cell=cell)
            if r[s, a] < -STOCH_TOL or r[s, a] > 1.0 + STOCH_TOL:
                raise NormBoundViolated(f"reward {r[s, a]:.6g} outside [0, 1]", cell=cell)


@dataclass(frozen=True)
class AugmentedState:
    """Last observed state plus the actions executed since.

    ``anchor is None`` encodes the termination sentinel.
    """

    anchor: int | None
    tail: tuple = ()

    def __post_init__(self):
        tail = tuple(int(a) for a in self.tail)
        if self.anchor is None and tail:
            raise ValueError("the termination sentinel carries no actions")
        object.__setattr__(self, "tail", tail)
        if self.anchor is not None:
            object.__setattr__(self, "anchor", int(self.anchor))

    @property
    def depth(self):
        return len(self.tail)

    @property
    def terminal(self):
        return self.anchor is None

    def extend(self, *actions):
        return AugmentedState(self.anchor, self.tail + tuple(actions))


TERMINAL = AugmentedState(None)


@dataclass(frozen=True)
class ActionSequence:
    """Finite stand-in for an infinite action sequence.

    ``repeat-last`` plays the final prefix action forever, ``cycle-prefix``
    repeats the whole prefix.
    """

    prefix: tuple
    continuation: str = REPEAT_LAST

    def __post_init__(self):
        prefix = tuple(int(a) for a in self.prefix)
        if not prefix:
            raise ValueError("action sequence needs a non-empty prefix")
        if self.continuation not in (REPEAT_LAST, CYCLE_PREFIX):
            raise ValueError(f"unknown continuation {self.continuation!r}")
        object.__setattr__(self, "prefix", prefix)

    def __len__(self):
        return len(self.prefix)

    @property
    def first(self):
        return self.prefix[0]

    def at(self, k):
        """Action at 0-based position ``k``."""
        L = len(self.prefix)
        if k < L:
            return self.prefix[k]
        if self.continuation == REPEAT_LAST:
            return self.prefix[-1]
        return self.prefix[k % L]

    def unroll(self, n):
        return np.array([self.at(k) for k in range(n)], dtype=np.int64)

    def shifted(self, n=1):
        """The sequence with its first ``n`` actions dropped (unrolled far enough)."""
        L = len(self.prefix)
        if self.continuation == REPEAT_LAST:
            rest = self.prefix[n:] or (self.prefix[-1],)
            return ActionSequence(rest, REPEAT_LAST)
        return ActionSequence(tuple(self.at(n + k) for k in range(L)), CYCLE_PREFIX)


# --- tabular encoding and the example environments -------------------------

def encode_tabular(P, r, gamma, beta, states=(), actions=()) -> LinearAtstMdp:
    """Indicator encoding of a tabular ATST-MDP with ``d = S * A``."""
    P = np.asarray(P, dtype=float)
    r = np.asarray(r, dtype=float)
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        raise ModelValidationError(f"P must have shape (S, A, S), got {P.shape}")
    S, A, _ = P.shape
    if r.shape != (S, A):
        raise ModelValidationError(f"r must have shape ({S}, {A}), got {r.shape}")
    names_s = tuple(states) or tuple(f"s{i}" for i in range(S))
    names_a = tuple(actions) or tuple(f"a{i}" for i in range(A))
    for s in range(S):
        for a in range(A):
            cell = (names_s[s], names_a[a])
            if P[s, a].min() < 0.0 or abs(P[s, a].sum() - 1.0) > STOCH_TOL:
                raise NonStochasticKernel(f"row sums to {P[s, a].sum():.12g}", cell=cell)
            if not 0.0 <= r[s, a] <= 1.0:
                raise NormBoundViolated(f"reward {r[s, a]} outside [0, 1]", cell=cell)
    d = S * A
    phi = np.zeros((S, A, d))
    for s in range(S):
        for a in range(A):
            phi[s, a, s * A + a] = 1.0
    mu = P.reshape(d, S)
    theta = r.reshape(d)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (A,))
    return LinearAtstMdp(phi, mu, theta, gamma, beta, names_s, names_a)


def make_faulty_channel(base: LinearAtstMdp, beta_star: float) -> LinearAtstMdp:
    return base.with_beta(np.full(base.A, float(beta_star)))


def make_paid_observations(base: LinearAtstMdp, cost, c_max: float) -> LinearAtstMdp:
    """Split every action into a free blind copy and a paid observing copy.

    New action ``2*a`` is the blind version, ``2*a + 1`` the observing one.
    """
    cost = np.broadcast_to(np.asarray(cost, dtype=float), (base.S, base.A))
    if c_max <= 0:
        raise CostOutOfRange(f"c_max must be positive, got {c_max}")
    bad = np.argwhere((cost < 0) | (cost > c_max))
    if len(bad):
        s, a = bad[0]
        raise CostOutOfRange(f"cost {cost[s, a]} outside [0, {c_max}]",
                             cell=(base.states[s], base.actions[a]))
    S, A, d = base.phi.shape
    phi = np.zeros((S, 2 * A, d + 1))
    for i in (0, 1):
        phi[:, i::2, :d] = base.phi * math.sqrt(d)
        phi[:, i::2, d] = 1.0 - i * cost / c_max
    phi /= math.sqrt(d + 1)
    scale = math.sqrt((d + 1) / d)
    theta = scale / (1.0 + c_max) * np.concatenate([base.theta, [c_max * math.sqrt(d)]])
    mu = scale * np.vstack([base.mu, np.zeros((1, S))])
    beta = np.tile([0.0, 1.0], A)
    actions = tuple(f"{name}{suffix}" for name in base.actions for suffix in ("_0", "_1"))
    return LinearAtstMdp(phi, mu, theta, base.gamma, beta, base.states, actions)


def make_reset_to_observe(base: LinearAtstMdp, lambda_reset, name="a_reset") -> LinearAtstMdp:
    """Append a restart action (last index) that always bursts and redraws the state."""
    lam = np.asarray(lambda_reset, dtype=float)
    if lam.shape != (base.S,) or lam.min() < 0 or abs(lam.sum() - 1.0) > STOCH_TOL:
        raise NonStochasticReset(f"reset distribution sums to {lam.sum():.12g}")
    S, A, d = base.phi.shape
    phi = np.zeros((S, A + 1, d + 1))
    phi[:, :A, :d] = base.phi
    phi[:, A, d] = 1.0
    theta = np.concatenate([base.theta, [0.0]])
    mu = np.vstack([base.mu, lam[None, :]])
    beta = np.zeros(A + 1)
    beta[A] = 1.0
    return LinearAtstMdp(phi, mu, theta, base.gamma, beta, base.states,
                         base.actions + (name,))


# --- model files -------------------------------------------------------------

def _beta_from_doc(doc, actions):
    beta = doc["beta"]
    if isinstance(beta, dict):
        missing = [a for a in actions if a not in beta]
        if missing:
            raise ModelValidationError("beta missing entry", cell=("action", missing[0]))
        return [beta[a] for a in actions]
    if isinstance(beta, (int, float)):
        return [float(beta)] * len(actions)
    return beta


def model_from_dict(doc: dict) -> LinearAtstMdp:
    try:
        return _model_from_dict(doc)
    except ModelValidationError:
        raise
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ModelValidationError(f"malformed model document: {exc!r}") from exc


def _model_from_dict(doc: dict) -> LinearAtstMdp:
    if not isinstance(doc, dict):
        raise ModelValidationError("model document must be a JSON object")
    if "P" in doc:
        P = np.asarray(doc["P"], dtype=float)
        states = tuple(doc.get("states") or (f"s{i}" for i in range(P.shape[0])))
        actions = tuple(doc.get("actions") or (f"a{i}" for i in range(P.shape[1])))
        return encode_tabular(P, doc["r"], doc["gamma"], _beta_from_doc(doc, actions),
                              states, actions)
    if "phi" in doc:
        phi = np.asarray(doc["phi"], dtype=float)
        if "d" in doc and phi.shape[-1] != int(doc["d"]):
            raise ModelValidationError(f"phi vectors have length {phi.shape[-1]}, d={doc['d']}")
        states = tuple(doc.get("states") or (f"s{i}" for i in range(phi.shape[0])))
        actions = tuple(doc.get("actions") or (f"a{i}" for i in range(phi.shape[1])))
        return LinearAtstMdp(phi, doc["mu"], doc["theta"], doc["gamma"],
                             _beta_from_doc(doc, actions), states, actions)
    raise ModelValidationError("model file needs either tabular {P, r} or linear {phi, mu, theta}")


def model_to_dict(mdp: LinearAtstMdp) -> dict:
    return {
        "states": list(mdp.states),
        "actions": list(mdp.actions),
        "d": mdp.d,
        "phi": mdp.phi.tolist(),
        "mu": mdp.mu.tolist(),
        "theta": mdp.theta.tolist(),
        "gamma": mdp.gamma,
        "beta": dict(zip(mdp.actions, mdp.beta.tolist())),
    }


def load_model(path) -> LinearAtstMdp:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(mdp: LinearAtstMdp, path):
    Path(path).write_text(json.dumps(model_to_dict(mdp), indent=1))
