"""Action-sequence feature map: exact, estimated and normalized variants.

The two action-sequence matrix series are truncated after ``L_ser`` terms.
Every product of true action-matrices has spectral norm at most sqrt(d), and
with estimates off by at most ``eps`` a product of ``k`` of them is bounded
by ``sqrt(d) * (1 + eps*sqrt(d))**k``, so the discarded tail is bounded by
``sqrt(d) * g**(L+1) / (1 - g)`` with growth ``g = gamma * (1 + eps*sqrt(d))``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .belief import ActionMatrixSet, extended_feature
from .errors import EpsilonTooLarge
from .model import ActionSequence, AugmentedState, LinearAtstMdp

EXACT = "exact"
ESTIMATED = "estimated"
NORMALIZED = "normalized"

DEFAULT_SERIES_EPS = 1e-8


@dataclass(frozen=True)
class SeriesConfig:
    trunc_depth: int
    gamma: float
    d: int
    growth: float = None  # defaults to gamma (exact matrices)

    def __post_init__(self):
        if self.trunc_depth < 1:
            raise ValueError("series truncation depth must be positive")
        if self.growth is None:
            object.__setattr__(self, "growth", self.gamma)
        if not 0.0 < self.growth < 1.0:
            raise ValueError(f"series growth factor {self.growth} must lie in (0, 1)")

    @property
    def tail_bound(self):
        g = self.growth
        return g ** (self.trunc_depth + 1) * math.sqrt(self.d) / (1.0 - g)

    @classmethod
    def for_target(cls, gamma, d, eps_ser=DEFAULT_SERIES_EPS, growth=None):
        g = gamma if growth is None else growth
        L = math.ceil(math.log(math.sqrt(d) / (eps_ser * (1.0 - g))) / math.log(1.0 / g))
        return cls(max(L, 1), gamma, d, growth)


@dataclass(frozen=True, eq=False)
class PsiEngine:
    mode: str
    matrices: np.ndarray     # (A, d, d), true or estimated
    burst_probs: np.ndarray  # (A,)
    phi: np.ndarray          # (S, A, d), known to the learner
    gamma: float
    series: SeriesConfig
    norm_divisor: float = 1.0
    admissibility: float = 0.0
    eps: float = 0.0
    eps_beta: float = 0.0
    states: tuple = ()
    actions: tuple = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.norm_divisor < 1.0:
            raise ValueError("norm divisor must be >= 1")
        for name in ("matrices", "burst_probs", "phi"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def d(self):
        return self.matrices.shape[1]

    @property
    def A(self):
        return self.matrices.shape[0]

    @property
    def S(self):
        return self.phi.shape[0]

    @property
    def tail_bound(self):
        return self.series.tail_bound

    @property
    def ams(self):
        return ActionMatrixSet(self.matrices)

    def next_features(self, x, a):
        """phi(x + a) computed with the engine's matrices."""
        if isinstance(x, (int, np.integer)):
            return self.phi[x, a]
        if x.terminal:
            return np.zeros(self.d)
        if x.depth == 0:
            return self.phi[x.anchor, a]
        v = self.phi[x.anchor, x.tail[0]]
        for b in x.tail[1:] + (a,):
            v = v @ self.matrices[b]
        return v

    def psi(self, x, seq: ActionSequence) -> np.ndarray:
        if isinstance(x, AugmentedState) and x.terminal:
            return np.zeros(2 * self.d)
        L = self.series.trunc_depth
        acts = seq.unroll(L + 1)
        row = _kernels.psi_rows(self.next_features(x, acts[0])[None, :], acts[:1],
                                acts[None, 1:], self.matrices, self.burst_probs, self.gamma)
        return row[0] / self.norm_divisor

    def psi_batch(self, states, sequences) -> np.ndarray:
        """Rows for bare states ``states[i]`` paired with ``sequences[i]``."""
        states = np.asarray(states, dtype=np.int64)
        L = self.series.trunc_depth
        acts = np.stack([seq.unroll(L + 1) for seq in sequences])
        return self.psi_unrolled(states, acts)

    def psi_unrolled(self, states, acts) -> np.ndarray:
        """Rows for bare states and already unrolled action arrays (n, >= L+1)."""
        L = self.series.trunc_depth
        acts = np.asarray(acts, dtype=np.int64)
        if acts.shape[1] < L + 1:
            pad = np.repeat(acts[:, -1:], L + 1 - acts.shape[1], axis=1)
            acts = np.hstack([acts, pad])
        first = acts[:, 0]
        phi_next = self.phi[states, first]
        rows = _kernels.psi_rows(phi_next, first, acts[:, 1:L + 1], self.matrices,
                                 self.burst_probs, self.gamma)
        return rows / self.norm_divisor

    def m1_m2(self, tail: ActionSequence):
        return m1_m2(self, tail)

    def to_dict(self):
        return {
            "mode": self.mode,
            "M": {a: m.tolist() for a, m in zip(self.actions, self.matrices)},
            "beta": dict(zip(self.actions, self.burst_probs.tolist())),
            "phi": self.phi.tolist(),
            "states": list(self.states),
            "actions": list(self.actions),
            "gamma": self.gamma,
            "d": self.d,
            "L_ser": self.series.trunc_depth,
            "series_growth": self.series.growth,
            "norm_divisor": self.norm_divisor,
            "admissibility": self.admissibility,
            "eps": self.eps,
            "eps_beta": self.eps_beta,
            **self.extra,
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def load_engine(path) -> PsiEngine:
    doc = json.loads(Path(path).read_text())
    actions = tuple(doc["actions"])
    series = SeriesConfig(int(doc["L_ser"]), float(doc["gamma"]), int(doc["d"]),
                          doc.get("series_growth"))
    known = {"mode", "M", "beta", "phi", "states", "actions", "gamma", "d", "L_ser",
             "series_growth", "norm_divisor", "admissibility", "eps", "eps_beta"}
    return PsiEngine(
        mode=doc["mode"],
        matrices=np.array([doc["M"][a] for a in actions]),
        burst_probs=np.array([doc["beta"][a] for a in actions]),
        phi=np.array(doc["phi"]),
        gamma=float(doc["gamma"]),
        series=series,
        norm_divisor=float(doc.get("norm_divisor", 1.0)),
        admissibility=float(doc.get("admissibility", 0.0)),
        eps=float(doc.get("eps", 0.0)),
        eps_beta=float(doc.get("eps_beta", 0.0)),
        states=tuple(doc["states"]),
        actions=actions,
        extra={k: v for k, v in doc.items() if k not in known},
    )


def exact_engine(mdp: LinearAtstMdp, ams: ActionMatrixSet = None, eps_ser=DEFAULT_SERIES_EPS,
                 trunc_depth=None) -> PsiEngine:
    if ams is None:
        from .belief import action_matrices
        ams = action_matrices(mdp)
    series = (SeriesConfig(trunc_depth, mdp.gamma, mdp.d) if trunc_depth
              else SeriesConfig.for_target(mdp.gamma, mdp.d, eps_ser))
    return PsiEngine(EXACT, ams.matrices, mdp.beta, mdp.phi, mdp.gamma, series,
                     states=mdp.states, actions=mdp.actions)


def m1_m2(engine: PsiEngine, tail: ActionSequence):
    """Truncated type-1 and type-2 action-sequence matrices of ``tail``."""
    d = engine.d
    gamma = engine.gamma
    M1 = np.eye(d)
    M2 = np.zeros((d, d))
    prod = np.eye(d)
    weight = 1.0
    g = 1.0
    for k in range(engine.series.trunc_depth):
        a = tail.at(k)
        prod = prod @ engine.matrices[a]
        g *= gamma
        M1 += g * weight * prod
        M2 += g * weight * engine.burst_probs[a] * prod
        weight *= 1.0 - engine.burst_probs[a]
    return M1, M2


def psi(engine: PsiEngine, x, seq: ActionSequence) -> np.ndarray:
    return engine.psi(x, seq)


def psi_from_matrices(engine: PsiEngine, x, seq: ActionSequence) -> np.ndarray:
    """Same map assembled from the explicit M1/M2 matrices (slow reference path)."""
    if isinstance(x, AugmentedState) and x.terminal:
        return np.zeros(2 * engine.d)
    a = seq.first
    f = engine.next_features(x, a)
    M1, M2 = m1_m2(engine, seq.shifted(1))
    b = engine.burst_probs[a]
    g = engine.gamma
    d = engine.d
    I12 = np.hstack([(1 - g) * np.eye(d), g * np.eye(d)])
    M12 = np.hstack([(1 - g) * M1, g * M2])
    return 0.5 * f @ (b * I12 + (1 - b) * M12) / engine.norm_divisor


def k_weight_vector(mdp: LinearAtstMdp, V) -> np.ndarray:
    """Weight vector making the action-sequence value linear in the features."""
    V = np.asarray(V, dtype=float)
    return 2.0 * np.concatenate([mdp.theta / (1.0 - mdp.gamma), mdp.mu @ V])


def estimation_bound(d, gamma, eps, eps_beta):
    return 16.0 * d * (eps + eps_beta / math.sqrt(d)) / (1.0 - gamma)


def build_estimated(matrix_estimates, beta_estimates, eps, eps_beta, gamma, d, phi,
                    per_matrix_correction=False, eps_ser=DEFAULT_SERIES_EPS,
                    states=(), actions=()) -> PsiEngine:
    """Normalized estimated feature map from estimated matrices and burst probabilities.

    The default divides the estimated map by ``1 + 16 d (eps + eps_beta/sqrt(d)) / (1-gamma)``.
    ``per_matrix_correction`` instead rescales each matrix by ``1 + eps sqrt(d)``
    and normalizes with the matching ``4 d^2 (eps + eps_beta / d^1.5) / (1-gamma)`` bound.
    """
    root_d = math.sqrt(d)
    if eps < 0 or eps > (1.0 - gamma) / (2.0 * root_d) + 1e-15:
        raise EpsilonTooLarge(f"eps={eps:.4g} exceeds (1-gamma)/(2 sqrt d) = "
                              f"{(1.0 - gamma) / (2.0 * root_d):.4g}")
    if not 0.0 <= eps_beta <= 1.0:
        raise ValueError(f"eps_beta={eps_beta} outside [0, 1]")
    Ms = np.array(matrix_estimates, dtype=float)
    if per_matrix_correction:
        Ms = Ms / (1.0 + eps * root_d)
        err = 4.0 * d * d * (eps + eps_beta / d ** 1.5) / (1.0 - gamma)
        growth = gamma
    else:
        err = estimation_bound(d, gamma, eps, eps_beta)
        growth = gamma * (1.0 + eps * root_d)
    series = SeriesConfig.for_target(gamma, d, eps_ser, growth=growth)
    return PsiEngine(NORMALIZED, Ms, np.clip(beta_estimates, 0.0, 1.0), phi, gamma, series,
                     norm_divisor=1.0 + err, admissibility=2.0 * err, eps=eps,
                     eps_beta=eps_beta, states=tuple(states), actions=tuple(actions),
                     extra={"per_matrix_correction": bool(per_matrix_correction)})


def raw_estimated(matrix_estimates, beta_estimates, gamma, phi, eps=0.0, eps_ser=DEFAULT_SERIES_EPS,
                  states=(), actions=()) -> PsiEngine:
    """Unnormalized plug-in map (estimated mode)."""
    Ms = np.array(matrix_estimates, dtype=float)
    d = Ms.shape[1]
    growth = gamma * (1.0 + eps * math.sqrt(d))
    if growth >= 1.0:
        growth = 0.5 * (1.0 + gamma)
    series = SeriesConfig.for_target(gamma, d, eps_ser, growth=growth)
    return PsiEngine(ESTIMATED, Ms, np.clip(beta_estimates, 0.0, 1.0), phi, gamma, series,
                     eps=eps, states=tuple(states), actions=tuple(actions))


# --- admissibility ----------------------------------------------------------

@dataclass
class AdmissibilityReport:
    eps_target: float
    n_samples: int
    max_error: float
    max_norm: float
    max_prefix_change: float
    prefix_limit: float
    worst: list
    passed: bool

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: max ||psi_hat - psi|| = {self.max_error:.4g} (target {self.eps_target:.4g}), "
                f"max ||psi_hat|| = {self.max_norm:.6g}, prefix change = "
                f"{self.max_prefix_change:.3g} (limit {self.prefix_limit:.3g})")

    def to_dict(self):
        return {k: getattr(self, k) for k in ("eps_target", "n_samples", "max_error", "max_norm",
                                              "max_prefix_change", "prefix_limit", "worst",
                                              "passed")}


def random_sequences(rng, A, n, max_len, continuation=None):
    from .model import CYCLE_PREFIX, REPEAT_LAST
    out = []
    for _ in range(n):
        L = int(rng.integers(1, max_len + 1))
        cont = continuation or (REPEAT_LAST if rng.random() < 0.5 else CYCLE_PREFIX)
        out.append(ActionSequence(tuple(rng.integers(A, size=L)), cont))
    return out


def check_admissible(engine: PsiEngine, reference: PsiEngine, eps_target, n_samples=500,
                     rng=None, max_len=None, norm_slack=1e-9, n_worst=5) -> AdmissibilityReport:
    """Sampled check of the three admissibility conditions against ``reference``.

    Continuity is checked as prefix stability: two sequences that agree on
    their first ``L_ser + 1`` actions must map within ``2 * tail_bound``.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(0) if rng is None else rng
    L = engine.series.trunc_depth
    max_len = max_len or min(L + 1, 12)
    states = rng.integers(engine.S, size=n_samples)
    seqs = random_sequences(rng, engine.A, n_samples, max_len)
    est = engine.psi_batch(states, seqs)
    ref = reference.psi_batch(states, seqs)
    err = np.linalg.norm(est - ref, axis=1)
    norms = np.linalg.norm(est, axis=1)
    # perturb everything after the first L+1 actions
    head = np.stack([s.unroll(L + 1) for s in seqs])
    alt_tail = rng.integers(engine.A, size=(n_samples, L + 20))
    alt = engine.psi_unrolled(states, np.hstack([head, alt_tail]))
    change = np.linalg.norm(alt - est, axis=1)
    limit = 2.0 * engine.tail_bound
    order = np.argsort(-err)[:n_worst]
    worst = [{"state": int(states[i]), "prefix": list(seqs[i].prefix),
              "continuation": seqs[i].continuation, "error": float(err[i]),
              "norm": float(norms[i])} for i in order]
    passed = bool(err.max() <= eps_target and norms.max() <= 1.0 + norm_slack
                  and change.max() <= limit + 1e-15)
    return AdmissibilityReport(float(eps_target), n_samples, float(err.max()), float(norms.max()),
                               float(change.max()), limit, worst, passed)
