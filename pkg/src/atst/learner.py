"""Optimistic least-squares value iteration over action sequences.

The learner regresses the sequence value ``K_u(s, a-bar)`` on the features
``psi(s, a-bar)`` and acts greedily with respect to an upper-confidence
bonus.  Sequences are searched over a finite family: every prefix of length
``search_depth`` continued by repeating its last action (exhaustive), or a
beam search over the same family when it is too large.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, OptimizerBudgetExceeded
from .features import PsiEngine
from .model import ActionSequence
from .sim import EpisodeTranscript, SeededRng, as_generator, run_episode

log = logging.getLogger(__name__)

EXHAUSTIVE = "exhaustive"
BEAM = "beam"
AUTO = "auto"


@dataclass(frozen=True)
class OptimizerSettings:
    search_depth: int = 4
    strategy: str = AUTO
    beam_width: int = 64
    node_budget: int = 100_000

    def __post_init__(self):
        if self.search_depth < 1:
            raise ConfigError("search_depth must be >= 1", cell="optimizer.search_depth")
        if self.strategy not in (EXHAUSTIVE, BEAM, AUTO):
            raise ConfigError(f"unknown optimizer strategy {self.strategy!r}",
                              cell="optimizer.strategy")
        if self.beam_width < 1:
            raise ConfigError("beam_width must be >= 1", cell="optimizer.beam_width")

    def resolve(self, A):
        if self.strategy != AUTO:
            return self.strategy
        return EXHAUSTIVE if A ** self.search_depth <= self.node_budget else BEAM


def default_horizon(K, gamma):
    return math.ceil(math.log(K / (1.0 - gamma)) / (1.0 - gamma)) + 1


def default_rho(d, H, K, p, c_rho):
    iota = math.log(2.0 * d * K * H / p)
    return c_rho * d * H * math.sqrt(iota)


@dataclass(frozen=True)
class LearnerConfig:
    H: int
    rho: float
    lam: float = 1.0
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    incremental_gram: bool = False
    check_weights: bool = True

    def __post_init__(self):
        if self.H < 2:
            raise ConfigError("H must be >= 2", cell="learner.H")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive", cell="learner.lam")
        if self.rho < 0:
            raise ConfigError("rho must be non-negative", cell="learner.rho")

    @classmethod
    def from_theory(cls, K, gamma, d, p=0.05, c_rho=0.1, H=None, lam=1.0, **kw):
        """Defaults derived from the episode budget: ``H`` from ``K`` and ``gamma``,
        ``rho = c_rho * d * H * sqrt(log(2 d K H / p))`` with ``d`` the feature
        dimension of psi's half."""
        H = default_horizon(K, gamma) if H is None else int(H)
        return cls(H=H, rho=default_rho(d, H, K, p, c_rho), lam=lam, **kw)


class SequenceFamily:
    """Candidate sequences and their cached feature rows for bare states."""

    def __init__(self, engine: PsiEngine, settings: OptimizerSettings):
        self.engine = engine
        self.settings = settings
        self.strategy = settings.resolve(engine.A)
        self._L = engine.series.trunc_depth + 1
        self.prefixes = None
        self.table = None
        if self.strategy == EXHAUSTIVE:
            C = engine.A ** settings.search_depth
            if C > 10 * settings.node_budget:
                raise OptimizerBudgetExceeded(
                    f"exhaustive family has {C} sequences, budget {settings.node_budget}")
            self.prefixes = np.array(
                list(itertools.product(range(engine.A), repeat=settings.search_depth)),
                dtype=np.int64)
            acts = self.unrolled(self.prefixes)
            S, Cn = engine.S, acts.shape[0]
            rows = engine.psi_unrolled(np.repeat(np.arange(S), Cn), np.tile(acts, (S, 1)))
            self.table = rows.reshape(S, Cn, -1)

    @property
    def size(self):
        return 0 if self.prefixes is None else self.prefixes.shape[0]

    def unrolled(self, prefixes):
        prefixes = np.asarray(prefixes, dtype=np.int64)
        pad = self._L - prefixes.shape[1]
        if pad <= 0:
            return prefixes[:, :self._L]
        return np.hstack([prefixes, np.repeat(prefixes[:, -1:], pad, axis=1)])

    def sequence(self, prefix) -> ActionSequence:
        return ActionSequence(tuple(int(a) for a in prefix))

    def beam_search(self, s, score):
        """Maximize ``score(rows)`` over the family from bare state ``s``.

        Returns (best prefix, best value, number of rows scored).
        """
        A = self.engine.A
        width = self.settings.beam_width
        beam = np.zeros((1, 0), dtype=np.int64)
        best, best_val, scored = None, -np.inf, 0
        for _ in range(self.settings.search_depth):
            cand = np.hstack([np.repeat(beam, A, axis=0),
                              np.tile(np.arange(A), beam.shape[0])[:, None]])
            rows = self.engine.psi_unrolled(np.full(cand.shape[0], s), self.unrolled(cand))
            vals = score(rows)
            scored += cand.shape[0]
            if scored > self.settings.node_budget:
                raise OptimizerBudgetExceeded(f"beam search scored {scored} sequences")
            i = int(np.argmax(vals))
            if vals[i] > best_val:
                best, best_val = cand[i], float(vals[i])
            order = np.argsort(-vals, kind="stable")[:width]
            beam = cand[np.sort(order)]
        return best, best_val, scored


@dataclass(frozen=True, eq=False)
class Plan:
    weights: np.ndarray      # (H, 2d); row u valid for 1 <= u <= H-1
    factor: tuple
    rho: float
    cap: float
    choices: np.ndarray      # (H, S) candidate indices (exhaustive), -1 otherwise
    values: np.ndarray       # (H, S) max_a K_u(s, a)
    nodes: int
    truncation_gap: float

    def stage(self, u):
        return min(max(int(u), 1), self.weights.shape[0] - 1)


@dataclass
class LearnerState:
    engine: PsiEngine
    cfg: LearnerConfig
    family: SequenceFamily
    features: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    next_states: list = field(default_factory=list)   # -1 for the terminal state
    gram: np.ndarray = None
    k: int = 0
    bursts_in_episode: int = 0

    @property
    def n(self):
        return len(self.features)

    @property
    def dim(self):
        return 2 * self.engine.d

    def gram_rebuild(self):
        X = self.design()
        return self.cfg.lam * np.eye(self.dim) + X.T @ X

    def design(self):
        if not self.features:
            return np.zeros((0, self.dim))
        return np.asarray(self.features)


def init_learner(engine: PsiEngine, cfg: LearnerConfig) -> LearnerState:
    st = LearnerState(engine, cfg, SequenceFamily(engine, cfg.optimizer))
    st.gram = cfg.lam * np.eye(st.dim)
    return st


def _weight_bound(st: LearnerState):
    cfg, gamma = st.cfg, st.engine.gamma
    H, lam, d = cfg.H, cfg.lam, st.engine.d
    if H >= 1.0 / (1.0 - gamma):
        return 4.0 * math.sqrt(d * max(st.k, 1) * H ** 3 / lam)
    T = H + 1.0 / (1.0 - gamma)
    return T * math.sqrt(2.0 * d * max(st.n, 1) / lam)


def plan(st: LearnerState) -> Plan:
    """Backward regression for ``u = H-1, ..., 1`` on all data so far."""
    cfg, eng = st.cfg, st.engine
    H, S = cfg.H, eng.S
    cap = 1.0 / (1.0 - eng.gamma)
    gram = st.gram if cfg.incremental_gram else st.gram_rebuild()
    factor = cho_factor(gram)
    X = st.design()
    rbar = np.minimum(np.asarray(st.rewards, dtype=float), H)
    nxt = np.asarray(st.next_states, dtype=np.int64)
    base = X.T @ rbar if st.n else np.zeros(st.dim)
    G = np.zeros((st.dim, S))
    if st.n:
        seen = nxt >= 0
        np.add.at(G.T, nxt[seen], X[seen])

    weights = np.zeros((H, st.dim))
    values = np.zeros((H + 1, S))
    values[H] = cap
    choices = np.full((H, S), -1, dtype=np.int64)
    nodes = 0
    fam = st.family
    bound = _weight_bound(st) if cfg.check_weights else None
    if fam.strategy == EXHAUSTIVE:
        T = fam.table
        flat = T.reshape(-1, st.dim)
        sol = cho_solve(factor, flat.T)
        bonus = np.sqrt(np.maximum(np.einsum("ij,ji->i", flat, sol), 0.0)).reshape(T.shape[:2])
    for u in range(H - 1, 0, -1):
        w = cho_solve(factor, base + G @ values[u + 1])
        if bound is not None and np.linalg.norm(w) > bound * (1 + 1e-9):
            raise AssertionError(f"weight norm {np.linalg.norm(w):.4g} exceeds bound {bound:.4g}")
        weights[u] = w
        if fam.strategy == EXHAUSTIVE:
            # argmax of the unclipped score also maximizes the clipped one and
            # keeps saturated candidates distinguishable
            raw = T @ w + cfg.rho * bonus
            idx = np.argmax(raw, axis=1)
            choices[u] = idx
            values[u] = np.clip(raw[np.arange(S), idx], 0.0, cap)
            nodes += raw.size
        else:
            for s in range(S):
                _, val, scored = fam.beam_search(s, _scorer(factor, w, cfg.rho))
                values[u, s] = min(max(val, 0.0), cap)
                nodes += scored
    wmax = float(np.linalg.norm(weights, axis=1).max())
    gap = 2.0 * eng.tail_bound * (wmax + cfg.rho / math.sqrt(cfg.lam))
    return Plan(weights, factor, cfg.rho, cap, choices, values[:H], nodes, gap)


def _scorer(factor, w, rho):
    """Unclipped optimistic score; clipping is applied to the maximum only."""
    def score(rows):
        sol = cho_solve(factor, rows.T)
        bonus = np.sqrt(np.maximum(np.einsum("ij,ji->i", rows, sol), 0.0))
        return rows @ w + rho * bonus
    return score


def select_sequence(st: LearnerState, pl: Plan, u, s) -> ActionSequence:
    """Greedy optimistic sequence after the ``u``-th observation of ``s``.
    Bursts past ``H - 1`` reuse the last stage."""
    j = pl.stage(u)
    fam = st.family
    if fam.strategy == EXHAUSTIVE:
        return fam.sequence(fam.prefixes[pl.choices[j, s]])
    best, _, _ = fam.beam_search(s, _scorer(pl.factor, pl.weights[j], pl.rho))
    return fam.sequence(best)


def observe_burst(st: LearnerState, s_prev, seq: ActionSequence, reward, s_next):
    """Record one burst tuple; only the first ``H`` of an episode are kept."""
    if st.bursts_in_episode >= st.cfg.H:
        return False
    st.bursts_in_episode += 1
    f = st.engine.psi(int(s_prev), seq)
    st.features.append(f)
    st.rewards.append(float(reward))
    st.next_states.append(-1 if s_next is None else int(s_next))
    if st.cfg.incremental_gram:
        st.gram = st.gram + np.outer(f, f)
    return True


def end_episode(st: LearnerState):
    st.k += 1
    st.bursts_in_episode = 0


@dataclass
class EpisodeRecord:
    episode: int
    initial_state: int
    realized_reward: float
    v_star: float
    v_pi: float
    planning_ms: float
    opt_nodes: int
    bursts: int

    @property
    def regret(self):
        return self.v_star - self.v_pi


REGRET_COLUMNS = ("episode", "initial_state", "realized_reward", "V_star_s1", "V_pik_s1",
                  "regret_contrib", "planning_ms", "opt_nodes", "bursts")


@dataclass
class RegretLog:
    records: list = field(default_factory=list)

    def regrets(self):
        return np.array([r.regret for r in self.records])

    def cumulative(self):
        return np.cumsum(self.regrets())

    def write_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REGRET_COLUMNS)
            for r in self.records:
                w.writerow([r.episode, r.initial_state, f"{r.realized_reward:.10g}",
                            f"{r.v_star:.10g}", f"{r.v_pi:.10g}", f"{r.regret:.10g}",
                            f"{r.planning_ms:.3f}", r.opt_nodes, r.bursts])


def fixed_schedule(state):
    return lambda k: int(state)


def cyclic_schedule(states):
    states = [int(s) for s in states]
    return lambda k: states[(k - 1) % len(states)]


def deployed_value(st: LearnerState, pl: Plan, oracle):
    """Exact value on S of the burst-dependent policy defined by ``pl``."""
    fam = st.family
    H = st.cfg.H
    if fam.strategy == EXHAUSTIVE:
        acts = fam.unrolled(fam.prefixes)
        return oracle.value_of_choices(id(fam), acts, pl.choices[1:H])
    stages = [[select_sequence(st, pl, u, s) for s in range(st.engine.S)] for u in range(1, H)]
    return oracle.value_of_stages(stages)


def run_learning(mdp, engine: PsiEngine, K, schedule, cfg: LearnerConfig, rng, oracle=None,
                 transcripts=None, on_episode=None) -> RegretLog:
    """Run ``K`` episodes against the simulator.

    ``schedule(k)`` gives the initial state of episode ``k``; ``oracle`` (a
    ``RegretOracle``) enables per-episode regret against exact values.
    """
    seeds = rng if isinstance(rng, SeededRng) else SeededRng(int(as_generator(rng).integers(2**31)))
    st = init_learner(engine, cfg)
    cum = np.cumsum(mdp.kernel(), axis=2)
    cum /= cum[:, :, -1:]
    out = RegretLog()
    for k in range(1, K + 1):
        t0 = time.perf_counter()
        pl = plan(st)
        ms = 1e3 * (time.perf_counter() - t0)
        s1 = schedule(k)
        tr: EpisodeTranscript = run_episode(
            mdp, s1, lambda s, u: select_sequence(st, pl, u, s), seeds.child(k), cum)
        for b in tr.bursts:
            observe_burst(st, b.observed_state, b.action_seq, b.aggregated_reward, b.next_observed)
        end_episode(st)
        if oracle is not None:
            v_pi = float(deployed_value(st, pl, oracle)[s1])
            v_star = float(oracle.v_star[s1])
        else:
            v_pi = v_star = float("nan")
        out.records.append(EpisodeRecord(k, s1, tr.total_reward, v_star, v_pi, ms, pl.nodes,
                                         len(tr.bursts)))
        if transcripts is not None:
            transcripts.append((k, tr))
        if on_episode is not None:
            on_episode(k, st, pl)
        if k % 200 == 0:
            log.info("episode %d: cumulative regret %.3f, truncation gap %.2e", k,
                     out.cumulative()[-1] if oracle is not None else float("nan"),
                     pl.truncation_gap)
    return out
