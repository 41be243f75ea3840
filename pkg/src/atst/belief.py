"""Action-matrices, beliefs over hidden states, and exact planning on the
truncated augmented-state tree.

The tree holds every augmented state ``(s; a_1..a_D)`` whose pending actions
can all fail to burst (``beta(a) < 1``); nodes reached through an action that
always bursts are never queried by the Bellman operator, so they are skipped.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DepthExhausted, EmptyTail, ModelValidationError, PlanningTooLarge
from .model import EXACT_TOL, STOCH_TOL, AugmentedState, LinearAtstMdp

NODE_BUDGET = 1_000_000


@dataclass(frozen=True, eq=False)
class ActionMatrixSet:
    matrices: np.ndarray  # (A, d, d)

    def __getitem__(self, a):
        return self.matrices[a]

    def __len__(self):
        return self.matrices.shape[0]

    def product(self, actions):
        d = self.matrices.shape[1]
        out = np.eye(d)
        for a in actions:
            out = out @ self.matrices[a]
        return out


def action_matrices(mdp: LinearAtstMdp, check_depth=4, max_checks=256, seed=0) -> ActionMatrixSet:
    """``M_a = sum_s mu[:, s] phi(s, a)^T`` with a spot check of product norms."""
    Ms = np.einsum("ds,sae->ade", mdp.mu, mdp.phi)
    Ms.setflags(write=False)
    ams = ActionMatrixSet(Ms)
    bound = math.sqrt(mdp.d) + STOCH_TOL
    rng = np.random.default_rng(seed)
    for n in range(1, check_depth + 1):
        if mdp.A ** n <= max_checks:
            words = itertools.product(range(mdp.A), repeat=n)
        else:
            words = (tuple(rng.integers(mdp.A, size=n)) for _ in range(max_checks))
        for word in words:
            norm = np.linalg.norm(ams.product(word), 2)
            if norm > bound:
                raise ModelValidationError(f"action-matrix product norm {norm:.6g} > sqrt(d)",
                                           cell=tuple(mdp.actions[a] for a in word))
    return ams


def extended_feature(mdp: LinearAtstMdp, ams: ActionMatrixSet, x: AugmentedState) -> np.ndarray:
    if x.terminal or x.depth == 0:
        raise EmptyTail("extended features need at least one pending action; use phi(s, a)")
    v = mdp.phi[x.anchor, x.tail[0]].copy()
    for a in x.tail[1:]:
        v = v @ ams[a]
    return v


def _clean_distribution(b, where):
    low = b.min()
    if low < -EXACT_TOL:
        raise ModelValidationError(f"belief has negative mass {low:.3g}", cell=where)
    b = np.clip(b, 0.0, None)
    total = b.sum()
    if abs(total - 1.0) > STOCH_TOL:
        raise ModelValidationError(f"belief sums to {total:.12g}", cell=where)
    return b / total


def belief(mdp: LinearAtstMdp, ams: ActionMatrixSet, x: AugmentedState) -> np.ndarray:
    """Distribution of the current hidden state given ``x`` (depth >= 1)."""
    return _clean_distribution(extended_feature(mdp, ams, x) @ mdp.mu, (x.anchor, x.tail))


# --- truncated augmented tree ----------------------------------------------

class AugmentedTree:
    """Level-ordered enumeration of augmented states up to ``depth``.

    For level ``k`` the arrays are ``anchors[k]`` (n_k,), ``tails[k]``
    (n_k, k), ``next_phi[k]`` (n_k, A, d) holding ``phi(x + a)`` for every
    action, and ``child[k]`` (n_k, A) pointing into level ``k + 1`` (-1 when
    the action always bursts or the depth cap is reached).
    """

    def __init__(self, mdp: LinearAtstMdp, ams: ActionMatrixSet, depth: int,
                 node_budget=NODE_BUDGET):
        if depth < 0:
            raise DepthExhausted("tree depth must be non-negative")
        self.mdp = mdp
        self.depth = depth
        blind = [a for a in range(mdp.A) if mdp.beta[a] < 1.0]
        self.blind_actions = blind
        n_blind = len(blind)
        count = sum(mdp.S * n_blind ** k for k in range(depth + 1))
        if count > node_budget:
            raise PlanningTooLarge(f"truncated tree needs {count} nodes (budget {node_budget}); "
                                   "lower the depth")
        S, A, d = mdp.phi.shape
        self.anchors = [np.arange(S)]
        self.tails = [np.zeros((S, 0), dtype=np.int64)]
        self.next_phi = [mdp.phi.copy()]
        self.child = []
        Ms = ams.matrices
        for k in range(depth):
            parents = self.anchors[k].shape[0]
            child = np.full((parents, A), -1, dtype=np.int64)
            if n_blind:
                pid = np.repeat(np.arange(parents), n_blind)
                acts = np.tile(np.array(blind), parents)
                child[pid, acts] = np.arange(pid.shape[0])
                base = self.next_phi[k][pid, acts]  # phi(x + a), shape (m, d)
                nxt = np.einsum("md,bde->mbe", base, Ms)
                self.anchors.append(self.anchors[k][pid])
                self.tails.append(np.hstack([self.tails[k][pid], acts[:, None]]))
                self.next_phi.append(nxt)
            else:
                self.anchors.append(np.zeros(0, dtype=np.int64))
                self.tails.append(np.zeros((0, k + 1), dtype=np.int64))
                self.next_phi.append(np.zeros((0, A, d)))
            self.child.append(child)
        self.child.append(np.full((self.anchors[depth].shape[0], A), -1, dtype=np.int64))
        self._index = None

    @property
    def size(self):
        return sum(a.shape[0] for a in self.anchors)

    def index_of(self, x: AugmentedState):
        if self._index is None:
            self._index = {}
            for k in range(self.depth + 1):
                for i, (s, tail) in enumerate(zip(self.anchors[k], self.tails[k])):
                    self._index[(int(s), tuple(int(a) for a in tail))] = (k, i)
        try:
            return self._index[(x.anchor, x.tail)]
        except KeyError:
            raise KeyError(f"{x} is not in the truncated tree") from None

    def states_at(self, k):
        return [AugmentedState(int(s), tuple(t)) for s, t in zip(self.anchors[k], self.tails[k])]

    def q_values(self, level, V_states, V_next, limit=None):
        """Bellman Q-values on ``level`` given state values and next-level values."""
        mdp = self.mdp
        F = self.next_phi[level]
        v = mdp.mu @ V_states
        reward = F @ mdp.theta
        burst = F @ v
        Q = reward + mdp.gamma * mdp.beta[None, :] * burst
        child = self.child[level]
        if V_next is not None and V_next.shape[0]:
            cont = np.where(child >= 0, V_next[np.maximum(child, 0)], 0.0)
        else:
            cont = np.zeros_like(Q)
        Q += mdp.gamma * mdp.beta_bar[None, :] * cont
        return Q


@dataclass(eq=False)
class ValueTable:
    tree: AugmentedTree
    levels: list  # arrays of values per level, index 0 holds V on S
    depth_cap: int

    def __getitem__(self, x: AugmentedState):
        if x.terminal:
            return 0.0
        k, i = self.tree.index_of(x)
        if k > self.depth_cap:
            raise KeyError(f"{x} beyond depth cap {self.depth_cap}")
        return float(self.levels[k][i])

    @property
    def on_states(self):
        return self.levels[0]

    def sup_distance(self, other: "ValueTable"):
        depth = min(self.depth_cap, other.depth_cap)
        return max(float(np.max(np.abs(self.levels[k] - other.levels[k]), initial=0.0))
                   for k in range(depth + 1))

    @classmethod
    def constant(cls, tree, value, depth_cap=None):
        depth_cap = tree.depth if depth_cap is None else depth_cap
        return cls(tree, [np.full(tree.anchors[k].shape[0], float(value))
                          for k in range(depth_cap + 1)], depth_cap)

    @classmethod
    def random(cls, tree, rng, depth_cap=None):
        depth_cap = tree.depth if depth_cap is None else depth_cap
        top = 1.0 / (1.0 - tree.mdp.gamma)
        return cls(tree, [rng.uniform(0.0, top, tree.anchors[k].shape[0])
                          for k in range(depth_cap + 1)], depth_cap)


def _check_range(values, gamma):
    top = 1.0 / (1.0 - gamma)
    lo, hi = float(values.min(initial=0.0)), float(values.max(initial=0.0))
    if lo < -STOCH_TOL or hi > top + STOCH_TOL:
        raise AssertionError(f"Bellman output [{lo}, {hi}] escapes [0, {top}]")
    return np.clip(values, 0.0, top)


def bellman_operator(mdp: LinearAtstMdp, ams: ActionMatrixSet, V: ValueTable) -> ValueTable:
    """One application of the optimality operator; the result loses one level."""
    if V.depth_cap == 0:
        raise DepthExhausted("value table of depth 0 cannot be backed up")
    tree = V.tree
    out = []
    for k in range(V.depth_cap):
        Q = tree.q_values(k, V.levels[0], V.levels[k + 1])
        out.append(_check_range(Q.max(axis=1), mdp.gamma))
    return ValueTable(tree, out, V.depth_cap - 1)


def default_iterations(gamma, eps=1e-4):
    return math.ceil(math.log(1.0 / (eps * (1.0 - gamma))) / (1.0 - gamma))


@dataclass(eq=False)
class OptimalSolution:
    values: np.ndarray        # V on S after n backups
    policy: list              # greedy action per tree level, levels 0..n-1
    tree: AugmentedTree
    iterations: int

    @property
    def error_bound(self):
        g = self.tree.mdp.gamma
        return g ** self.iterations / (1.0 - g)

    def greedy_action(self, x: AugmentedState):
        k, i = self.tree.index_of(x)
        return int(self.policy[k][i])


def optimal_values(mdp: LinearAtstMdp, ams: ActionMatrixSet, iterations=None,
                   depth_cap=None, node_budget=NODE_BUDGET) -> OptimalSolution:
    """``n`` backups from ``V = 0``; level ``k`` only ever needs ``n - k`` of them."""
    n = default_iterations(mdp.gamma) if iterations is None else int(iterations)
    D = n if depth_cap is None else int(depth_cap)
    if D < n:
        raise DepthExhausted(f"depth cap {D} below iteration count {n}")
    tree = AugmentedTree(mdp, ams, n, node_budget=node_budget)
    levels = [np.zeros(tree.anchors[k].shape[0]) for k in range(n + 1)]
    policy = [None] * n
    for j in range(1, n + 1):
        top = n - j
        new = []
        for k in range(top + 1):
            Q = tree.q_values(k, levels[0], levels[k + 1])
            new.append(_check_range(Q.max(axis=1), mdp.gamma))
            if k == top:
                policy[k] = np.argmax(Q, axis=1)
        levels = new
    return OptimalSolution(levels[0], policy, tree, n)


def write_oracle_csv(sol: OptimalSolution, path):
    mdp = sol.tree.mdp
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "V_star", "greedy_first_action"])
        for s in range(mdp.S):
            w.writerow([mdp.states[s], f"{sol.values[s]:.10g}", mdp.actions[sol.policy[0][s]]])
