"""Reference evaluators used to check the linear machinery.

Everything here works on the tabular backing (transition matrices and belief
vectors) or on sampled rollouts, never on action-matrices or the feature map,
so it can serve as an independent oracle for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .belief import ActionMatrixSet, AugmentedTree, OptimalSolution, belief, optimal_values
from .errors import DepthExhausted
from .model import ActionSequence, AugmentedState, LinearAtstMdp
from .sim import as_generator

SEGMENT_TOL = 1e-12


def segment_horizon(gamma, tol=SEGMENT_TOL):
    return max(1, math.ceil(math.log(tol * (1.0 - gamma)) / math.log(gamma)))


def segment_terms(mdp: LinearAtstMdp, start, acts, tol=SEGMENT_TOL):
    """Expected reward until the next burst and discounted exit distribution.

    start: (n,) state indices or (n, S) belief rows.
    acts: (n, L) unrolled sequences (padded by repeating the last column).
    Returns ``R`` (n,) and ``W`` (n, S) with ``PV = W @ V`` for any V on S.
    """
    P = mdp.kernel()
    r = mdp.rewards()
    beta = mdp.beta
    gamma = mdp.gamma
    start = np.asarray(start)
    acts = np.asarray(acts, dtype=np.int64)
    n = acts.shape[0]
    if start.ndim == 1:
        b = np.zeros((n, mdp.S))
        b[np.arange(n), start] = 1.0
    else:
        b = np.array(start, dtype=float)
    L = segment_horizon(gamma, tol)
    if acts.shape[1] < L:
        acts = np.hstack([acts, np.repeat(acts[:, -1:], L - acts.shape[1], axis=1)])
    R = np.zeros(n)
    W = np.zeros((n, mdp.S))
    alive = np.ones(n)
    g = 1.0
    PT = P.transpose(1, 0, 2)
    for h in range(L):
        a = acts[:, h]
        R += g * alive * np.einsum("ns,ns->n", b, r.T[a])
        b = np.einsum("ns,nst->nt", b, PT[a])
        W += (g * gamma * alive * beta[a])[:, None] * b
        alive = alive * (1.0 - beta[a])
        g *= gamma
        if not alive.any():
            break
    return R, W


def unroll_all(sequences, L):
    return np.stack([seq.unroll(L) for seq in sequences])


def sequence_policy_value(mdp: LinearAtstMdp, policy) -> np.ndarray:
    """Value on S of the stationary policy committing to ``policy[s]`` after observing ``s``."""
    L = segment_horizon(mdp.gamma)
    R, W = segment_terms(mdp, np.arange(mdp.S), unroll_all(policy, L))
    return np.linalg.solve(np.eye(mdp.S) - W, R)


def burst_dependent_value(mdp: LinearAtstMdp, stages) -> np.ndarray:
    """Value on S of a burst-dependent sequence policy.

    ``stages[u-1][s]`` is the sequence committed after the ``u``-th
    observation; the last stage is reused for every later burst.
    """
    L = segment_horizon(mdp.gamma)
    terms = [segment_terms(mdp, np.arange(mdp.S), unroll_all(stage, L)) for stage in stages]
    return value_from_terms(terms)


def value_from_terms(terms):
    R, W = terms[-1]
    V = np.linalg.solve(np.eye(R.shape[0]) - W, R)
    for R, W in reversed(terms[:-1]):
        V = R + W @ V
    return V


def exact_policy_value(mdp: LinearAtstMdp, ams: ActionMatrixSet, policy, horizon) -> np.ndarray:
    """``horizon``-step evaluation of an augmented policy on the truncated tree.

    ``policy`` is a callable on augmented states or an ``OptimalSolution``.
    The result is within ``gamma**horizon / (1 - gamma)`` of the true value.
    """
    n = int(horizon)
    if n < 1:
        raise DepthExhausted("policy evaluation needs horizon >= 1")
    if isinstance(policy, OptimalSolution):
        if policy.iterations < n:
            raise DepthExhausted("stored greedy policy is shallower than the horizon")
        tree = policy.tree
        acts = policy.policy[:n]
    else:
        tree = AugmentedTree(mdp, ams, n)
        acts = [np.array([policy(x) for x in tree.states_at(k)], dtype=np.int64)
                for k in range(n)]
    levels = [np.zeros(tree.anchors[k].shape[0]) for k in range(n + 1)]
    for j in range(1, n + 1):
        new = []
        for k in range(n - j + 1):
            Q = tree.q_values(k, levels[0], levels[k + 1])
            new.append(Q[np.arange(Q.shape[0]), acts[k]])
        levels = new
    return levels[0]


def classical_policy_value(P, r, gamma, pi):
    """Standard policy evaluation for a fully observed MDP."""
    S = P.shape[0]
    P_pi = P[np.arange(S), pi]
    return np.linalg.solve(np.eye(S) - gamma * P_pi, r[np.arange(S), pi])


# --- Monte Carlo ------------------------------------------------------------

@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_err: float
    n_samples: int
    bias_bound: float = 0.0   # deterministic bias from the finite rollout horizon

    @classmethod
    def of(cls, samples, bias_bound=0.0):
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        if n < 2:
            raise ValueError("Monte Carlo estimate needs at least two samples")
        return cls(float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(n)), n,
                   float(bias_bound))

    def covers(self, value, k=3.0):
        # zero-variance rollouts still carry the truncation bias
        return abs(self.mean - value) <= k * self.std_err + self.bias_bound + 1e-12


def mc_horizon(gamma, tol=1e-6):
    return math.ceil(math.log(tol * (1.0 - gamma)) / math.log(gamma))


def mc_bias_bound(gamma):
    return gamma ** mc_horizon(gamma) / (1.0 - gamma)


def _rollout_samples(mdp, x, seq, continuation_policy, n_samples, rng, chunk=8192):
    gen = as_generator(rng)
    horizon = mc_horizon(mdp.gamma)
    seq_arr = seq.unroll(horizon)
    pol = unroll_all(continuation_policy, horizon)
    cum = np.cumsum(mdp.kernel(), axis=2)
    cum /= cum[:, :, -1:]
    if isinstance(x, AugmentedState) and x.depth > 0:
        from .belief import action_matrices
        b = belief(mdp, action_matrices(mdp), x)
    else:
        b = None
        anchor = x.anchor if isinstance(x, AugmentedState) else int(x)
    first, rest = [], []
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        if b is None:
            starts = np.full(m, anchor, dtype=np.int64)
        else:
            starts = gen.choice(mdp.S, size=m, p=b)
        uniforms = gen.random((m, horizon, 2))
        f, g = _kernels.rollouts(starts, seq_arr, pol, cum, mdp.rewards(), mdp.beta,
                                 mdp.gamma, uniforms)
        first.append(f)
        rest.append(g)
        done += m
    return np.concatenate(first), np.concatenate(rest)


def mc_k_value(mdp: LinearAtstMdp, x, seq: ActionSequence, continuation_policy, n_samples, rng) -> McEstimate:
    """Rollout estimate of the value of committing to ``seq`` from ``x`` until
    the next burst and following ``continuation_policy`` afterwards."""
    if n_samples < 100:
        raise ValueError("use at least 100 rollouts")
    first, rest = _rollout_samples(mdp, x, seq, continuation_policy, n_samples, rng)
    return McEstimate.of(first + rest, mc_bias_bound(mdp.gamma))


def mc_k_decomposition(mdp, x, seq, continuation_policy, n_samples, rng):
    """Estimates of (K, reward-until-burst, discounted post-burst value)."""
    first, rest = _rollout_samples(mdp, x, seq, continuation_policy, n_samples, rng)
    bias = mc_bias_bound(mdp.gamma)
    return (McEstimate.of(first + rest, bias), McEstimate.of(first, bias),
            McEstimate.of(rest, bias))


# --- regret oracle --------------------------------------------------------------

class RegretOracle:
    """Optimal values and exact values of deployed burst-dependent policies."""

    def __init__(self, mdp: LinearAtstMdp, ams: ActionMatrixSet, iterations=None):
        self.mdp = mdp
        self.solution = optimal_values(mdp, ams, iterations)
        self.v_star = self.solution.values
        self.slack = self.solution.error_bound
        self._L = segment_horizon(mdp.gamma)
        self._cache = {}

    def candidate_terms(self, key, acts):
        """Segment terms for every (state, candidate) pair, cached under ``key``."""
        if key not in self._cache:
            C = acts.shape[0]
            S = self.mdp.S
            starts = np.repeat(np.arange(S), C)
            R, W = segment_terms(self.mdp, starts, np.tile(acts, (S, 1)))
            self._cache[key] = (R.reshape(S, C), W.reshape(S, C, S))
        return self._cache[key]

    def value_of_choices(self, key, acts, choices) -> np.ndarray:
        """``choices`` is (U, S) candidate indices; returns the value on S."""
        R_all, W_all = self.candidate_terms(key, acts)
        S = self.mdp.S
        idx = np.arange(S)
        terms = [(R_all[idx, row], W_all[idx, row]) for row in np.asarray(choices)]
        return value_from_terms(terms)

    def value_of_stages(self, stages) -> np.ndarray:
        return burst_dependent_value(self.mdp, stages)
