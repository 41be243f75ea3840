"""Hot loops, each with a numba ``@njit`` version and a pure-numpy fallback.

Set ``ATST_DISABLE_NUMBA=1`` to force the numpy path (numba is also skipped
automatically when it cannot be imported).  Both paths consume the same
pre-drawn uniforms, so their outputs agree to the last bit in practice.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("ATST_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")


# --- action-sequence feature rows -------------------------------------------

def psi_rows_numpy(phi_next, first, tails, Ms, beta, gamma):
    """Batch of feature-map rows.

    phi_next: (n, d) extended features after the first action.
    first: (n,) first action of each sequence.
    tails: (n, L) the following actions, truncated at the series depth.
    Returns (n, 2d).
    """
    n, d = phi_next.shape
    L = tails.shape[1]
    u = phi_next.copy()
    acc1 = phi_next.copy()
    acc2 = np.zeros_like(phi_next)
    weight = np.ones(n)
    g = 1.0
    for k in range(L):
        act = tails[:, k]
        u = np.einsum("nd,nde->ne", u, Ms[act])
        g *= gamma
        gw = g * weight
        acc1 += gw[:, None] * u
        acc2 += (gw * beta[act])[:, None] * u
        weight = weight * (1.0 - beta[act])
    b0 = beta[first][:, None]
    out = np.empty((n, 2 * d))
    out[:, :d] = 0.5 * (1.0 - gamma) * (b0 * phi_next + (1.0 - b0) * acc1)
    out[:, d:] = 0.5 * gamma * (b0 * phi_next + (1.0 - b0) * acc2)
    return out


def _psi_rows_loop(phi_next, first, tails, Ms, beta, gamma):
    n, d = phi_next.shape
    L = tails.shape[1]
    out = np.empty((n, 2 * d))
    u = np.empty(d)
    tmp = np.empty(d)
    acc1 = np.empty(d)
    acc2 = np.empty(d)
    for row in range(n):
        for i in range(d):
            u[i] = phi_next[row, i]
            acc1[i] = phi_next[row, i]
            acc2[i] = 0.0
        weight = 1.0
        g = 1.0
        for k in range(L):
            a = tails[row, k]
            M = Ms[a]
            for j in range(d):
                s = 0.0
                for i in range(d):
                    s += u[i] * M[i, j]
                tmp[j] = s
            for j in range(d):
                u[j] = tmp[j]
            g *= gamma
            gw = g * weight
            gwb = gw * beta[a]
            for j in range(d):
                acc1[j] += gw * u[j]
                acc2[j] += gwb * u[j]
            weight = weight * (1.0 - beta[a])
        b0 = beta[first[row]]
        for j in range(d):
            out[row, j] = 0.5 * (1.0 - gamma) * (b0 * phi_next[row, j] + (1.0 - b0) * acc1[j])
            out[row, d + j] = 0.5 * gamma * (b0 * phi_next[row, j] + (1.0 - b0) * acc2[j])
    return out


# --- Monte-Carlo rollouts of the action-sequence value ----------------------

def rollouts_numpy(starts, seq, policy, cum_P, rewards, beta, gamma, uniforms):
    """Discounted rollouts: commit to ``seq`` until the first burst, then
    follow the stationary sequence policy ``policy[s]`` (unrolled rows).

    uniforms: (n, horizon, 2) -- column 0 drives the transition, column 1
    the burst draw.  Returns (first-segment reward, remainder) per rollout.
    """
    n, horizon, _ = uniforms.shape
    S = cum_P.shape[0]
    state = starts.astype(np.int64).copy()
    seg_anchor = np.full(n, -1, dtype=np.int64)
    seg_pos = np.zeros(n, dtype=np.int64)
    first_part = np.zeros(n)
    rest_part = np.zeros(n)
    in_first = np.ones(n, dtype=bool)
    disc = 1.0
    for h in range(horizon):
        act = np.where(in_first, seq[np.minimum(seg_pos, seq.shape[0] - 1)],
                       policy[np.maximum(seg_anchor, 0), np.minimum(seg_pos, policy.shape[1] - 1)])
        gained = disc * rewards[state, act]
        first_part += np.where(in_first, gained, 0.0)
        rest_part += np.where(in_first, 0.0, gained)
        cdf = cum_P[state, act]
        nxt = (uniforms[:, h, 0][:, None] >= cdf).sum(axis=1)
        state = np.minimum(nxt, S - 1)
        burst = uniforms[:, h, 1] < beta[act]
        seg_pos += 1
        seg_anchor = np.where(burst, state, seg_anchor)
        seg_pos = np.where(burst, 0, seg_pos)
        in_first &= ~burst
        disc *= gamma
    return first_part, rest_part


def _rollouts_loop(starts, seq, policy, cum_P, rewards, beta, gamma, uniforms):
    n, horizon, _ = uniforms.shape
    S = cum_P.shape[0]
    L_seq = seq.shape[0]
    L_pol = policy.shape[1]
    first_part = np.zeros(n)
    rest_part = np.zeros(n)
    for i in range(n):
        state = starts[i]
        anchor = -1
        pos = 0
        in_first = True
        disc = 1.0
        for h in range(horizon):
            if in_first:
                act = seq[min(pos, L_seq - 1)]
            else:
                act = policy[anchor, min(pos, L_pol - 1)]
            gained = disc * rewards[state, act]
            if in_first:
                first_part[i] += gained
            else:
                rest_part[i] += gained
            u = uniforms[i, h, 0]
            nxt = 0
            for t in range(S):
                if u >= cum_P[state, act, t]:
                    nxt += 1
            state = min(nxt, S - 1)
            pos += 1
            if uniforms[i, h, 1] < beta[act]:
                anchor = state
                pos = 0
                in_first = False
            disc *= gamma
    return first_part, rest_part


# compiled variants exist whenever numba imports, so the benchmark and the
# agreement tests can reach them even when dispatch is forced to numpy
if numba is not None:
    _psi_rows_jit = numba.njit(cache=True)(_psi_rows_loop)
    _rollouts_jit = numba.njit(cache=True)(_rollouts_loop)
else:
    _psi_rows_jit = _rollouts_jit = None


def psi_rows_numba(phi_next, first, tails, Ms, beta, gamma):
    return _psi_rows_jit(np.ascontiguousarray(phi_next, dtype=np.float64),
                         np.ascontiguousarray(first, dtype=np.int64),
                         np.ascontiguousarray(tails, dtype=np.int64),
                         np.ascontiguousarray(Ms, dtype=np.float64),
                         np.ascontiguousarray(beta, dtype=np.float64), float(gamma))


def rollouts_numba(starts, seq, policy, cum_P, rewards, beta, gamma, uniforms):
    return _rollouts_jit(np.ascontiguousarray(starts, dtype=np.int64),
                         np.ascontiguousarray(seq, dtype=np.int64),
                         np.ascontiguousarray(policy, dtype=np.int64),
                         np.ascontiguousarray(cum_P, dtype=np.float64),
                         np.ascontiguousarray(rewards, dtype=np.float64),
                         np.ascontiguousarray(beta, dtype=np.float64), float(gamma),
                         np.ascontiguousarray(uniforms, dtype=np.float64))


if USE_NUMBA:
    psi_rows = psi_rows_numba
    rollouts = rollouts_numba
else:
    psi_rows = psi_rows_numpy
    rollouts = rollouts_numpy


def backend():
    return "numba" if USE_NUMBA else "numpy"
