"""Time the numba and pure-numpy versions of the hot kernels.

    python3 benchmarks/bench_kernels.py [--rows 20000] [--rollouts 50000]

Both backends run on identical inputs; the script also reports the largest
absolute difference between their outputs.
"""

import argparse
import time

import numpy as np

from atst import _kernels
from atst.belief import action_matrices
from atst.evaluation import mc_horizon
from atst.features import exact_engine
from atst.generators import benchmark_three_state


def timed(fn, *args, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def psi_inputs(rows, rng):
    mdp = benchmark_three_state()
    eng = exact_engine(mdp, action_matrices(mdp))
    L = eng.series.trunc_depth
    acts = rng.integers(mdp.A, size=(rows, L + 1))
    states = rng.integers(mdp.S, size=rows)
    phi_next = np.ascontiguousarray(mdp.phi[states, acts[:, 0]])
    return (phi_next, acts[:, 0].copy(), np.ascontiguousarray(acts[:, 1:]),
            np.ascontiguousarray(eng.matrices), np.array(eng.burst_probs), mdp.gamma)


def rollout_inputs(n, rng):
    mdp = benchmark_three_state()
    h = mc_horizon(mdp.gamma)
    cum = np.cumsum(mdp.kernel(), axis=2)
    seq = np.ones(h, dtype=np.int64)
    policy = np.zeros((mdp.S, h), dtype=np.int64)
    starts = np.zeros(n, dtype=np.int64)
    return (starts, seq, policy, cum, np.array(mdp.rewards()), np.array(mdp.beta), mdp.gamma,
            rng.random((n, h, 2)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--rollouts", type=int, default=50000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    if _kernels.numba is None:
        print("numba not installed; only the numpy path is timed")

    cases = [("psi_rows", _kernels.psi_rows_numpy, _kernels.psi_rows_numba, psi_inputs(args.rows, rng)),
             ("rollouts", _kernels.rollouts_numpy, _kernels.rollouts_numba,
              rollout_inputs(args.rollouts, rng))]
    print(f"{'kernel':10s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, ref, jit, inputs in cases:
        t_np, out_np = timed(ref, *inputs)
        if _kernels.numba is None:
            print(f"{name:10s} {t_np:10.4f}")
            continue
        jit(*inputs)  # compile
        t_nb, out_nb = timed(jit, *inputs)
        if isinstance(out_np, tuple):
            diff = max(np.abs(a - b).max() for a, b in zip(out_np, out_nb))
        else:
            diff = np.abs(out_np - out_nb).max()
        print(f"{name:10s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
