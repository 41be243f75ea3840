import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from atst import _kernels
from atst.evaluation import mc_horizon

needs_numba = pytest.mark.skipif(_kernels.numba is None, reason="numba not installed")


def psi_case(seed, n=64, d=4, A=3, L=30, gamma=0.8):
    rng = np.random.default_rng(seed)
    Ms = rng.normal(size=(A, d, d)) / (2 * d)
    return (rng.normal(size=(n, d)), rng.integers(A, size=n), rng.integers(A, size=(n, L)),
            Ms, rng.uniform(size=A), gamma)


def rollout_case(seed, n=500, S=4, A=2, gamma=0.7):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(S), size=(S, A))
    cum = np.cumsum(P, axis=2)
    h = mc_horizon(gamma)
    return (rng.integers(S, size=n), rng.integers(A, size=h), rng.integers(A, size=(S, h)),
            cum, rng.uniform(size=(S, A)), rng.uniform(size=A), gamma, rng.random((n, h, 2)))


@given(st.integers(0, 10_000))
def test_psi_loop_matches_vectorized(seed):
    args = psi_case(seed)
    np.testing.assert_allclose(_kernels._psi_rows_loop(*args), _kernels.psi_rows_numpy(*args),
                               atol=1e-13)


@given(st.integers(0, 10_000))
def test_rollout_loop_matches_vectorized(seed):
    args = rollout_case(seed, n=50)
    for a, b in zip(_kernels._rollouts_loop(*args), _kernels.rollouts_numpy(*args)):
        np.testing.assert_allclose(a, b, atol=1e-13)


@needs_numba
@pytest.mark.parametrize("seed", range(3))
def test_backends_agree(seed):
    args = psi_case(seed)
    np.testing.assert_allclose(_kernels.psi_rows_numba(*args), _kernels.psi_rows_numpy(*args),
                               atol=1e-13)
    args = rollout_case(seed)
    for a, b in zip(_kernels.rollouts_numba(*args), _kernels.rollouts_numpy(*args)):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_rollout_first_burst_split():
    # one state, one action that always bursts: first part is the first reward only
    cum = np.ones((1, 1, 1))
    h = 40
    u = np.full((3, h, 2), 0.5)
    first, rest = _kernels.rollouts_numpy(np.zeros(3, np.int64), np.zeros(h, np.int64),
                                          np.zeros((1, h), np.int64), cum, np.array([[1.0]]),
                                          np.array([1.0]), 0.5, u)
    np.testing.assert_allclose(first, 1.0)
    np.testing.assert_allclose(rest, sum(0.5 ** t for t in range(1, h)))


def test_env_flag_selects_numpy():
    code = "from atst import _kernels as k; print(k.backend(), k.psi_rows is k.psi_rows_numpy)"
    env = dict(os.environ, ATST_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["numpy", "True"]
