"""Model generators: random tabular and simplex-feature instances plus the
fixed benchmarks used by the tests and the experiment CLI."""

import numpy as np

from .model import LinearAtstMdp, encode_tabular


def random_tabular(S, A, gamma, beta=None, rng=None, concentration=1.0):
    rng = np.random.default_rng(rng)
    P = rng.dirichlet(np.full(S, concentration), size=(S, A))
    r = rng.uniform(0.0, 1.0, size=(S, A))
    if beta is None:
        beta = rng.uniform(0.05, 0.95, size=A)
    return encode_tabular(P, r, gamma, beta)


def random_simplex(S, A, d, gamma, beta=None, rng=None):
    """Linear MDP with simplex features: ``phi(s, a)`` and each ``mu`` row are
    probability vectors, so ``d`` can be much smaller than ``S * A``."""
    rng = np.random.default_rng(rng)
    phi = rng.dirichlet(np.ones(d), size=(S, A))
    mu = rng.dirichlet(np.ones(S), size=d)
    theta = rng.uniform(0.0, 1.0, size=d)
    if beta is None:
        beta = rng.uniform(0.05, 0.95, size=A)
    return LinearAtstMdp(phi, mu, theta, gamma, beta)


def swap_two_state(gamma=0.5, beta=(1.0, 1.0), rewards=((0.0, 1.0), (0.5, 0.2))):
    """Two states; action 0 stays put, action 1 swaps the state."""
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    P[0, 1, 1] = P[1, 1, 0] = 1.0
    return encode_tabular(P, rewards, gamma, beta, ("s0", "s1"), ("stay", "swap"))


def benchmark_three_state(gamma=0.8, beta=(1.0, 0.3)):
    """Fixed 3-state, 2-action benchmark.

    ``probe`` (action 0) always bursts; it pays well only in ``s2``, which it
    tends to keep.  ``push`` (action 1) moves towards ``s2`` but pays nothing
    on the way, so from ``s0`` the optimum is to push twice blind and then probe.
    """
    P = np.array([
        [[0.8, 0.2, 0.0], [0.1, 0.7, 0.2]],
        [[0.6, 0.4, 0.0], [0.0, 0.3, 0.7]],
        [[0.0, 0.1, 0.9], [0.5, 0.0, 0.5]],
    ])
    r = np.array([
        [0.1, 0.0],
        [0.1, 0.0],
        [0.9, 0.3],
    ])
    return encode_tabular(P, r, gamma, beta, ("s0", "s1", "s2"), ("probe", "push"))


GENERATORS = {
    "benchmark3": benchmark_three_state,
    "swap2": swap_two_state,
}


def from_generator(name, seed=0, **kwargs):
    if name in GENERATORS:
        return GENERATORS[name](**kwargs)
    if name == "random_tabular":
        return random_tabular(rng=seed, **kwargs)
    if name == "random_simplex":
        return random_simplex(rng=seed, **kwargs)
    raise KeyError(f"unknown model generator {name!r}")
