import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from atst.belief import (AugmentedTree, ValueTable, action_matrices, belief, bellman_operator,
                         default_iterations, extended_feature, optimal_values, write_oracle_csv)
from atst.errors import DepthExhausted, EmptyTail, ModelValidationError, PlanningTooLarge
from atst.evaluation import classical_policy_value
from atst.generators import random_simplex, random_tabular, swap_two_state
from atst.model import AugmentedState


def chained_belief(P, s, tail):
    b = np.zeros(P.shape[0])
    b[s] = 1.0
    for a in tail:
        b = np.array([sum(b[i] * P[i, a, j] for i in range(P.shape[0])) for j in range(P.shape[0])])
    return b


@given(st.integers(0, 50), st.lists(st.integers(0, 1), min_size=1, max_size=5))
def test_belief_matches_chained_sums(seed, tail):
    mdp = random_tabular(4, 2, 0.8, rng=seed)
    ams = action_matrices(mdp)
    s = seed % 4
    b = belief(mdp, ams, AugmentedState(s, tuple(tail)))
    np.testing.assert_allclose(b, chained_belief(mdp.kernel(), s, tail), atol=1e-12)
    assert abs(b.sum() - 1) < 1e-12 and b.min() >= 0


def test_belief_on_simplex_model():
    mdp = random_simplex(5, 2, 3, 0.8, rng=0)
    ams = action_matrices(mdp)
    b = belief(mdp, ams, AugmentedState(2, (1, 0, 1)))
    np.testing.assert_allclose(b, chained_belief(mdp.kernel(), 2, (1, 0, 1)), atol=1e-12)


def test_extended_feature_needs_tail(bench, bench_ams):
    with pytest.raises(EmptyTail):
        extended_feature(bench, bench_ams, AugmentedState(0))
    with pytest.raises(EmptyTail):
        extended_feature(bench, bench_ams, AugmentedState(None))


def test_action_matrix_norm_check_names_word():
    mdp = random_tabular(2, 2, 0.8, rng=0)
    bad = mdp.__class__(mdp.phi, mdp.mu * 3.0, mdp.theta, 0.8, mdp.beta, validate=False)
    with pytest.raises(ModelValidationError) as exc:
        action_matrices(bad)
    assert exc.value.cell is not None


def test_swap_two_state_values():
    # hand solution: stay in s1 forever pays 0.5 per step (V = 1); s0 swaps once
    sol = optimal_values(swap_two_state(), action_matrices(swap_two_state()))
    np.testing.assert_allclose(sol.values, [1.5, 1.0], atol=sol.error_bound + 1e-12)
    assert sol.policy[0].tolist() == [1, 0]


def test_default_iterations():
    assert default_iterations(0.8) == 55
    assert default_iterations(0.5) == 20


@pytest.mark.parametrize("seed", range(3))
def test_full_observation_reduces_to_classical(seed):
    mdp = random_tabular(4, 3, 0.7, beta=1.0, rng=seed)
    sol = optimal_values(mdp, action_matrices(mdp))
    P, r = mdp.kernel(), mdp.rewards()
    V = np.zeros(4)
    for _ in range(2000):
        V = (r + 0.7 * P @ V).max(axis=1)
    np.testing.assert_allclose(sol.values, V, atol=sol.error_bound + 1e-9)
    pi = np.argmax(r + 0.7 * P @ V, axis=1)
    np.testing.assert_allclose(classical_policy_value(P, r, 0.7, pi), V, atol=1e-9)


def test_benchmark_optimum_pushes_blind(bench, bench_ams):
    sol = optimal_values(bench, bench_ams)
    push, probe = 1, 0
    assert sol.greedy_action(AugmentedState(0)) == push
    assert sol.greedy_action(AugmentedState(0, (push,))) == push
    assert sol.greedy_action(AugmentedState(0, (push, push))) == probe


def test_less_observation_never_helps():
    mdp = random_tabular(3, 2, 0.5, beta=[0.6, 0.3], rng=5)
    full = mdp.with_beta([1.0, 1.0])
    v_part = optimal_values(mdp, action_matrices(mdp), iterations=16).values
    v_full = optimal_values(full, action_matrices(full), iterations=16).values
    assert np.all(v_full >= v_part - 2 * 0.5 ** 16 / 0.5)


@given(st.integers(0, 1000))
def test_bellman_contraction(seed):
    mdp = random_tabular(3, 2, 0.75, rng=seed % 7)
    ams = action_matrices(mdp)
    tree = AugmentedTree(mdp, ams, 4)
    rng = np.random.default_rng(seed)
    V, U = ValueTable.random(tree, rng), ValueTable.random(tree, rng)
    TV, TU = bellman_operator(mdp, ams, V), bellman_operator(mdp, ams, U)
    assert TV.sup_distance(TU) <= 0.75 * V.sup_distance(U) + 1e-12


def test_bellman_monotone(small_models):
    mdp = small_models[0]
    ams = action_matrices(mdp)
    tree = AugmentedTree(mdp, ams, 3)
    rng = np.random.default_rng(0)
    V = ValueTable.random(tree, rng)
    W = ValueTable(tree, [v + 0.1 for v in V.levels], V.depth_cap)
    TV, TW = bellman_operator(mdp, ams, V), bellman_operator(mdp, ams, W)
    assert all(np.all(b >= a - 1e-15) for a, b in zip(TV.levels, TW.levels))


def test_bellman_depth_exhausted(small_models):
    mdp = small_models[0]
    ams = action_matrices(mdp)
    tree = AugmentedTree(mdp, ams, 1)
    once = bellman_operator(mdp, ams, ValueTable.constant(tree, 0.0))
    with pytest.raises(DepthExhausted):
        bellman_operator(mdp, ams, once)


def test_value_table_terminal_is_zero(small_models):
    tree = AugmentedTree(small_models[0], action_matrices(small_models[0]), 2)
    assert ValueTable.constant(tree, 3.0)[AugmentedState(None)] == 0.0


def test_tree_budget():
    mdp = random_tabular(3, 3, 0.9, beta=0.5, rng=0)
    with pytest.raises(PlanningTooLarge):
        AugmentedTree(mdp, action_matrices(mdp), 14)


def test_always_bursting_actions_are_not_expanded(bench, bench_ams):
    tree = AugmentedTree(bench, bench_ams, 3)
    assert [a.shape[0] for a in tree.anchors] == [3, 3, 3, 3]
    assert np.all(tree.child[0][:, 0] == -1)


def test_next_features_match_products(small_models):
    mdp = small_models[1]
    ams = action_matrices(mdp)
    tree = AugmentedTree(mdp, ams, 3)
    for k in range(1, 4):
        for i, x in enumerate(tree.states_at(k)):
            for a in range(mdp.A):
                ref = extended_feature(mdp, ams, x.extend(a))
                np.testing.assert_allclose(tree.next_phi[k][i, a], ref, atol=1e-14)


def test_oracle_csv(tmp_path, bench, bench_ams):
    sol = optimal_values(bench, bench_ams)
    path = tmp_path / "v.csv"
    write_oracle_csv(sol, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "state,V_star,greedy_first_action"
    assert lines[1].startswith("s0,") and lines[1].endswith(",push")


def test_products_of_all_words_bounded():
    mdp = random_simplex(4, 2, 3, 0.8, rng=0)
    ams = action_matrices(mdp)
    for n in range(1, 7):
        for w in itertools.product(range(2), repeat=n):
            assert np.linalg.norm(ams.product(w), 2) <= np.sqrt(3) + 1e-9
