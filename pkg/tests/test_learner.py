import math

import numpy as np
import pytest

from atst.errors import ConfigError, OptimizerBudgetExceeded
from atst.evaluation import RegretOracle
from atst.features import exact_engine
from atst.generators import benchmark_three_state
from atst.learner import (BEAM, EXHAUSTIVE, LearnerConfig, OptimizerSettings, SequenceFamily,
                          cyclic_schedule, default_horizon, default_rho, end_episode,
                          fixed_schedule, init_learner, observe_burst, plan, run_learning,
                          select_sequence)
from atst.model import ActionSequence
from atst.sim import SeededRng, run_episode


def test_theory_defaults():
    assert default_horizon(2000, 0.8) == math.ceil(math.log(10000) / 0.2) + 1
    cfg = LearnerConfig.from_theory(2000, 0.8, 6, p=0.05, c_rho=0.1)
    H = cfg.H
    assert cfg.rho == pytest.approx(0.1 * 6 * H * math.sqrt(math.log(2 * 6 * 2000 * H / 0.05)))
    assert cfg.lam == 1.0
    assert default_rho(6, H, 2000, 0.05, 0.2) == pytest.approx(2 * cfg.rho)


def test_config_validation():
    with pytest.raises(ConfigError):
        LearnerConfig(H=1, rho=1.0)
    with pytest.raises(ConfigError):
        OptimizerSettings(strategy="random")


def test_family_is_lexicographic(bench_engine):
    fam = SequenceFamily(bench_engine, OptimizerSettings(search_depth=3))
    assert fam.strategy == EXHAUSTIVE
    assert fam.prefixes[:3].tolist() == [[0, 0, 0], [0, 0, 1], [0, 1, 0]]
    np.testing.assert_allclose(fam.table[1, 5], bench_engine.psi(1, ActionSequence((1, 0, 1))),
                               atol=1e-14)


def test_family_budget(bench_engine):
    assert OptimizerSettings(search_depth=20).resolve(2) == BEAM
    with pytest.raises(OptimizerBudgetExceeded):
        SequenceFamily(bench_engine, OptimizerSettings(search_depth=22, strategy=EXHAUSTIVE))


def _feed(st, mdp, episodes, seed=0):
    for k in range(episodes):
        pl = plan(st)
        tr = run_episode(mdp, k % 3, lambda s, u: select_sequence(st, pl, u, s), SeededRng(seed, k))
        for b in tr.bursts:
            observe_burst(st, b.observed_state, b.action_seq, b.aggregated_reward, b.next_observed)
        end_episode(st)
    return plan(st)


def test_values_clipped_and_terminal_zero(bench, bench_engine):
    cfg = LearnerConfig.from_theory(100, 0.8, 6, c_rho=0.05)
    st = init_learner(bench_engine, cfg)
    pl = _feed(st, bench, 30)
    assert pl.values.min() >= 0 and pl.values.max() <= 1 / (1 - 0.8)
    assert pl.truncation_gap < 1e-3


def test_incremental_gram_matches_rebuild(bench, bench_engine):
    base = LearnerConfig.from_theory(100, 0.8, 6, c_rho=0.05)
    inc = LearnerConfig(base.H, base.rho, incremental_gram=True)
    a, b = init_learner(bench_engine, base), init_learner(bench_engine, inc)
    pa, pb = _feed(a, bench, 25), _feed(b, bench, 25)
    np.testing.assert_allclose(b.gram, a.gram_rebuild(), atol=1e-10)
    np.testing.assert_array_equal(pa.choices, pb.choices)
    np.testing.assert_allclose(pa.weights, pb.weights, atol=1e-8)


def test_only_first_H_bursts_kept(bench_engine):
    cfg = LearnerConfig(H=3, rho=0.0)
    st = init_learner(bench_engine, cfg)
    seq = ActionSequence((0,))
    kept = [observe_burst(st, 0, seq, 0.1, 1) for _ in range(5)]
    assert kept == [True, True, True, False, False]
    end_episode(st)
    assert observe_burst(st, 0, seq, 0.1, None)
    assert st.next_states[-1] == -1


def test_late_bursts_reuse_last_stage(bench, bench_engine):
    cfg = LearnerConfig(H=4, rho=0.5)
    st = init_learner(bench_engine, cfg)
    pl = _feed(st, bench, 10)
    for s in range(3):
        assert select_sequence(st, pl, 10, s) == select_sequence(st, pl, 3, s)


def test_beam_equals_exhaustive_when_wide(bench, bench_engine):
    ex = LearnerConfig(H=6, rho=0.3, optimizer=OptimizerSettings(search_depth=3))
    bm = LearnerConfig(H=6, rho=0.3, optimizer=OptimizerSettings(search_depth=3, strategy=BEAM,
                                                                 beam_width=8))
    a, b = init_learner(bench_engine, ex), init_learner(bench_engine, bm)
    pa, pb = _feed(a, bench, 8), _feed(b, bench, 8)
    np.testing.assert_allclose(pa.values, pb.values, atol=1e-10)
    for u in (1, 3, 5):
        for s in range(3):
            # beam may return a shorter prefix naming the same sequence
            np.testing.assert_array_equal(select_sequence(a, pa, u, s).unroll(10),
                                          select_sequence(b, pb, u, s).unroll(10))


def test_weight_bound_enforced(bench, bench_engine, monkeypatch):
    from atst import learner
    cfg = LearnerConfig(H=4, rho=0.1)
    st = init_learner(bench_engine, cfg)
    _feed(st, bench, 5)
    norms = np.linalg.norm(plan(st).weights, axis=1)
    assert norms.max() <= learner._weight_bound(st)
    monkeypatch.setattr(learner, "_weight_bound", lambda st: 0.5 * norms.max())
    with pytest.raises(AssertionError):
        plan(st)


def test_regret_nonnegative_within_slack(bench, bench_ams, bench_engine):
    orc = RegretOracle(bench, bench_ams)
    cfg = LearnerConfig.from_theory(40, 0.8, 6, c_rho=0.01)
    log = run_learning(bench, bench_engine, 40, cyclic_schedule([0, 1, 2]), cfg, SeededRng(0), orc)
    r = log.regrets()
    assert r.min() >= -2 * orc.slack
    assert r.max() <= 5.0 + orc.slack
    assert [rec.initial_state for rec in log.records[:4]] == [0, 1, 2, 0]


def test_regret_csv(tmp_path, bench, bench_ams, bench_engine):
    orc = RegretOracle(bench, bench_ams)
    cfg = LearnerConfig.from_theory(5, 0.8, 6)
    log = run_learning(bench, bench_engine, 5, fixed_schedule(0), cfg, SeededRng(1), orc)
    path = tmp_path / "r.csv"
    log.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:6] == ["episode", "initial_state", "realized_reward", "V_star_s1",
                                       "V_pik_s1", "regret_contrib"]
    assert len(lines) == 6


def test_reduction_to_single_step(bench_engine):
    from lsvi_reference import SingleStepLsviUcb
    mdp = benchmark_three_state(beta=(1.0, 1.0))
    eng = exact_engine(mdp)
    cfg = LearnerConfig.from_theory(30, 0.8, 6, c_rho=0.02)
    st = init_learner(eng, cfg)
    ref = SingleStepLsviUcb(mdp.phi, 0.8, cfg.H, cfg.lam, cfg.rho)
    mismatches = 0
    for k in range(30):
        pl = plan(st)
        ref.fit()

        def agent(s, u):
            nonlocal mismatches
            seq = select_sequence(st, pl, u, s)
            mismatches += seq.first != ref.act(s, u)
            return seq
        tr = run_episode(mdp, 0, agent, SeededRng(2, k))
        for b in tr.bursts[:cfg.H]:
            ref.record(b.observed_state, b.action_seq.first, b.aggregated_reward, b.next_observed)
        for b in tr.bursts:
            observe_burst(st, b.observed_state, b.action_seq, b.aggregated_reward, b.next_observed)
        end_episode(st)
    assert mismatches == 0
