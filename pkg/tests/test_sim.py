import numpy as np
import pytest

from atst.generators import random_tabular
from atst.model import ActionSequence
from atst.sim import (SeededRng, run_episode, sample_geometric_horizon, write_transcripts_csv)


def test_seeded_streams_reproducible():
    a = SeededRng(7, 3).generator().random(5)
    b = SeededRng(7, 3).generator().random(5)
    c = SeededRng(7, 4).generator().random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_geometric_horizon_mean():
    rng = np.random.default_rng(0)
    h = np.array([sample_geometric_horizon(0.75, rng) for _ in range(20000)])
    assert h.min() >= 1
    assert abs(h.mean() - 4.0) < 0.1


def test_transcript_consistency(bench):
    agent = lambda s, u: ActionSequence((1, 1, 0))
    for k in range(50):
        tr = run_episode(bench, 0, agent, SeededRng(1, k))
        tr.check()
        assert tr.rounds == sum(b.rounds for b in tr.bursts)
        for b in tr.bursts[:-1]:
            # a burst ends a segment, so the last executed action may burst
            assert b.next_observed is not None
            assert b.actions_executed == tuple(b.action_seq.unroll(b.rounds))


def test_never_bursting_episode_has_single_segment():
    mdp = random_tabular(3, 2, 0.9, beta=0.0, rng=0)
    tr = run_episode(mdp, 1, lambda s, u: ActionSequence((0, 1)), SeededRng(0))
    assert len(tr.bursts) == 1 and tr.bursts[0].next_observed is None


def test_realized_return_matches_value():
    # always bursting with a single action: mean undiscounted return of a
    # geometric-length episode equals the discounted value
    mdp = random_tabular(3, 1, 0.8, beta=1.0, rng=2)
    P, r = mdp.kernel()[:, 0], mdp.rewards()[:, 0]
    V = np.linalg.solve(np.eye(3) - 0.8 * P, r)
    totals = [run_episode(mdp, 0, lambda s, u: ActionSequence((0,)), SeededRng(5, k)).total_reward
              for k in range(6000)]
    se = np.std(totals) / np.sqrt(len(totals))
    assert abs(np.mean(totals) - V[0]) < 4 * se


def test_burst_index_increments(bench):
    seen = []

    def agent(s, u):
        seen.append(u)
        return ActionSequence((0,))
    run_episode(bench, 0, agent, SeededRng(3))
    assert seen == list(range(1, len(seen) + 1))


def test_transcript_csv(tmp_path, bench):
    tr = run_episode(bench, 0, lambda s, u: ActionSequence((1, 0)), SeededRng(2))
    path = tmp_path / "t.csv"
    write_transcripts_csv(bench, [(1, tr)], path)
    rows = path.read_text().splitlines()
    assert rows[0].startswith("episode,burst_index")
    assert len(rows) == 1 + len(tr.bursts)
    assert rows[-1].split(",")[5] == ""
