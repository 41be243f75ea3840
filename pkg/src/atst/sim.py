"""Episodic simulator for the action-triggered observation protocol.

Each round: play the next action of the committed sequence, collect its
reward and move the hidden state; then the episode may terminate
(probability ``1 - gamma``), and otherwise a data-burst may fire
(probability ``beta(a)``).  If both would fire in the same round, only the
termination is revealed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .model import ActionSequence, LinearAtstMdp


@dataclass(frozen=True)
class SeededRng:
    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream) -> "SeededRng":
        return SeededRng(self.seed, stream)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, SeededRng):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class BurstTuple:
    observed_state: int
    action_seq: ActionSequence
    aggregated_reward: float
    next_observed: int | None
    actions_executed: tuple = ()

    @property
    def rounds(self):
        return len(self.actions_executed)


@dataclass
class EpisodeTranscript:
    initial_state: int
    bursts: list = field(default_factory=list)
    total_reward: float = 0.0
    rounds: int = 0

    def check(self):
        agg = sum(b.aggregated_reward for b in self.bursts)
        assert abs(agg - self.total_reward) <= 1e-9
        assert self.bursts and self.bursts[-1].next_observed is None


def sample_geometric_horizon(gamma, rng) -> int:
    """Episode length ``H ~ Geom(1 - gamma)`` on ``{1, 2, ...}``."""
    return int(as_generator(rng).geometric(1.0 - gamma))


def _cumulative_kernel(mdp):
    cum = np.cumsum(mdp.kernel(), axis=2)
    cum /= cum[:, :, -1:]
    return cum


def run_episode(mdp: LinearAtstMdp, initial_state: int, agent, rng, cum_P=None) -> EpisodeTranscript:
    """Play one episode; ``agent(state, u)`` returns the sequence to commit to
    after the ``u``-th observation (``u`` starts at 1)."""
    gen = as_generator(rng)
    cum_P = _cumulative_kernel(mdp) if cum_P is None else cum_P
    rewards = mdp.rewards()
    beta = mdp.beta
    stop = 1.0 - mdp.gamma
    S = mdp.S
    transcript = EpisodeTranscript(int(initial_state))
    state = int(initial_state)
    observed = state
    u = 1
    seq = agent(observed, u)
    played = []
    acc = 0.0
    while True:
        a = seq.at(len(played))
        played.append(a)
        gain = float(rewards[state, a])
        acc += gain
        transcript.total_reward += gain
        transcript.rounds += 1
        draws = gen.random(3)
        state = min(int(np.searchsorted(cum_P[state, a], draws[0], side="right")), S - 1)
        if draws[1] < stop:
            transcript.bursts.append(BurstTuple(observed, seq, acc, None, tuple(played)))
            return transcript
        if draws[2] < beta[a]:
            transcript.bursts.append(BurstTuple(observed, seq, acc, state, tuple(played)))
            observed = state
            u += 1
            seq = agent(observed, u)
            played = []
            acc = 0.0


TRANSCRIPT_COLUMNS = ("episode", "burst_index", "observed_state", "actions_executed",
                      "aggregated_reward", "next_observed", "rounds_in_segment")


def write_transcripts_csv(mdp: LinearAtstMdp, transcripts, path):
    """``transcripts`` is an iterable of ``(episode, EpisodeTranscript)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRANSCRIPT_COLUMNS)
        for k, tr in transcripts:
            for u, b in enumerate(tr.bursts, start=1):
                w.writerow([k, u, mdp.states[b.observed_state],
                            " ".join(mdp.actions[a] for a in b.actions_executed),
                            f"{b.aggregated_reward:.10g}",
                            "" if b.next_observed is None else mdp.states[b.next_observed],
                            b.rounds])
