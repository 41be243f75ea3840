"""Off-policy data, ridge estimates of action-matrices and empirical burst
probabilities, with their high-probability error certificates."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegenerateDistribution
from .model import LinearAtstMdp
from .sim import as_generator


@dataclass(frozen=True, eq=False)
class OffPolicyDataset:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    b: np.ndarray
    sampling_dist: np.ndarray  # (S, A)
    sigma_min: float
    p_min_emp: float

    def __len__(self):
        return self.s.shape[0]

    def design(self, phi):
        return phi[self.s, self.a]


def second_moment(phi, dist):
    """``E[phi phi^T]`` under a distribution over (state, action) cells."""
    return np.einsum("sa,sad,sae->de", dist, phi, phi)


def _normalize_dist(dist, S, A):
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (S, A):
        raise DegenerateDistribution(f"sampling distribution must have shape ({S}, {A})")
    if dist.min() < 0 or dist.sum() <= 0:
        raise DegenerateDistribution("sampling distribution has empty support")
    if abs(dist.sum() - 1.0) > 1e-9:
        raise DegenerateDistribution(f"sampling distribution sums to {dist.sum():.12g}")
    return dist


def sample_dataset(mdp: LinearAtstMdp, dist, N, rng) -> OffPolicyDataset:
    if N < 1:
        raise ValueError("dataset needs N >= 1")
    gen = as_generator(rng)
    dist = _normalize_dist(dist, mdp.S, mdp.A)
    flat = dist.reshape(-1)
    cells = gen.choice(flat.size, size=N, p=flat / flat.sum())
    s, a = np.divmod(cells, mdp.A)
    cum = np.cumsum(mdp.kernel(), axis=2)
    cum /= cum[:, :, -1:]
    u = gen.random(N)
    s_next = np.minimum((u[:, None] >= cum[s, a]).sum(axis=1), mdp.S - 1)
    b = (gen.random(N) < mdp.beta[a]).astype(np.int8)
    X = mdp.phi[s, a]
    sigma = X.T @ X / N
    sigma_min = max(float(np.linalg.eigvalsh(sigma)[0]), 0.0)
    counts = np.bincount(a, minlength=mdp.A)
    return OffPolicyDataset(s, a, s_next, b, dist, sigma_min, float(counts.min() / N))


def uniform_dist(S, A):
    return np.full((S, A), 1.0 / (S * A))


def ridge_action_matrices(dataset: OffPolicyDataset, phi, lam=1.0) -> np.ndarray:
    """Ridge estimates ``(X^T X + lam I)^{-1} X^T Y_a`` for every action, shape (A, d, d)."""
    if lam <= 0:
        raise ValueError("ridge parameter must be positive")
    X = phi[dataset.s, dataset.a]
    d = X.shape[1]
    A = phi.shape[1]
    factor = cho_factor(X.T @ X + lam * np.eye(d))
    out = np.empty((A, d, d))
    for a in range(A):
        Y = phi[dataset.s_next, a]
        out[a] = cho_solve(factor, X.T @ Y)
    return out


@dataclass(frozen=True, eq=False)
class BetaEstimate:
    values: np.ndarray
    counts: np.ndarray
    unseen: np.ndarray  # bool mask, value fell back to 1/2

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def empirical_beta(dataset: OffPolicyDataset, A=None) -> BetaEstimate:
    A = dataset.sampling_dist.shape[1] if A is None else A
    counts = np.bincount(dataset.a, minlength=A)
    hits = np.bincount(dataset.a, weights=dataset.b, minlength=A)
    unseen = counts == 0
    values = np.where(unseen, 0.5, hits / np.maximum(counts, 1))
    return BetaEstimate(values, counts, unseen)


def ridge_error_bound(d, A, N, lambda_min_sigma, p, C=1.0):
    """High-probability operator-norm error of the ridge estimates (heuristic constant C)."""
    return 4.0 * C * math.sqrt(d * math.log(2 * A * d / p) / (N * lambda_min_sigma ** 2))


def beta_error_bound(A, N, p_min, p):
    return math.sqrt(12.0 * math.log(3 * A / p) / (N * p_min))


def required_sample_size(d, A, gamma, eps, p, lambda_min_sigma, p_min=None, beta_known=False,
                         c=1.0) -> int:
    """Dataset size making the normalized estimated map ``eps``-admissible.

    ``c`` is an unspecified absolute constant in theory; 1 is a heuristic default.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    scale = lambda_min_sigma ** 2
    if not beta_known:
        if p_min is None or p_min <= 0:
            raise ValueError("p_min must be positive when burst probabilities are estimated")
        scale = min(scale, d * d * p_min)
    value = c * d ** 3 * math.log(2 * A * d / p) / (eps ** 2 * (1 - gamma) ** 2 * scale)
    return int(math.ceil(value))


# --- files --------------------------------------------------------------------

def write_dataset_csv(dataset: OffPolicyDataset, path, states=None, actions=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "a", "s_next", "b"])
        for row in zip(dataset.s, dataset.a, dataset.s_next, dataset.b):
            s, a, sn, b = (int(v) for v in row)
            w.writerow([states[s] if states else s, actions[a] if actions else a,
                        states[sn] if states else sn, b])


def read_dataset_csv(path, mdp: LinearAtstMdp) -> OffPolicyDataset:
    s, a, sn, b = [], [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            s.append(mdp.state_index(_maybe_int(row["s"])))
            a.append(mdp.action_index(_maybe_int(row["a"])))
            sn.append(mdp.state_index(_maybe_int(row["s_next"])))
            b.append(int(row["b"]))
    s, a = np.array(s), np.array(a)
    dist = np.zeros((mdp.S, mdp.A))
    np.add.at(dist, (s, a), 1.0)
    dist /= dist.sum()
    X = mdp.phi[s, a]
    sigma_min = max(float(np.linalg.eigvalsh(X.T @ X / len(s))[0]), 0.0)
    p_min = float(np.bincount(a, minlength=mdp.A).min() / len(s))
    return OffPolicyDataset(s, a, np.array(sn), np.array(b, dtype=np.int8), dist, sigma_min, p_min)


def _maybe_int(v):
    return int(v) if v.lstrip("-").isdigit() else v


def write_estimates(path, actions, M_hat, beta_hat: BetaEstimate, certificate: dict):
    doc = {
        "M_hat": {a: m.tolist() for a, m in zip(actions, M_hat)},
        "beta_hat": dict(zip(actions, np.asarray(beta_hat.values).tolist())),
        "beta_unseen": [a for a, u in zip(actions, beta_hat.unseen) if u],
        "eps_certificate": certificate,
    }
    Path(path).write_text(json.dumps(doc, indent=1))
