"""Plain single-step LSVI-UCB for fully observed episodes, written directly
from state-action features, used to cross-check the sequence learner."""

import numpy as np


class SingleStepLsviUcb:
    def __init__(self, phi, gamma, H, lam, rho):
        self.phi = np.asarray(phi)
        self.gamma = gamma
        self.H = H
        self.lam = lam
        self.rho = rho
        self.rows = []   # (s, a, reward, s_next or -1)

    def feature(self, s, a):
        f = self.phi[s, a]
        return 0.5 * np.concatenate([(1 - self.gamma) * f, self.gamma * f])

    def record(self, s, a, reward, s_next):
        self.rows.append((s, a, reward, -1 if s_next is None else s_next))

    def fit(self):
        S, A, d = self.phi.shape
        cap = 1.0 / (1.0 - self.gamma)
        F = np.array([self.feature(s, a) for s, a, _, _ in self.rows]).reshape(-1, 2 * d)
        Lam = self.lam * np.eye(2 * d) + F.T @ F
        Lam_inv = np.linalg.inv(Lam)
        feats = np.array([[self.feature(s, a) for a in range(A)] for s in range(S)])
        bonus = self.rho * np.sqrt(np.einsum("sai,ij,saj->sa", feats, Lam_inv, feats))
        v_next = np.full(S, cap)
        self.greedy = {}
        for u in range(self.H - 1, 0, -1):
            y = np.array([min(r, self.H) + (0.0 if sn < 0 else v_next[sn])
                          for _, _, r, sn in self.rows])
            w = np.linalg.solve(Lam, F.T @ y) if len(self.rows) else np.zeros(2 * d)
            Q = feats @ w + bonus
            self.greedy[u] = Q.argmax(axis=1)
            v_next = np.clip(Q.max(axis=1), 0.0, cap)

    def act(self, s, u):
        return int(self.greedy[min(u, self.H - 1)][s])
