"""One-vs-rest L2 logistic regression, full-batch gradient descent.

All binary problems are solved together; each keeps its own step size,
halved until the Armijo condition holds.
"""
from __future__ import annotations

import numpy as np

__all__ = ["OneVsRestLogReg"]


def _log1pexp(x):
    return np.logaddexp(0.0, x)


class OneVsRestLogReg:
    def __init__(self, l2: float = 1e-4, max_iter: int = 500, tol: float = 1e-6):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol
        self.coef_: np.ndarray | None = None
        self.n_iter_: np.ndarray | None = None

    def _objective(self, xb, y, w):
        s = xb @ w
        # mean of log(1 + exp(-(2y-1) s)) per column
        loss = np.mean(_log1pexp(s) - y * s, axis=0)
        return loss + 0.5 * self.l2 * np.sum(w[:-1] ** 2, axis=0)

    def _gradient(self, xb, y, w):
        s = xb @ w
        p = 0.5 * (1.0 + np.tanh(0.5 * s))
        g = xb.T @ (p - y) / xb.shape[0]
        g[:-1] += self.l2 * w[:-1]
        return g

    def fit(self, x: np.ndarray, y: np.ndarray) -> "OneVsRestLogReg":
        """``y`` is a boolean ``(N, C)`` indicator matrix."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        xb = np.hstack([x, np.ones((x.shape[0], 1))])
        n_cls = y.shape[1]
        w = np.zeros((xb.shape[1], n_cls))
        step = np.ones(n_cls)
        active = np.ones(n_cls, dtype=bool)
        iters = np.zeros(n_cls, dtype=np.int64)
        f = self._objective(xb, y, w)
        for _ in range(self.max_iter):
            g = self._gradient(xb, y, w)
            gn2 = np.sum(g * g, axis=0)
            active &= np.sqrt(gn2) >= self.tol
            if not active.any():
                break
            iters[active] += 1
            pending = active.copy()
            for _ in range(60):
                trial = w - step * g
                ft = self._objective(xb, y, trial)
                ok = ft <= f - 0.5 * step * gn2
                accept = pending & ok
                w[:, accept] = trial[:, accept]
                f[accept] = ft[accept]
                pending &= ~ok
                if not pending.any():
                    break
                step[pending] *= 0.5
            step[active] *= 2.0
        self.coef_ = w
        self.n_iter_ = iters
        return self

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x @ self.coef_[:-1] + self.coef_[-1]
