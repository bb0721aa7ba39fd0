"""Batched Thomas solves for the per-mode implicit systems.

Every implicit operator in the lab is tridiagonal in y with a mode-dependent
diagonal shift, so one vectorized forward/backward sweep over all x-modes at
once replaces a loop of per-mode banded solves.  No pivoting: the systems are
strictly diagonally dominant (I + dt*(positive shift) - dt*D2).
"""

from __future__ import annotations

import numpy as np

from .errors import SolverSingular


class BatchedTridiag:
    """LU of M independent tridiagonal systems sharing the band structure.

    ``lower``/``upper`` are scalars or (M,) arrays (constant along each
    diagonal, as for shifted second-difference operators); ``diag`` is
    (M,) or (M, n).
    """

    def __init__(self, diag, lower, upper, n: int):
        diag = np.asarray(diag, dtype=float)
        if diag.ndim == 1:
            diag = np.repeat(diag[:, None], n, axis=1)
        m = diag.shape[0]
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (m,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (m,))
        self.n = n
        # Thomas factorization: cp[j] = c / (b - a*cp[j-1])
        cp = np.empty((m, n - 1))
        denom = diag[:, 0].copy()
        self._check(denom)
        cp[:, 0] = upper / denom
        for j in range(1, n - 1):
            denom = diag[:, j] - lower * cp[:, j - 1]
            self._check(denom)
            cp[:, j] = upper / denom
        self.denom_last = diag[:, -1] - lower * cp[:, -1]
        self._check(self.denom_last)
        self.cp = cp
        self.lower = lower
        self.diag = diag

    @staticmethod
    def _check(denom):
        if not np.all(np.isfinite(denom)) or np.any(np.abs(denom) < 1e-300):
            raise SolverSingular("tridiagonal factorization broke down")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve all M systems; rhs has shape (M, n), real or complex."""
        m, n = rhs.shape
        if n != self.n:
            raise ValueError("rhs length does not match factorization")
        out = np.empty_like(rhs)
        dp = np.empty_like(rhs)
        denom = self.diag[:, 0]
        dp[:, 0] = rhs[:, 0] / denom
        for j in range(1, n):
            denom = self.diag[:, j] - self.lower * self.cp[:, j - 1]
            dp[:, j] = (rhs[:, j] - self.lower * dp[:, j - 1]) / denom
        out[:, -1] = dp[:, -1]
        for j in range(n - 2, -1, -1):
            out[:, j] = dp[:, j] - self.cp[:, j] * out[:, j + 1]
        return out


def apply_tridiag(diag, lower, upper, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product for the same batched band layout as above."""
    diag = np.asarray(diag)
    if diag.ndim == 1:
        diag = diag[:, None]
    out = diag * x
    out[:, :-1] += upper * x[:, 1:] if np.isscalar(upper) else np.asarray(upper)[:, None] * x[:, 1:]
    out[:, 1:] += lower * x[:, :-1] if np.isscalar(lower) else np.asarray(lower)[:, None] * x[:, :-1]
    return out
