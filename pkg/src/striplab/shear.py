"""The base shear flow family and its smallness gates.

The base flow is x-independent, solves the 1D heat equation on (0, 1) with
Dirichlet walls, and is given in closed form by a finite sine series

    U(t, y) = sum_m  c_m exp(-m^2 pi^2 t) sin(m pi y).

All derivatives are evaluated analytically; the stencil operators are only
used to cross-check them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ScalarField, StripGrid


@dataclass(frozen=True)
class ShearFlow:
    """Finite list of (mode, coefficient) pairs for the heat-equation sine series."""

    coeffs: tuple[tuple[int, float], ...]

    def __post_init__(self):
        for m, _ in self.coeffs:
            if m < 1 or m != int(m):
                raise ValueError(f"mode numbers must be positive integers, got {m}")

    @classmethod
    def single(cls, m: int = 1, c: float = 0.05) -> "ShearFlow":
        return cls(((m, c),))

    @classmethod
    def none(cls) -> "ShearFlow":
        return cls(())

    @property
    def sum_abs(self) -> float:
        return sum(abs(c) for _, c in self.coeffs)

    @property
    def sum_m_abs(self) -> float:
        return sum(m * abs(c) for m, c in self.coeffs)

    @property
    def sum_div_m(self) -> float:
        return sum(abs(c) / m for m, c in self.coeffs)

    def profile(self, t: float, y: np.ndarray) -> np.ndarray:
        out = np.zeros_like(y)
        for m, c in self.coeffs:
            out += c * np.exp(-(m * np.pi) ** 2 * t) * np.sin(m * np.pi * y)
        return out

    def dy_profile(self, t: float, y: np.ndarray) -> np.ndarray:
        out = np.zeros_like(y)
        for m, c in self.coeffs:
            out += c * m * np.pi * np.exp(-(m * np.pi) ** 2 * t) * np.cos(m * np.pi * y)
        return out

    def d2y_profile(self, t: float, y: np.ndarray) -> np.ndarray:
        out = np.zeros_like(y)
        for m, c in self.coeffs:
            out -= c * (m * np.pi) ** 2 * np.exp(-(m * np.pi) ** 2 * t) * np.sin(m * np.pi * y)
        return out

    def l2y_norm(self, t: float) -> float:
        """Exact L2_y norm: distinct sine modes are orthogonal, each has norm 1/sqrt(2)."""
        acc = {}
        for m, c in self.coeffs:
            acc[m] = acc.get(m, 0.0) + c * np.exp(-(m * np.pi) ** 2 * t)
        return float(np.sqrt(sum(a * a for a in acc.values()) / 2.0))


def eval_U(flow: ShearFlow, t: float, grid: StripGrid) -> ScalarField:
    """Sample U(t, .) on the grid as an x-independent field."""
    prof = flow.profile(t, grid.y)
    return ScalarField.from_phys(grid, np.broadcast_to(prof, (grid.nx, grid.ny)).copy())


def eval_dyU(flow: ShearFlow, t: float, grid: StripGrid) -> ScalarField:
    prof = flow.dy_profile(t, grid.y)
    return ScalarField.from_phys(grid, np.broadcast_to(prof, (grid.nx, grid.ny)).copy())


@dataclass(frozen=True)
class GateReport:
    """Values of the smallness gates against a single threshold."""

    sum_m_abs: float
    sum_div_m: float
    sum_abs: float
    threshold: float
    shear_active: bool  # dU/dy not identically zero

    @property
    def global_gate_ok(self) -> bool:
        return self.sum_m_abs < self.threshold

    @property
    def weak_gate_ok(self) -> bool:
        return self.sum_div_m < self.threshold

    def all_ok(self) -> bool:
        return self.global_gate_ok and self.weak_gate_ok

    def lines(self) -> list[str]:
        out = [
            f"sum m|c_m|   = {self.sum_m_abs:.6g}  ({'<' if self.global_gate_ok else '>='} {self.threshold:g})",
            f"sum |c_m|/m  = {self.sum_div_m:.6g}  ({'<' if self.weak_gate_ok else '>='} {self.threshold:g})",
            f"sum |c_m|    = {self.sum_abs:.6g}",
        ]
        if not self.shear_active:
            out.append("dU/dy == 0: degenerate base flow, Q = 0 reduction not applicable")
        return out


def check_gates(flow: ShearFlow, threshold: float) -> GateReport:
    """Report each smallness gate and whether the base flow actually shears."""
    return GateReport(
        sum_m_abs=flow.sum_m_abs,
        sum_div_m=flow.sum_div_m,
        sum_abs=flow.sum_abs,
        threshold=threshold,
        shear_active=any(c != 0.0 for _, c in flow.coeffs),
    )


def heat_residual(flow: ShearFlow, t: float, grid: StripGrid, dt: float = 5.0e-3) -> float:
    """Max-norm residual of dU/dt - d2U/dy2 at time t.

    The time derivative is a 4th-order central difference of the analytic
    formula; the y-derivative is analytic, so the residual isolates the
    time-difference error.
    """
    y = grid.y
    stamps = [t + k * dt for k in (-2, -1, 1, 2)]
    u_m2, u_m1, u_p1, u_p2 = (flow.profile(s, y) for s in stamps)
    dudt = (u_m2 - 8.0 * u_m1 + 8.0 * u_p1 - u_p2) / (12.0 * dt)
    return float(np.abs(dudt - flow.d2y_profile(t, y)).max())
