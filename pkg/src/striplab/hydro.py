"""Time integration of the limit hydrostatic system.

The limit system is linear in u given the base shear: with Q identically
zero (forced by the reduction when the base flow actually shears),

    du/dt + U du/dx + v dU/dy + dp/dx = d2u/dy2,   dp/dy = 0,
    du/dx + dv/dy = 0,   u = 0 at the walls,

with v and dp/dx derived from u at every evaluation: v by the vertical
integral of -du/dx, and the (y-independent) pressure gradient from the
vertical integral of the u-equation,

    dp/dx = du/dy|_{y=1} - du/dy|_{y=0} - 2 d/dx int_0^1 U u dy.

Compatibility (zero vertical mean of u per x-mode) is structural here: the
right-hand side is projected so its vertical mean vanishes exactly (the
projection removes a fixed smooth unit-mean profile), and the implicit
diffusion solve absorbs the projection through a Sherman-Morrison rank-one
update.  The generator assembled by the dense oracle is exactly the
operator the stepper integrates, so the two can be compared at time-
integration accuracy.

Stepping is the same IMEX midpoint as the anisotropic solver: backward
Euler half-step predictor, implicit-trapezoid/explicit-midpoint corrector.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .errors import BlowupDetected, CompatibilityViolation
from .fields import (
    ScalarField,
    SolverParams,
    StripGrid,
    d2y,
    ddx,
    integrate_y,
    l2_norm,
    v_from_u,
    wall_dy_traces,
)
from .shear import ShearFlow
from .tridiag import BatchedTridiag


def compat_profile(grid: StripGrid) -> np.ndarray:
    """Smooth Dirichlet profile with discrete unit vertical mean.

    (pi/2) sin(pi y), rescaled so the trapezoid mean is exactly 1; used to
    remove the incompatible component of a field or increment.
    """
    w = 0.5 * np.pi * np.sin(np.pi * grid.y)
    return w / (grid.dy * w.sum())


def enforce_compat(u: ScalarField, return_correction: bool = False):
    """Project out the per-mode vertical mean; idempotent to round-off."""
    grid = u.grid
    w = compat_profile(grid)
    means = grid.dy * u.data.sum(axis=1)
    out = dc_replace(u, data=u.data - means[:, None] * w[None, :])
    if return_correction:
        return out, float(np.abs(means).max())
    return out


def compat_residual(u: ScalarField) -> float:
    return float(np.abs(integrate_y(u.to_spec()) / u.grid.nx).max())


def recover_pressure_gradient(u: ScalarField, flow: ShearFlow, t: float = 0.0) -> ScalarField:
    """dp/dx as a y-independent field: wall traces of du/dy (one-sided,
    second order) minus twice the x-derivative of the vertical mean of U u."""
    grid = u.grid
    uphys = u.to_phys()
    t0, t1 = wall_dy_traces(uphys)
    uu = uphys.data * flow.profile(t, grid.y)[None, :]
    mean_uu = grid.dy * uu.sum(axis=1)
    mean_hat = np.fft.fft(mean_uu)
    dx_mean = np.fft.ifft(1j * grid.xi * mean_hat).real
    col = t1 - t0 - 2.0 * dx_mean
    return ScalarField.from_phys(grid, np.repeat(col[:, None], grid.ny, axis=1))


@dataclass(frozen=True)
class HydroState:
    """Prognostic u only; v and dp/dx are recomputed on demand."""

    u: ScalarField
    t: float = 0.0


class HydroSolver:
    """Second-order IMEX integrator for the hydrostatic system."""

    def __init__(self, grid: StripGrid, flow: ShearFlow, params: SolverParams, state: HydroState):
        self.grid = grid
        self.flow = flow
        self.params = params
        self.u_hat = state.u.spectrum().copy()
        self.t = state.t
        self._w = compat_profile(grid)
        self._setup_implicit()

    def _setup_implicit(self):
        grid = self.grid
        h = self.params.dt / 2.0
        dy2 = grid.dy ** 2
        # T = I - h D2, shared by every mode
        self._T = BatchedTridiag(np.array([1.0 + 2.0 * h / dy2]), -h / dy2, -h / dy2, grid.ny)
        tinv_w = self._T.solve(self._w[None, :])[0]
        # trapz(D2 x) = -(x_1 + x_ny)/dy, exact by telescoping
        self._tfun = lambda x: -(x[..., 0] + x[..., -1]) / grid.dy
        self._tinv_w = tinv_w
        self._sm_denom = 1.0 + h * float(self._tfun(tinv_w))
        self._h = h

    # -- right-hand side -----------------------------------------------------

    def _project(self, arr: np.ndarray) -> np.ndarray:
        means = self.grid.dy * arr.sum(axis=1)
        return arr - means[:, None] * self._w[None, :]

    def _explicit_arrays(self, u_hat: np.ndarray, t: float) -> np.ndarray:
        """Projected advection + pressure terms, per mode (diffusion excluded)."""
        grid = self.grid
        xi = grid.xi
        uprof = self.flow.profile(t, grid.y)
        dyuprof = self.flow.dy_profile(t, grid.y)
        dxu = (1j * xi)[:, None] * u_hat
        # v = -int_0^y du/dx: cumulative trapezoid with implicit wall zeros
        csum = np.cumsum(dxu, axis=1)
        v_hat = -grid.dy * (csum - 0.5 * dxu)
        out = -uprof[None, :] * dxu - dyuprof[None, :] * v_hat
        # pressure: wall traces minus 2 dx of the vertical mean of U u
        dy = grid.dy
        t0 = (4.0 * u_hat[:, 0] - u_hat[:, 1]) / (2.0 * dy)
        t1 = (u_hat[:, -2] - 4.0 * u_hat[:, -1]) / (2.0 * dy)
        mean_uu = dy * (u_hat * uprof[None, :]).sum(axis=1)
        press = (t1 - t0) - 2.0 * 1j * xi * mean_uu
        out -= press[:, None]
        return self._project(out)

    def _d2y_arrays(self, u_hat: np.ndarray) -> np.ndarray:
        dy2 = self.grid.dy ** 2
        out = np.empty_like(u_hat)
        out[:, 1:-1] = (u_hat[:, 2:] - 2.0 * u_hat[:, 1:-1] + u_hat[:, :-2]) / dy2
        out[:, 0] = (u_hat[:, 1] - 2.0 * u_hat[:, 0]) / dy2
        out[:, -1] = (u_hat[:, -2] - 2.0 * u_hat[:, -1]) / dy2
        return out

    def rhs_arrays(self, u_hat: np.ndarray, t: float) -> np.ndarray:
        """The full projected generator applied to u (for tests/oracle)."""
        return self._explicit_arrays(u_hat, t) + self._project(self._d2y_arrays(u_hat))

    # -- implicit solve: (I - h P D2) x = b via Sherman-Morrison ------------

    def _solve_implicit(self, b: np.ndarray) -> np.ndarray:
        x0 = self._T.solve(b)
        gamma = self._h * self._tfun(x0) / self._sm_denom
        return x0 - gamma[:, None] * self._tinv_w[None, :]

    # -- stepping ------------------------------------------------------------

    def step(self):
        h, t = self._h, self.t
        u_n = self.u_hat
        e_n = self._explicit_arrays(u_n, t)
        u_star = self._solve_implicit(u_n + h * e_n)
        e_star = self._explicit_arrays(u_star, t + h)
        z = self._solve_implicit(u_n + h * e_star)
        self.u_hat = 2.0 * z - u_n
        # idempotent safety net; the generator already preserves the mean
        means = self.grid.dy * self.u_hat.sum(axis=1)
        self.u_hat -= means[:, None] * self._w[None, :]
        self.t = t + self.params.dt
        if not np.all(np.isfinite(self.u_hat)):
            raise BlowupDetected(f"hydro field non-finite at t={self.t:.4g}")
        if np.abs(self.u_hat).max() / self.grid.nx > self.params.blowup_threshold:
            raise BlowupDetected(f"hydro norm ceiling exceeded at t={self.t:.4g}")

    def state(self) -> HydroState:
        f = ScalarField.from_spec(self.grid, self.u_hat.copy()).to_phys()
        return HydroState(u=f, t=self.t)

    def run(self, t_end: float | None = None, callback=None):
        t_end = self.params.t_end if t_end is None else t_end
        n = 0
        while self.t < t_end - 1e-12:
            self.step()
            n += 1
            if callback is not None:
                callback(self, n)
        return self.state()


def hydro_rhs(state: HydroState, flow: ShearFlow, params: SolverParams, strict: bool = False) -> ScalarField:
    """du/dt of the hydrostatic system at the given state.

    The increment is projected so its vertical mean vanishes per mode; the
    pressure formula makes the unprojected mean O(dy^2) already.
    """
    if strict:
        resid = compat_residual(state.u)
        if resid > 1.0e-8:
            raise CompatibilityViolation(f"initial data incompatible: {resid:.3e}")
    solver = HydroSolver(state.u.grid, flow, params, state)
    out = solver.rhs_arrays(state.u.spectrum(), state.t)
    return ScalarField.from_spec(state.u.grid, out).to_phys()


# ---------------------------------------------------------------------------
# dense oracle


class DenseHydroOracle:
    """Independently assembled per-mode matrices of the hydrostatic generator.

    Everything is built from explicit dense blocks (second-difference matrix,
    cumulative-trapezoid matrix, trace rows, trapezoid row and the
    compatibility projector), never from the solver's field operators.  The
    time dependence enters only through the base-flow series, so

        A_m(t) = A_base[m] + sum_j exp(-(m_j pi)^2 t) * A_flow[j][m].

    The reference trajectory integrates these blocks with classical RK4.
    """

    def __init__(self, grid: StripGrid, flow: ShearFlow):
        if grid.nx * grid.ny > 32 * 33:
            raise ValueError("dense oracle is restricted to small grids")
        self.grid = grid
        self.flow = flow
        ny, dy = grid.ny, grid.dy

        d2 = np.zeros((ny, ny))
        idx = np.arange(ny)
        d2[idx, idx] = -2.0 / dy ** 2
        d2[idx[:-1], idx[:-1] + 1] = 1.0 / dy ** 2
        d2[idx[1:], idx[1:] - 1] = 1.0 / dy ** 2

        # cumulative trapezoid from the lower wall (implicit zero there)
        cum = np.tril(np.ones((ny, ny)), -1) * dy
        cum[idx, idx] = dy / 2.0

        # t1 - t0 = (u[-2] - 4u[-1])/2dy - (4u[0] - u[1])/2dy
        tr = np.zeros(ny)
        tr[-2] += 1.0 / (2.0 * dy)
        tr[-1] += -4.0 / (2.0 * dy)
        tr[0] += -4.0 / (2.0 * dy)
        tr[1] += 1.0 / (2.0 * dy)

        trapz = np.full(ny, dy)
        w = compat_profile(grid)
        proj = np.eye(ny) - np.outer(w, trapz)
        ones = np.ones((ny, 1))

        self.a_base = []
        self.a_flow = []
        for xi in grid.xi:
            base = d2 - ones @ tr[None, :]
            self.a_base.append(proj @ base)
            per_flow = []
            for m, c in flow.coeffs:
                uprof = c * np.sin(m * np.pi * grid.y)
                dyuprof = c * m * np.pi * np.cos(m * np.pi * grid.y)
                blk = (
                    -1j * xi * np.diag(uprof)
                    + 1j * xi * np.diag(dyuprof) @ cum
                    + 2.0 * 1j * xi * ones @ (trapz * uprof)[None, :]
                )
                per_flow.append(proj @ blk)
            self.a_flow.append(per_flow)

    def matrix(self, mode: int, t: float) -> np.ndarray:
        a = self.a_base[mode].astype(complex).copy()
        for (m, _), blk in zip(self.flow.coeffs, self.a_flow[mode]):
            a += np.exp(-((m * np.pi) ** 2) * t) * blk
        return a

    def apply(self, u_hat: np.ndarray, t: float) -> np.ndarray:
        out = np.empty_like(u_hat)
        for i in range(self.grid.nx):
            out[i] = self.matrix(i, t) @ u_hat[i]
        return out

    def base_spectrum(self, mode: int) -> np.ndarray:
        """Eigenvalues of the zero-flow generator block for one x-mode."""
        return np.linalg.eigvals(self.a_base[mode])

    def evolve(self, u0_hat: np.ndarray, t_end: float, dt: float = 5.0e-4) -> np.ndarray:
        """RK4 reference trajectory of the per-mode linear systems."""
        u = u0_hat.astype(complex).copy()
        nsteps = int(round(t_end / dt))
        for n in range(nsteps):
            t = n * dt
            k1 = self.apply(u, t)
            k2 = self.apply(u + dt / 2.0 * k1, t + dt / 2.0)
            k3 = self.apply(u + dt / 2.0 * k2, t + dt / 2.0)
            k4 = self.apply(u + dt * k3, t + dt)
            u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return u


def dense_oracle(grid: StripGrid, flow: ShearFlow) -> DenseHydroOracle:
    return DenseHydroOracle(grid, flow)


def hydro_l2(state: HydroState) -> float:
    return l2_norm(state.u)
