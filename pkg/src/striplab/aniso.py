"""Time integration of the scaled anisotropic system at fixed eps.

Unknowns are the scaled pair (q1, q2) = (Q11, eps*Q12) and the velocity
perturbation (u, v).  The velocity is advanced in anisotropic
stream-function / vorticity form,

    u = ubar(y) + dPsi/dy,   v = -dPsi/dx,   omega = Lap_eps Psi,

which keeps the discrete divergence identically zero and eliminates the
pressure (cross-differentiating the two momentum equations cancels it).
The x-mean mode ubar obeys a 1D heat equation with the mean of the
nonlinear and elastic forcing; its vertical counterpart is identically zero.

Time scheme, second order overall:
  * rotation of (q1, q2) by the rate kappa = dU/dy / eps + du/dy - eps^2 dv/dx
    is integrated exactly (pointwise cos/sin), split Strang-style around the
    rest of the step with kappa frozen at the step endpoints;
  * everything else takes one IMEX midpoint step: backward-Euler half-step
    predictor, then implicit-trapezoid + explicit-midpoint corrector.  The
    implicit part (Lap_eps and the linear -a' relaxation) is a per-mode
    tridiagonal solve; the clamped stream-function constraint is enforced
    with a precomputed 2x2 influence matrix per mode.

Quadratic and cubic products are dealiased with the 2/3 rule.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .errors import BlowupDetected
from .fields import (
    FlowState,
    ScalarField,
    SolverParams,
    StripGrid,
    d2y,
    ddx,
    ddy,
    dealias,
    integrate_y,
    l2_norm,
    laplacian_eps,
    linf_norm,
    multiply,
    v_from_u,
)
from .lp import BandState, DyadicFilterBank, apply_band_weight, besov_norm, build_filter_bank
from .shear import ShearFlow
from .tridiag import BatchedTridiag

# ---------------------------------------------------------------------------
# stress and rotation


@dataclass(frozen=True)
class StressTensor:
    """The six elastic stress components in scaled variables.

    r21_1 equals r12_1 (shared symmetric part) and r21_2 = -r12_2, matching
    the block structure of the elastic stress; r11 and r22 are sums of
    squares, hence nonnegative.
    """

    r11: ScalarField
    r12_1: ScalarField
    r12_2: ScalarField
    r21_1: ScalarField
    r21_2: ScalarField
    r22: ScalarField


def compute_stress(state: FlowState) -> StressTensor:
    """Evaluate the stress blocks pseudospectrally (2/3-dealiased products).

    In the scaled variables the blocks read
        r11   = 2 eps^4 ((dx q1)^2 + (dx q2)^2)
        r12_1 = 2 eps^3 (dx q1 dy q1 + dx q2 dy q2)        (= r21_1)
        r12_2 = 2 eps^2 (q2 Lap_eps q1 - q1 Lap_eps q2)    (= -r21_2)
        r22   = 2 eps^2 ((dy q1)^2 + (dy q2)^2)
    """
    eps = state.eps
    q1, q2 = state.q1, state.q2
    q1x, q2x = ddx(q1), ddx(q2)
    q1y, q2y = ddy(q1), ddy(q2)
    lq1 = laplacian_eps(q1, eps)
    lq2 = laplacian_eps(q2, eps)

    r11 = 2.0 * eps ** 4 * (multiply(q1x, q1x) + multiply(q2x, q2x))
    r12_1 = 2.0 * eps ** 3 * (multiply(q1x, q1y) + multiply(q2x, q2y))
    r12_2 = 2.0 * eps ** 2 * (multiply(q2, lq1) - multiply(q1, lq2))
    r22 = 2.0 * eps ** 2 * (multiply(q1y, q1y) + multiply(q2y, q2y))
    return StressTensor(
        r11=r11.to_phys(),
        r12_1=r12_1.to_phys(),
        r12_2=r12_2.to_phys(),
        r21_1=r12_1.to_phys(),
        r21_2=(-1.0 * r12_2).to_phys(),
        r22=r22.to_phys(),
    )


@dataclass(frozen=True)
class RotationRate:
    """Skew coupling rate between the scaled Q components."""

    kappa: ScalarField


def compute_rotation_rate(state: FlowState, flow: ShearFlow) -> RotationRate:
    """kappa = dU/dy / eps + du/dy - eps^2 dv/dx (x-independent when u=v=0)."""
    grid = state.u.grid
    base = flow.dy_profile(state.t, grid.y) / state.eps
    kap = ddy(state.u).values() + np.broadcast_to(base, (grid.nx, grid.ny))
    kap = kap - state.eps ** 2 * ddx(state.v).values()
    return RotationRate(ScalarField.from_phys(grid, kap))


def q_rhs(state: FlowState, flow: ShearFlow, params: SolverParams):
    """Full right-hand sides (dq1/dt, dq2/dt) of the scaled pair.

    dq1/dt = -(U+eps u) dx q1 - eps v dy q1 - kappa q2 + Lap_eps q1
             - a' q1 - 2c' q1 (q1^2 + 2 q2^2)
    dq2/dt mirrors it with +kappa q1.
    """
    eps = state.eps
    grid = state.u.grid
    uadv = _advecting_u(state, flow)
    kap = compute_rotation_rate(state, flow).kappa

    def one(q, other, sign):
        adv = multiply(uadv, ddx(q).to_phys()) + eps * multiply(state.v, ddy(q))
        rot = sign * multiply(kap, other)
        cubic = _cubic_term(state, q, params.c_prime)
        lin = laplacian_eps(q, eps) - params.a_prime * q.to_spec()
        return (lin - adv.to_spec() + rot.to_spec() - cubic.to_spec()).to_phys()

    dq1 = one(state.q1, state.q2, -1.0)
    dq2 = one(state.q2, state.q1, +1.0)
    return dq1, dq2


def _advecting_u(state: FlowState, flow: ShearFlow) -> ScalarField:
    grid = state.u.grid
    base = np.broadcast_to(flow.profile(state.t, grid.y), (grid.nx, grid.ny))
    return ScalarField.from_phys(grid, base + state.eps * state.u.values())


def _cubic_term(state: FlowState, q: ScalarField, c_prime: float) -> ScalarField:
    # 2c' q (q1^2 + 2 q2^2), staged 2/3-dealiased products
    mag = multiply(state.q1, state.q1) + 2.0 * multiply(state.q2, state.q2)
    return 2.0 * c_prime * multiply(q, mag.to_phys())


# ---------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class StepFlags:
    """Debug switches for the invariant tests; everything on by default."""

    advection: bool = True
    diffusion: bool = True
    rotation: bool = True
    cubic: bool = True
    stress: bool = True
    x_diffusion: bool = True  # keep the eps^2 dx^2 part of Lap_eps


class AnisoSolver:
    """Owns one (eps, grid, params) triple and advances its state in place."""

    def __init__(
        self,
        grid: StripGrid,
        flow: ShearFlow,
        params: SolverParams,
        state: FlowState,
        flags: StepFlags = StepFlags(),
    ):
        self.grid = grid
        self.flow = flow
        self.params = params
        self.flags = flags
        self.eps = state.eps
        self.t = state.t
        self._setup_implicit()
        self._load_state(state)

    # -- state layout: psi_hat (nx, ny) complex with zero mean row, ubar (ny,)

    def _load_state(self, state: FlowState):
        grid = self.grid
        u_hat = state.u.spectrum()
        v_hat = state.v.spectrum()
        self.ubar = u_hat[0].real / grid.nx
        xi = grid.xi.copy()
        xi[0] = 1.0
        psi = -v_hat / (1j * xi)[:, None]
        psi[0] = 0.0
        self.psi_hat = psi
        self.q1_hat = state.q1.spectrum()
        self.q2_hat = state.q2.spectrum()
        self.t = state.t

    def state(self) -> FlowState:
        grid = self.grid
        u_hat = self._u_hat()
        v_hat = self._v_hat()
        mk = lambda h: ScalarField.from_spec(grid, h).to_phys()
        return FlowState(
            eps=self.eps,
            t=self.t,
            u=mk(u_hat),
            v=mk(v_hat),
            q1=mk(self.q1_hat),
            q2=mk(self.q2_hat),
        )

    def _u_hat(self) -> np.ndarray:
        from .fields import _stencil_first

        u = _stencil_first(self.psi_hat, self.grid.dy, dirichlet=True)
        u[0] = self.ubar * self.grid.nx
        return u

    def _v_hat(self) -> np.ndarray:
        return -(1j * self.grid.xi)[:, None] * self.psi_hat

    # -- implicit machinery ------------------------------------------------

    def _setup_implicit(self):
        grid, dt, eps = self.grid, self.params.dt, self.eps
        ny, dy2 = grid.ny, grid.dy ** 2
        ksq = (eps * grid.xi) ** 2 if self.flags.x_diffusion else np.zeros(grid.nx)
        h = dt / 2.0
        dcoef = 1.0 if self.flags.diffusion else 0.0

        # velocity: A = I + h*(ksq - D2), clamped via influence matrix
        diag_a = 1.0 + h * dcoef * (ksq + 2.0 / dy2)
        off_a = -h * dcoef / dy2
        self._solve_a = BatchedTridiag(diag_a, off_a, off_a, ny)
        # stream function: L = D2 - ksq (negative definite, solve -L)
        diag_l = ksq + 2.0 / dy2
        off_l = -1.0 / dy2
        self._solve_negl = BatchedTridiag(diag_l, off_l, off_l, ny)
        self._ksq = ksq

        # homogeneous wall-vorticity responses and the 2x2 influence matrices
        if dcoef > 0.0:
            src = h / dy2
        else:
            # without diffusion the wall values decouple; keep unit responses
            src = 1.0
        e0 = np.zeros((grid.nx, ny))
        e0[:, 0] = src
        e1 = np.zeros((grid.nx, ny))
        e1[:, -1] = src
        w_h0 = self._solve_a.solve(e0)
        w_h1 = self._solve_a.solve(e1)
        p_h0 = -self._solve_negl.solve(w_h0)
        p_h1 = -self._solve_negl.solve(w_h1)
        t0_h0, t1_h0 = self._traces(p_h0)
        t0_h1, t1_h1 = self._traces(p_h1)
        det = t0_h0 * t1_h1 - t0_h1 * t1_h0
        det[0] = 1.0  # mean mode unused
        self._infl = (t0_h0, t0_h1, t1_h0, t1_h1, det)
        self._psi_h = (p_h0, p_h1)

        # q blocks: I + h*(a' + ksq - D2)
        arate = self.params.a_prime
        diag_q = 1.0 + h * (arate + dcoef * (ksq + 2.0 / dy2))
        off_q = -h * dcoef / dy2
        self._solve_q = BatchedTridiag(diag_q, off_q, off_q, ny)
        # mean u: I - h*D2 (row 0 of the velocity solve has ksq[0] = 0)
        diag_m = np.array([1.0 + h * dcoef * 2.0 / dy2])
        self._solve_mean = BatchedTridiag(diag_m, -h * dcoef / dy2, -h * dcoef / dy2, ny)

    def _traces(self, psi: np.ndarray):
        dy = self.grid.dy
        t0 = (4.0 * psi[:, 0] - psi[:, 1]) / (2.0 * dy)
        t1 = (psi[:, -2] - 4.0 * psi[:, -1]) / (2.0 * dy)
        return t0, t1

    def _solve_momentum(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (I + h(ksq - D2)) omega = rhs with tau(Psi)=0; returns Psi."""
        w = self._solve_a.solve(rhs)
        psi = -self._solve_negl.solve(w)
        r0, r1 = self._traces(psi)
        t0_h0, t0_h1, t1_h0, t1_h1, det = self._infl
        alpha = -(r0 * t1_h1 - r1 * t0_h1) / det
        beta = -(t0_h0 * r1 - t1_h0 * r0) / det
        psi = psi + alpha[:, None] * self._psi_h[0] + beta[:, None] * self._psi_h[1]
        psi[0] = 0.0
        return psi

    def _omega_of(self, psi: np.ndarray) -> np.ndarray:
        dy2 = self.grid.dy ** 2
        out = np.empty_like(psi)
        out[:, 1:-1] = (psi[:, 2:] - 2.0 * psi[:, 1:-1] + psi[:, :-2]) / dy2
        out[:, 0] = (psi[:, 1] - 2.0 * psi[:, 0]) / dy2
        out[:, -1] = (psi[:, -2] - 2.0 * psi[:, -1]) / dy2
        return out - self._ksq[:, None] * psi

    # -- explicit terms ------------------------------------------------------

    def _explicit(self, psi_hat, ubar, q1_hat, q2_hat, t):
        """Explicit tendencies (omega, mean-u, q1, q2) at the given state/time."""
        grid, eps = self.grid, self.eps
        flags = self.flags
        mkp = lambda h: ScalarField.from_spec(grid, h).to_phys()

        from .fields import _stencil_first

        u_hat = _stencil_first(psi_hat, grid.dy, dirichlet=True)
        u_hat[0] = ubar * grid.nx
        v_hat = -(1j * grid.xi)[:, None] * psi_hat
        u = mkp(u_hat)
        v = mkp(v_hat)
        q1 = mkp(q1_hat)
        q2 = mkp(q2_hat)
        state = FlowState(eps=eps, t=t, u=u, v=v, q1=q1, q2=q2)

        zero = np.zeros((grid.nx, grid.ny))
        e_om = zero.copy().astype(complex)
        f_mean = np.zeros(grid.ny)

        if flags.advection:
            uadv = _advecting_u(state, self.flow)
            # v d/dy(U + eps u) = v (dU/dy + eps du/dy)
            dyu_tot = eps * ddy(u).values() + np.broadcast_to(
                self.flow.dy_profile(t, grid.y), (grid.nx, grid.ny)
            )
            dyu_tot = ScalarField.from_phys(grid, dyu_tot)
            n_u = multiply(uadv, ddx(u).to_phys()) + multiply(v, dyu_tot)
            n_v = multiply(uadv, ddx(v).to_phys()) + eps * multiply(v, ddy(v))
            e_om -= ddy(n_u.to_phys()).to_spec().data
            e_om += eps ** 2 * (1j * grid.xi)[:, None] * n_v.spectrum()
            f_mean -= n_u.to_phys().spectrum()[0].real / grid.nx

        if flags.stress:
            g_u, g_v = self._stress_forces(state)
            e_om -= ddy(g_u.to_phys()).to_spec().data
            e_om += eps ** 2 * (1j * grid.xi)[:, None] * g_v.spectrum()
            f_mean -= g_u.to_phys().spectrum()[0].real / grid.nx

        e_om[0] = 0.0

        # q tendencies, rotation excluded (handled exactly by the split)
        def q_expl(qf):
            acc = np.zeros((grid.nx, grid.ny), dtype=complex)
            if flags.advection:
                uadv = _advecting_u(state, self.flow)
                adv = multiply(uadv, ddx(qf).to_phys()) + eps * multiply(v, ddy(qf))
                acc -= adv.spectrum()
            if flags.cubic:
                acc -= _cubic_term(state, qf, self.params.c_prime).spectrum()
            return acc

        e_q1 = q_expl(q1)
        e_q2 = q_expl(q2)
        return e_om, f_mean, e_q1, e_q2

    def _stress_forces(self, state: FlowState):
        """Force densities in the two momentum equations from the Q stress.

        g_u = (dx R11 + dy R21) / eps and g_v = (dx R12 + dy R22) / eps^2,
        expanded in scaled variables so no 1/eps is ever formed:

          g_u = 2 eps^3 dx[(dx q)^2] + 2 eps^2 dy[dx q . dy q]
                + 2 eps dy[q1 Lap_eps q2 - q2 Lap_eps q1]
          g_v = 2 eps dx[dx q . dy q] + 2 dx[q2 Lap_eps q1 - q1 Lap_eps q2]
                + 2 dy[(dy q)^2]
        """
        eps = state.eps
        q1, q2 = state.q1, state.q2
        q1x, q2x = ddx(q1).to_phys(), ddx(q2).to_phys()
        q1y, q2y = ddy(q1), ddy(q2)
        lq1 = laplacian_eps(q1, eps).to_phys()
        lq2 = laplacian_eps(q2, eps).to_phys()

        grad_sq_x = multiply(q1x, q1x) + multiply(q2x, q2x)
        cross = multiply(q1x, q1y) + multiply(q2x, q2y)
        swirl = multiply(q1, lq2) - multiply(q2, lq1)  # vanishes at the walls
        grad_sq_y = multiply(q1y, q1y) + multiply(q2y, q2y)

        g_u = (
            2.0 * eps ** 3 * ddx(grad_sq_x)
            + 2.0 * eps ** 2 * ddy(cross.to_phys()).to_spec()
            + 2.0 * eps * ddy(swirl.to_phys()).to_spec()
        )
        # (dy q)^2 does not vanish at the walls: one-sided rows there
        g_v = (
            2.0 * eps * ddx(cross)
            + 2.0 * ddx((-1.0) * swirl)
            + 2.0 * ddy(grad_sq_y.to_phys(), dirichlet=False).to_spec()
        )
        return g_u, g_v

    # -- rotation ------------------------------------------------------------

    def rotate_q(self, span: float, t: float):
        """Exact pointwise rotation of (q1, q2) by kappa(t)*span.

        Conserves q1^2 + q2^2 at every grid point to round-off.
        """
        if not self.flags.rotation:
            return
        grid = self.grid
        from .fields import _stencil_first

        u_hat = _stencil_first(self.psi_hat, grid.dy, dirichlet=True)
        u_hat[0] = self.ubar * grid.nx
        dyu = _stencil_first(u_hat, grid.dy, dirichlet=True)
        dyu_phys = np.fft.ifft(dyu, axis=0).real
        # dv/dx = -dx^2 Psi -> xi^2 * Psi_hat per mode
        dxv = np.fft.ifft((grid.xi ** 2)[:, None] * self.psi_hat, axis=0).real
        base = self.flow.dy_profile(t, grid.y) / self.eps
        kappa = dyu_phys + base[None, :] - self.eps ** 2 * dxv
        ang = kappa * span
        c, s = np.cos(ang), np.sin(ang)
        q1 = np.fft.ifft(self.q1_hat, axis=0).real
        q2 = np.fft.ifft(self.q2_hat, axis=0).real
        self.q1_hat = np.fft.fft(c * q1 - s * q2, axis=0)
        self.q2_hat = np.fft.fft(s * q1 + c * q2, axis=0)

    # -- stepping ------------------------------------------------------------

    def step(self, advance_q: bool = True, advance_momentum: bool = True):
        """One full step: half rotation, IMEX midpoint, half rotation.

        The advance_* switches freeze one subsystem (it still feeds the
        other's explicit terms at the frozen values).
        """
        dt = self.params.dt
        t = self.t
        if advance_q:
            self.rotate_q(dt / 2.0, t)

        om_n = self._omega_of(self.psi_hat)
        ubar_n = self.ubar.copy()
        q1_n, q2_n = self.q1_hat.copy(), self.q2_hat.copy()

        # predictor: backward-Euler half step
        e_om, f_mean, e_q1, e_q2 = self._explicit(self.psi_hat, ubar_n, q1_n, q2_n, t)
        h = dt / 2.0
        psi_s = self._solve_momentum(om_n + h * e_om) if advance_momentum else self.psi_hat
        ubar_s = (
            self._solve_mean.solve((ubar_n + h * f_mean)[None, :])[0]
            if advance_momentum
            else ubar_n
        )
        q1_s = self._solve_q.solve(q1_n + h * e_q1) if advance_q else q1_n
        q2_s = self._solve_q.solve(q2_n + h * e_q2) if advance_q else q2_n

        # corrector: trapezoid on the implicit part via the half-sum state
        e_om, f_mean, e_q1, e_q2 = self._explicit(psi_s, ubar_s, q1_s, q2_s, t + h)
        if advance_momentum:
            z_psi = self._solve_momentum(om_n + h * e_om)
            self.psi_hat = 2.0 * z_psi - self.psi_hat
            z_m = self._solve_mean.solve((ubar_n + h * f_mean)[None, :])[0]
            self.ubar = 2.0 * z_m - ubar_n
        if advance_q:
            z1 = self._solve_q.solve(q1_n + h * e_q1)
            self.q1_hat = 2.0 * z1 - q1_n
            z2 = self._solve_q.solve(q2_n + h * e_q2)
            self.q2_hat = 2.0 * z2 - q2_n

        self.t = t + dt
        if advance_q:
            self.rotate_q(dt / 2.0, self.t)
        self._check_finite()

    def _check_finite(self):
        ceiling = self.params.blowup_threshold
        for arr in (self.psi_hat, self.q1_hat, self.q2_hat):
            if not np.all(np.isfinite(arr)):
                raise BlowupDetected(f"non-finite field at t={self.t:.4g}")
            if np.abs(arr).max() / self.grid.nx > ceiling:
                raise BlowupDetected(f"norm ceiling exceeded at t={self.t:.4g}")
        if not np.all(np.isfinite(self.ubar)) or np.abs(self.ubar).max() > ceiling:
            raise BlowupDetected(f"mean flow blew up at t={self.t:.4g}")

    def run(self, t_end: float | None = None, callback=None):
        t_end = self.params.t_end if t_end is None else t_end
        n = 0
        while self.t < t_end - 1e-12:
            self.step()
            n += 1
            if callback is not None:
                callback(self, n)
        return self.state()


def default_dt(grid: StripGrid, flow: ShearFlow, eps: float, cap: float = 2.5e-3) -> float:
    """Advective CFL guard for the explicit terms (diffusion is implicit)."""
    speed = max(flow.sum_abs, 1e-6)
    return float(min(cap, 0.25 * grid.dx / speed))


def step_q(
    state: FlowState,
    flow: ShearFlow,
    params: SolverParams,
    dt: float | None = None,
    flags: StepFlags = StepFlags(),
) -> FlowState:
    """Advance only (q1, q2) by one step, velocity frozen."""
    params = params if dt is None else dc_replace(params, dt=dt)
    solver = AnisoSolver(state.u.grid, flow, params, state, flags)
    solver.step(advance_q=True, advance_momentum=False)
    return solver.state()


def step_momentum(
    state: FlowState,
    flow: ShearFlow,
    params: SolverParams,
    dt: float | None = None,
    flags: StepFlags = StepFlags(),
) -> FlowState:
    """Advance only (u, v) by one step, Q pair frozen."""
    params = params if dt is None else dc_replace(params, dt=dt)
    solver = AnisoSolver(state.u.grid, flow, params, state, flags)
    solver.step(advance_q=False, advance_momentum=True)
    return solver.state()


# ---------------------------------------------------------------------------
# monitor


@dataclass(frozen=True)
class MaxtDiagnostic:
    t: float
    monitored: float
    gate: float
    violated: bool

    @property
    def margin(self) -> float:
        return self.gate - self.monitored


def maxt_monitor(
    state: FlowState,
    band: BandState,
    params: SolverParams,
    bank: DyadicFilterBank | None = None,
) -> MaxtDiagnostic:
    """Weighted-norm gate: the monitored combination must stay below
    delta*exp(-R t); violation is flagged, never fatal."""
    if bank is None:
        bank = build_filter_bank(state.u.grid)
    eps = state.eps
    w = lambda f: apply_band_weight(f, band)
    u_psi = w(state.u)
    q1_psi, q2_psi = w(state.q1), w(state.q2)
    monitored = (
        eps * besov_norm(u_psi, 1.5, bank)
        + besov_norm(ddy(u_psi.to_phys()), 0.5, bank)
        + eps * besov_norm((q1_psi, q2_psi), 1.5, bank)
        + besov_norm((ddy(q1_psi.to_phys()), ddy(q2_psi.to_phys())), 0.5, bank)
    )
    gate = band.delta * np.exp(-params.decay_rate * state.t)
    return MaxtDiagnostic(state.t, monitored, gate, monitored > gate)


def initial_gate_value(state: FlowState, a: float, bank: DyadicFilterBank | None = None) -> float:
    """Smallness gate on the data: weighted B^{1/2} norms at t=0.

    ||e^{a|Dx|}(eps u0, eps^2 v0)|| + ||e^{a|Dx|}(q1, q2)0||
    + ||e^{a|Dx|}(eps^2 dx, eps dy)(q1, q2)0||, all in B^{1/2}.
    """
    if bank is None:
        bank = build_filter_bank(state.u.grid)
    eps = state.eps
    band = BandState(a=a, rate_coeff=1.0, kind="eta", delta=0.0)
    w = lambda f: apply_band_weight(f, band)
    vel = besov_norm((eps * w(state.u), eps ** 2 * w(state.v)), 0.5, bank)
    qn = besov_norm((w(state.q1), w(state.q2)), 0.5, bank)
    gq = besov_norm(
        (
            eps ** 2 * ddx(w(state.q1)),
            eps ** 2 * ddx(w(state.q2)),
            eps * ddy(w(state.q1).to_phys()),
            eps * ddy(w(state.q2).to_phys()),
        ),
        0.5,
        bank,
    )
    return vel + qn + gq


def perturbation_energy(state: FlowState) -> float:
    """Quadratic functional ||(eps u, eps^2 v)||^2 + ||(q1, q2)||^2."""
    eps = state.eps
    return (
        (eps * l2_norm(state.u)) ** 2
        + (eps ** 2 * l2_norm(state.v)) ** 2
        + l2_norm(state.q1) ** 2
        + l2_norm(state.q2) ** 2
    )


def max_field_linf(state: FlowState) -> float:
    return max(linf_norm(f) for f in (state.u, state.v, state.q1, state.q2))


def diagnostic_pressure_gradient(
    solver: AnisoSolver, probe_dt: float = 1.0e-6
) -> ScalarField:
    """Recover dp/dx from the u-momentum residual (diagnostic only).

    du/dt is a forward difference across a short probe step of a copy, so the
    recovered gradient carries O(probe_dt) + O(dt^2) error.
    """
    import copy

    state0 = solver.state()
    probe = copy.copy(solver)
    probe.psi_hat = solver.psi_hat.copy()
    probe.ubar = solver.ubar.copy()
    probe.q1_hat = solver.q1_hat.copy()
    probe.q2_hat = solver.q2_hat.copy()
    probe.params = dc_replace(solver.params, dt=probe_dt)
    probe._setup_implicit()
    probe.step()
    state1 = probe.state()

    grid, eps = solver.grid, solver.eps
    dudt = (state1.u.values() - state0.u.values()) / probe_dt
    uadv = _advecting_u(state0, solver.flow)
    dyu_tot = ScalarField.from_phys(
        grid,
        eps * ddy(state0.u).values()
        + np.broadcast_to(solver.flow.dy_profile(state0.t, grid.y), (grid.nx, grid.ny)),
    )
    n_u = multiply(uadv, ddx(state0.u).to_phys()) + multiply(state0.v, dyu_tot)
    g_u, _ = solver._stress_forces(state0)
    resid = (
        laplacian_eps(state0.u, eps).to_phys().values()
        - n_u.values()
        - g_u.to_phys().values()
        - dudt
    )
    return ScalarField.from_phys(grid, resid)
