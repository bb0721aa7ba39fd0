"""Paired runs, eps ladders and rate fits for the convergence experiments.

A paired run co-advances the anisotropic solver at fixed eps and the
hydrostatic solver on the same grid and clock from the same initial u, forms
the differences w1 = u_eps - u and w2 = v_eps - v at shared sample times, and
records the band-weighted difference norms together with the running band
values.  The eps ladder repeats this over a geometric set of eps and fits
the loss Y(eps) = sup_t ||(eps w1, eps^2 w2)||_{B^{1/2}, Theta-weighted}
against eps in log-log.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .aniso import AnisoSolver, StepFlags, maxt_monitor
from .errors import BandExhausted, BlowupDetected, InsufficientData, StripLabError
from .fields import FlowState, ScalarField, SolverParams, StripGrid, ddx, ddy, v_from_u
from .hydro import HydroSolver, HydroState
from .initial import build_flow_state, clamped_stream_function
from .lp import (
    BandState,
    apply_band_weight,
    besov_norm,
    build_filter_bank,
    step_band_ode,
)
from .shear import ShearFlow

SAMPLE_COLUMNS = (
    "t",
    "B12_Theta_eps_w",       # ||(eps w1, eps^2 w2)_Theta||
    "B12_Theta_q",           # ||(q1, q2)_Theta||
    "B12_Theta_grad_q",      # ||(eps^2 dx, eps dy)(q1, q2)_Theta||
    "B12_psi_expRt_dx_u",    # e^{Rt} ||dx(eps u, eps^2 v)_psi|| (alt weighting)
    "B12_u",                 # unweighted ||u^eps||
    "B12_q",                 # unweighted ||(q1, q2)||
    "maxt_margin",
    "eta",
    "zeta",
)


@dataclass
class SweepRecord:
    """Per-eps time series of the difference norms and band values."""

    eps: float
    times: list = field(default_factory=list)
    series: dict = field(default_factory=lambda: {c: [] for c in SAMPLE_COLUMNS[1:]})
    terminal_status: str = "completed"

    def add(self, t: float, values: dict):
        self.times.append(t)
        for k in self.series:
            self.series[k].append(values[k])

    @property
    def y_loss(self) -> float:
        """sup over samples of the Theta-weighted difference norm."""
        return max(self.series["B12_Theta_eps_w"]) if self.times else math.nan

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.series[name])


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    m_hat: float
    n_points: int


def _loglog_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return float(slope), float(intercept), min(r2, 1.0)


def fit_rate(records: list[SweepRecord]) -> RateFit:
    """Least-squares slope of log Y against log eps over the ladder."""
    pts = [(r.eps, r.y_loss) for r in records if r.terminal_status == "completed"]
    pts = [(e, y) for e, y in pts if np.isfinite(y) and y > 0]
    if len(pts) < 3:
        raise InsufficientData(f"need >= 3 completed runs, have {len(pts)}")
    eps = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    slope, intercept, r2 = _loglog_fit(eps, ys)
    return RateFit(slope, intercept, r2, float(np.max(ys / eps)), len(pts))


def fit_decay(times, values, tail_fraction: float = 0.5, min_span: float = 1.0) -> RateFit:
    """Fit N(t) ~ N0 exp(-sigma t) on the tail of a time series; slope = sigma."""
    t = np.asarray(times, dtype=float)
    n = np.asarray(values, dtype=float)
    if t.size < 4 or t[-1] - t[0] < min_span:
        raise InsufficientData("series too short for a decay fit")
    cut = t[0] + (1.0 - tail_fraction) * (t[-1] - t[0])
    keep = (t >= cut) & (n > 0) & np.isfinite(n)
    if keep.sum() < 3:
        raise InsufficientData("tail has too few positive samples")
    tt, ln = t[keep], np.log(n[keep])
    slope, intercept = np.polyfit(tt, ln, 1)
    pred = slope * tt + intercept
    ss_res = float(np.sum((ln - pred) ** 2))
    ss_tot = float(np.sum((ln - ln.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(float(-slope), float(intercept), min(r2, 1.0), math.nan, int(keep.sum()))


# ---------------------------------------------------------------------------
# paired run


@dataclass(frozen=True)
class PairConfig:
    """Everything one worker needs to run a pair at one eps."""

    grid: StripGrid
    flow: ShearFlow
    params: SolverParams
    amp_u: float = 5.0e-3
    amp_q: float = 0.0
    seed: int = 7
    band_a: float = 0.5
    band_lambda: float = 1.0
    band_mu: float = 1.0
    band_delta: float = 0.01
    sample_every: int = 10
    zeta_includes_dyu: bool = False
    eps_terms_off: bool = False


def run_pair(eps: float, cfg: PairConfig) -> SweepRecord:
    """Co-advance both solvers at one eps and record the difference norms.

    With ``eps_terms_off`` the anisotropic leg degenerates to the hydrostatic
    discrete update (the two systems coincide once every eps-weighted term is
    dropped), so the record's differences vanish identically; this exercises
    the pairing bookkeeping, not the solvers.
    """
    grid, flow, params = cfg.grid, cfg.flow, cfg.params
    bank = build_filter_bank(grid)
    record = SweepRecord(eps=eps)

    state0 = build_flow_state(grid, eps, cfg.amp_u, cfg.amp_q, cfg.seed)
    hydro0 = HydroState(u=state0.u, t=0.0)
    hydro = HydroSolver(grid, flow, params, hydro0)

    if cfg.eps_terms_off:
        aniso = HydroSolver(grid, flow, params, hydro0)
    else:
        aniso = AnisoSolver(grid, flow, params, state0)

    eta = BandState(a=cfg.band_a, rate_coeff=cfg.band_lambda, kind="eta", delta=cfg.band_delta)
    zeta = BandState(a=cfg.band_a, rate_coeff=cfg.band_mu, kind="zeta")

    def zeta_rate(aniso_state: FlowState, hydro_u: ScalarField, eta_band: BandState, theta_like: BandState) -> float:
        w = lambda f: apply_band_weight(f, eta_band)
        gu = besov_norm((eps * ddx(w(aniso_state.u)), ddy(w(aniso_state.u).to_phys())), 0.5, bank)
        gq = besov_norm(
            (
                eps * ddx(w(aniso_state.q1)),
                eps * ddx(w(aniso_state.q2)),
                ddy(w(aniso_state.q1).to_phys()),
                ddy(w(aniso_state.q2).to_phys()),
            ),
            0.5,
            bank,
        )
        uh = apply_band_weight(hydro_u, theta_like)
        if cfg.zeta_includes_dyu:
            last = besov_norm(ddy(uh.to_phys()), 0.5, bank)
        else:
            last = besov_norm(uh, 0.5, bank)
        return gu + gq + last

    # the hydro band (theta weight) rides along for the zeta source term
    theta = BandState(a=cfg.band_a, rate_coeff=cfg.band_lambda, kind="theta")

    def sample(a_state: FlowState, h_state: HydroState, eta_b, zeta_b):
        v_h = v_from_u(h_state.u).to_phys()
        w1 = ScalarField.from_phys(grid, a_state.u.values() - h_state.u.values())
        w2 = ScalarField.from_phys(grid, a_state.v.values() - v_h.values())
        theta_w = lambda f: apply_band_weight(f, zeta_b)
        psi_w = lambda f: apply_band_weight(f, eta_b)
        ew = besov_norm((eps * theta_w(w1), eps ** 2 * theta_w(w2)), 0.5, bank)
        qn = besov_norm((theta_w(a_state.q1), theta_w(a_state.q2)), 0.5, bank)
        gq = besov_norm(
            (
                eps ** 2 * ddx(theta_w(a_state.q1)),
                eps ** 2 * ddx(theta_w(a_state.q2)),
                eps * ddy(theta_w(a_state.q1).to_phys()),
                eps * ddy(theta_w(a_state.q2).to_phys()),
            ),
            0.5,
            bank,
        )
        expr = math.exp(params.decay_rate * a_state.t)
        dxu = besov_norm(
            (eps * expr * ddx(psi_w(a_state.u)), eps ** 2 * expr * ddx(psi_w(a_state.v))),
            0.5,
            bank,
        )
        mon = maxt_monitor(a_state, dc_replace(eta_b, delta=cfg.band_delta), params, bank)
        record.add(
            a_state.t,
            {
                "B12_Theta_eps_w": ew,
                "B12_Theta_q": qn,
                "B12_Theta_grad_q": gq,
                "B12_psi_expRt_dx_u": dxu,
                "B12_u": besov_norm(a_state.u, 0.5, bank),
                "B12_q": besov_norm((a_state.q1, a_state.q2), 0.5, bank),
                "maxt_margin": mon.margin,
                "eta": eta_b.value,
                "zeta": zeta_b.value,
            },
        )

    def aniso_state() -> FlowState:
        if cfg.eps_terms_off:
            h = aniso.state()
            z = ScalarField.zeros(grid)
            return FlowState(eps=eps, t=h.t, u=h.u, v=v_from_u(h.u).to_phys(), q1=z, q2=z)
        return aniso.state()

    sample(aniso_state(), hydro.state(), eta, zeta)
    n_steps = int(round(params.t_end / params.dt))
    try:
        rate_now = zeta_rate(aniso_state(), hydro.state().u, eta, theta)
        for n in range(1, n_steps + 1):
            aniso.step()
            hydro.step()
            eta = step_band_ode(eta, params.dt, flow=flow)
            theta = step_band_ode(theta, params.dt, flow=flow)
            rate_next = zeta_rate(aniso_state(), hydro.state().u, eta, theta)
            zeta = step_band_ode(zeta, params.dt, flow=flow, sample_now=rate_now, sample_next=rate_next)
            rate_now = rate_next
            if zeta.width <= 0:
                raise BandExhausted(f"zeta band exhausted at t={zeta.t:.4g}")
            if n % cfg.sample_every == 0 or n == n_steps:
                sample(aniso_state(), hydro.state(), eta, zeta)
    except BlowupDetected:
        record.terminal_status = "blowup"
    except BandExhausted:
        record.terminal_status = "band_exhausted"
    return record


def _worker(args) -> SweepRecord:
    eps, cfg = args
    return run_pair(eps, cfg)


def run_sweep(eps_ladder, cfg: PairConfig, threads: int = 1) -> list[SweepRecord]:
    """Run the eps ladder (optionally in a process pool) and merge by eps."""
    jobs = [(float(e), cfg) for e in eps_ladder]
    if threads > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_worker, jobs))
    else:
        records = [_worker(j) for j in jobs]
    return sorted(records, key=lambda r: -r.eps)


@dataclass(frozen=True)
class SweepVerdict:
    fit: RateFit
    m_hats: tuple
    m_hat_drift: float
    monotone: bool
    slope_ok: bool
    r2_ok: bool
    m_hat_ok: bool

    def ok(self) -> bool:
        return self.slope_ok and self.r2_ok and self.m_hat_ok


def judge_sweep(
    records: list[SweepRecord],
    slope_min: float = 0.9,
    r2_min: float = 0.95,
    m_hat_tol: float = 0.2,
) -> SweepVerdict:
    """Apply the convergence acceptance thresholds to a finished ladder."""
    fit = fit_rate(records)
    done = [r for r in records if r.terminal_status == "completed"]
    finest = sorted(done, key=lambda r: r.eps)[:2]
    m_hats = tuple(r.y_loss / r.eps for r in finest)
    if len(m_hats) == 2 and max(m_hats) > 0:
        drift = abs(m_hats[0] - m_hats[1]) / max(m_hats)
    else:
        drift = math.inf
    ys = [r.y_loss for r in sorted(done, key=lambda r: -r.eps)]
    monotone = all(a >= b for a, b in zip(ys, ys[1:]))
    return SweepVerdict(
        fit=fit,
        m_hats=m_hats,
        m_hat_drift=drift,
        monotone=monotone,
        slope_ok=fit.slope >= slope_min,
        r2_ok=fit.r2 >= r2_min,
        m_hat_ok=drift <= m_hat_tol and all(np.isfinite(m_hats)),
    )
