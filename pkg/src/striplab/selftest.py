"""Quick invariant suite behind the `selftest` subcommand.

A compact, fast subset of the full pytest suite: structural identities that
must hold on any healthy build.  Each check returns (name, ok, detail).
"""

from __future__ import annotations

import numpy as np

from .aniso import AnisoSolver, StepFlags
from .fields import (
    ScalarField,
    SolverParams,
    StripGrid,
    ddx,
    ddy,
    l2_norm,
    linf_norm,
    v_from_u,
)
from .hydro import enforce_compat
from .initial import build_flow_state
from .lp import bony_decompose, build_filter_bank, bernstein_check, besov_norm
from .shear import ShearFlow, heat_residual


def _random_field(grid: StripGrid, rng) -> ScalarField:
    spec = np.zeros((grid.nx, grid.ny), dtype=complex)
    m = np.fft.fftfreq(grid.nx) * grid.nx
    keep = np.abs(m) <= grid.nx // 3
    amp = rng.standard_normal((keep.sum(), grid.ny)) + 1j * rng.standard_normal((keep.sum(), grid.ny))
    spec[keep] = amp * np.exp(-0.3 * np.abs(m[keep]))[:, None]
    f = ScalarField.from_spec(grid, spec).to_phys()
    yprof = np.sin(np.pi * grid.y) * np.sin(2 * np.pi * grid.y)
    return ScalarField.from_phys(grid, f.data * yprof[None, :])


def run_selftest(verbose: bool = True) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(2024)
    grid = StripGrid(64, 63)
    bank = build_filter_bank(grid)
    results = []

    def check(name, ok, detail=""):
        results.append((name, bool(ok), detail))
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")

    dev = bank.partition_deviation()
    check("dyadic partition of unity", dev <= 1e-14, f"max dev {dev:.2e}")

    f = _random_field(grid, rng)
    rt = np.abs(f.to_spec().to_phys().data - f.data).max()
    check("transform round trip", rt <= 10 * np.finfo(float).eps * max(linf_norm(f), 1e-300),
          f"{rt:.2e}")

    g = _random_field(grid, rng)
    tf, tg, rem = bony_decompose(f, g, bank)
    err = np.abs(tf.data + tg.data + rem.data - f.data * g.data).max()
    scale = max(l2_norm(f) * l2_norm(g), 1e-300)
    check("paraproduct reconstruction", err <= 1e-12 * scale, f"{err:.2e}")

    rep = bernstein_check(f, bank)
    check("per-block derivative ratios", rep and all(r[4] for r in rep),
          f"{len(rep)} occupied blocks")

    flow = ShearFlow.single(1, 0.05)
    hr = heat_residual(flow, 0.3, StripGrid(16, 127))
    check("base flow heat residual", hr <= 1e-6, f"{hr:.2e}")

    u = _random_field(grid, rng)
    uc = enforce_compat(u.to_phys())
    v = v_from_u(uc)
    div = ddx(uc) + ddy(v.to_phys()).to_spec()
    # trapezoid/centered pairing is consistent at O(dy^2)
    bound = 30.0 * grid.dy ** 2 * max(l2_norm(u), 1e-300)
    check("divergence consistency", l2_norm(div) <= bound, f"{l2_norm(div):.2e}")

    twice = enforce_compat(uc)
    check("compat projection idempotent", np.abs(twice.data - uc.data).max() <= 1e-13,
          "")

    params = SolverParams(dt=1e-3, t_end=1.0)
    state = build_flow_state(StripGrid(16, 15), eps=0.1, amp_u=0.0, amp_q=0.05, seed=3)
    solver = AnisoSolver(StripGrid(16, 15), flow, params, state,
                         StepFlags(advection=False, diffusion=False, cubic=False, stress=False))
    before = solver.q1_hat.copy(), solver.q2_hat.copy()
    mag0 = np.abs(np.fft.ifft(before[0], axis=0)) ** 2 + np.abs(np.fft.ifft(before[1], axis=0)) ** 2
    solver.rotate_q(0.5 * params.dt, 0.0)
    mag1 = (
        np.abs(np.fft.ifft(solver.q1_hat, axis=0)) ** 2
        + np.abs(np.fft.ifft(solver.q2_hat, axis=0)) ** 2
    )
    drift = np.abs(mag1 - mag0).max()
    check("rotation conserves |q|^2", drift <= 1e-13, f"{drift:.2e}")

    b0 = besov_norm(f, 0.0, bank)
    l2 = l2_norm(f)
    check("B^0 comparable to L2", 0.5 * l2 <= b0 <= (bank.n_blocks + 1) * l2,
          f"ratio {b0 / l2:.3f}")

    return results


def selftest_ok(results) -> bool:
    return all(ok for _, ok, _ in results)
