"""Command-line front end.

Subcommands: simulate-aniso, simulate-hydro, sweep, besov, selftest.
Exit codes: 0 success, 2 config error, 3 solver blowup, 4 acceptance
failure (selftest or sweep thresholds).
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .aniso import AnisoSolver, initial_gate_value, maxt_monitor
from .config import RunConfig, load_config
from .errors import BlowupDetected, ConfigError, StripLabError
from .fields import ScalarField, ddy
from .hydro import HydroSolver, HydroState, compat_residual
from .initial import build_flow_state
from .lp import BandState, apply_band_weight, besov_norm, build_filter_bank, step_band_ode
from .reporting import (
    checkpoint_flow_state,
    read_checkpoint,
    write_checkpoint,
    write_csv,
    write_json,
    write_sweep_outputs,
)
from .selftest import run_selftest, selftest_ok
from .shear import check_gates
from .sweep import PairConfig, fit_decay, judge_sweep, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_ACCEPT = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="striplab", description=__doc__)
    p.add_argument("--version", action="version", version=f"striplab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="TOML run configuration")
        sp.add_argument("--out", dest="out_dir", default=None, help="output directory")
        sp.add_argument("--eps", type=float, default=None)
        sp.add_argument("--t-end", dest="t_end", type=float, default=None)
        sp.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: STRIP_LAB_THREADS or 1)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--strict-gates", action="store_true",
                        help="refuse to run when a smallness gate fails")

    for name, help_ in (
        ("simulate-aniso", "run the scaled anisotropic solver at one eps"),
        ("simulate-hydro", "run the hydrostatic limit solver"),
        ("sweep", "full eps-ladder convergence experiment"),
        ("selftest", "run the invariant suites"),
    ):
        sp = sub.add_parser(name, help=help_)
        common(sp)

    sp = sub.add_parser("besov", help="band/Besov norms of a checkpoint")
    common(sp)
    sp.add_argument("checkpoint", help="checkpoint directory")
    sp.add_argument("--s", dest="s_values", type=float, nargs="*", default=[0.5, 1.5])
    return p


def _load(args) -> RunConfig:
    overrides = {
        "eps": args.eps,
        "t_end": args.t_end,
        "out_dir": args.out_dir,
        "threads": args.threads,
        "seed": args.seed,
        "strict_gates": args.strict_gates,
    }
    return load_config(args.config, overrides)


def _gate_check(cfg: RunConfig, state) -> bool:
    report = check_gates(cfg.flow, cfg.experiment.gate_threshold)
    for line in report.lines():
        print("gate:", line, file=sys.stderr)
    data_gate = initial_gate_value(state, cfg.band.a)
    ok = report.all_ok() and data_gate < cfg.experiment.gate_threshold
    print(f"gate: initial data norm = {data_gate:.6g} "
          f"({'<' if ok else '>='} {cfg.experiment.gate_threshold:g})", file=sys.stderr)
    return ok


def _run_aniso(cfg: RunConfig) -> int:
    grid, params = cfg.grid, cfg.params
    bank = build_filter_bank(grid)
    state0 = build_flow_state(grid, cfg.eps, cfg.initial.amp_u, cfg.initial.amp_q,
                              cfg.initial.seed, cfg.initial.profile)
    if not _gate_check(cfg, state0) and cfg.experiment.strict_gates:
        print("error: smallness gates failed in strict mode", file=sys.stderr)
        return EXIT_CONFIG
    solver = AnisoSolver(grid, cfg.flow, params, state0)
    band = BandState(a=cfg.band.a, rate_coeff=cfg.band.lam, kind="eta", delta=cfg.band.delta)

    rows = []

    def record(s, b):
        st = s.state()
        w = lambda f: apply_band_weight(f, b)
        mon = maxt_monitor(st, b, params, bank)
        rows.append(
            [
                st.t,
                besov_norm(st.u, 0.5, bank),
                besov_norm((st.q1, st.q2), 0.5, bank),
                besov_norm((cfg.eps * w(st.u), cfg.eps ** 2 * w(st.v)), 0.5, bank),
                besov_norm((w(st.q1), w(st.q2)), 0.5, bank),
                mon.margin,
                b.value,
                b.width,
            ]
        )

    record(solver, band)
    n_steps = int(round(params.t_end / params.dt))
    try:
        for n in range(1, n_steps + 1):
            solver.step()
            band = step_band_ode(band, params.dt, flow=cfg.flow)
            if n % cfg.experiment.sample_every == 0 or n == n_steps:
                record(solver, band)
    except BlowupDetected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP

    header = ["t", "B12_u", "B12_q", "B12_eps_u_psi", "B12_q_psi",
              "maxt_margin", "eta", "band_width"]
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_csv(os.path.join(cfg.out_dir, "aniso_series.csv"), header, rows)
    checkpoint_flow_state(os.path.join(cfg.out_dir, "aniso_final"), solver.state(),
                          {"kind": "aniso"})
    print(f"wrote {cfg.out_dir}/aniso_series.csv ({len(rows)} samples)")
    return EXIT_OK


def _run_hydro(cfg: RunConfig) -> int:
    grid, params = cfg.grid, cfg.params
    bank = build_filter_bank(grid)
    state0 = build_flow_state(grid, cfg.eps, cfg.initial.amp_u, 0.0,
                              cfg.initial.seed, cfg.initial.profile)
    hydro = HydroSolver(grid, cfg.flow, params, HydroState(u=state0.u, t=0.0))
    band = BandState(a=cfg.band.a, rate_coeff=cfg.band.lam, kind="theta")

    rows = []

    def record(s, b):
        st = s.state()
        w = apply_band_weight(st.u, b)
        rows.append(
            [
                st.t,
                besov_norm(st.u, 0.5, bank),
                besov_norm(w, 0.5, bank),
                besov_norm(ddy(w.to_phys()), 0.5, bank),
                compat_residual(st.u),
                b.value,
                b.width,
            ]
        )

    record(hydro, band)
    n_steps = int(round(params.t_end / params.dt))
    try:
        for n in range(1, n_steps + 1):
            hydro.step()
            band = step_band_ode(band, params.dt, flow=cfg.flow)
            if n % cfg.experiment.sample_every == 0 or n == n_steps:
                record(hydro, band)
    except BlowupDetected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP

    header = ["t", "B12_u", "B12_u_phi", "B12_dyu_phi", "compat_residual",
              "theta", "band_width"]
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_csv(os.path.join(cfg.out_dir, "hydro_series.csv"), header, rows)
    st = hydro.state()
    write_checkpoint(os.path.join(cfg.out_dir, "hydro_final"), grid, st.t,
                     {"u": st.u}, {"kind": "hydro", "eps": cfg.eps})
    ts = [r[0] for r in rows]
    try:
        fit = fit_decay(ts, [r[1] for r in rows])
        print(f"fitted decay rate of B12_u: {fit.slope:.4f}")
    except StripLabError:
        pass
    print(f"wrote {cfg.out_dir}/hydro_series.csv ({len(rows)} samples)")
    return EXIT_OK


def _run_sweep(cfg: RunConfig) -> int:
    pair = PairConfig(
        grid=cfg.grid,
        flow=cfg.flow,
        params=cfg.params,
        amp_u=cfg.initial.amp_u,
        amp_q=cfg.initial.amp_q,
        seed=cfg.initial.seed,
        band_a=cfg.band.a,
        band_lambda=cfg.band.lam,
        band_mu=cfg.band.mu,
        band_delta=cfg.band.delta,
        sample_every=cfg.experiment.sample_every,
        zeta_includes_dyu=cfg.experiment.zeta_includes_dyu,
    )
    records = run_sweep(cfg.experiment.eps_ladder, pair, threads=cfg.threads)
    for rec in records:
        print(f"eps={rec.eps:g}: status={rec.terminal_status} Y={rec.y_loss:.6g}")
        if rec.terminal_status == "blowup":
            return EXIT_BLOWUP
    try:
        verdict = judge_sweep(records)
    except StripLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ACCEPT
    write_sweep_outputs(cfg.out_dir, records, verdict)
    print(f"slope={verdict.fit.slope:.3f} r2={verdict.fit.r2:.4f} "
          f"M_hat={verdict.fit.m_hat:.6g} drift={verdict.m_hat_drift:.3f}")
    if not verdict.ok():
        print("sweep acceptance thresholds not met", file=sys.stderr)
        return EXIT_ACCEPT
    return EXIT_OK


def _run_besov(cfg: RunConfig, args) -> int:
    grid, t, fields, meta = read_checkpoint(args.checkpoint)
    bank = build_filter_bank(grid)
    band = BandState(a=cfg.band.a, rate_coeff=cfg.band.lam, kind="eta", delta=cfg.band.delta)
    out = {"t": t, "meta": meta, "norms": {}}
    for name, f in fields.items():
        entry = {}
        for s in args.s_values:
            entry[f"B{s:g}"] = besov_norm(f, s, bank)
            entry[f"B{s:g}_weighted"] = besov_norm(apply_band_weight(f, band), s, bank)
        out["norms"][name] = entry
    path = os.path.join(cfg.out_dir, "besov_norms.json")
    write_json(path, out)
    for name, entry in out["norms"].items():
        msg = ", ".join(f"{k}={v:.6g}" for k, v in entry.items())
        print(f"{name}: {msg}")
    print(f"wrote {path}")
    return EXIT_OK


def cli_main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "selftest":
            results = run_selftest()
            return EXIT_OK if selftest_ok(results) else EXIT_ACCEPT
        if args.command == "simulate-aniso":
            return _run_aniso(cfg)
        if args.command == "simulate-hydro":
            return _run_hydro(cfg)
        if args.command == "sweep":
            return _run_sweep(cfg)
        if args.command == "besov":
            return _run_besov(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowupDetected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (FileNotFoundError, StripLabError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError("unreachable")


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
