"""Run configuration: TOML file -> validated dataclasses.

Unknown keys are rejected so typos fail loudly; every physical parameter is
range-checked on construction.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields as dc_fields

import tomli

from .errors import ConfigError
from .fields import SolverParams, StripGrid
from .shear import ShearFlow

EXPERIMENT_KINDS = ("simulate-aniso", "simulate-hydro", "sweep", "besov", "selftest")


@dataclass(frozen=True)
class BandConfig:
    a: float = 0.5
    lam: float = 1.0
    mu: float = 1.0
    delta: float = 0.01

    def __post_init__(self):
        if self.a <= 0:
            raise ConfigError("band half-width a must be positive")
        if self.lam <= 0 or self.mu <= 0 or self.delta <= 0:
            raise ConfigError("band rates lam, mu and delta must be positive")
        if self.mu < self.lam:
            raise ConfigError("mu must be >= lam")


@dataclass(frozen=True)
class InitialConfig:
    profile: str = "clamped_jet"
    amp_u: float = 5.0e-3
    amp_q: float = 0.0
    seed: int = 7

    def __post_init__(self):
        if self.profile not in ("zero", "clamped_jet"):
            raise ConfigError(f"unknown initial profile {self.profile!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "simulate-aniso"
    eps_ladder: tuple = (0.2, 0.1, 0.05, 0.025)
    sample_every: int = 10
    gate_threshold: float = 0.25
    strict_gates: bool = False
    zeta_includes_dyu: bool = False

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if len(self.eps_ladder) > 0 and any(e <= 0 for e in self.eps_ladder):
            raise ConfigError("eps ladder entries must be positive")
        if self.sample_every < 1:
            raise ConfigError("sample_every must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    grid: StripGrid = field(default_factory=lambda: StripGrid(64, 63))
    params: SolverParams = field(default_factory=SolverParams)
    eps: float = 0.1
    flow: ShearFlow = field(default_factory=ShearFlow.single)
    band: BandConfig = field(default_factory=BandConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    out_dir: str = "out"
    threads: int = 1

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


def _take(section: dict, name: str, allowed: set) -> dict:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return section


def _build(cls, section: dict, name: str, rename=None):
    rename = rename or {}
    allowed = {f.name for f in dc_fields(cls)} | set(rename)
    _take(section, name, allowed)
    kwargs = {rename.get(k, k): v for k, v in section.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [{name}] section: {exc}") from exc


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse a TOML config file; omitted sections fall back to defaults."""
    raw = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, "rb") as fh:
            try:
                raw = tomli.load(fh)
            except tomli.TOMLDecodeError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from exc

    top_allowed = {"grid", "params", "shear", "band", "initial", "experiment", "output"}
    _take(raw, "top level", top_allowed)

    grid = _build(StripGrid, raw.get("grid", {}), "grid")

    psec = dict(raw.get("params", {}))
    eps = psec.pop("eps", 0.1)
    params = _build(SolverParams, psec, "params")
    if not isinstance(eps, (int, float)) or eps <= 0:
        raise ConfigError("params.eps must be a positive number")

    ssec = dict(raw.get("shear", {}))
    _take(ssec, "shear", {"modes", "coeffs"})
    modes = ssec.get("modes", [1])
    coeffs = ssec.get("coeffs", [0.05])
    if len(modes) != len(coeffs):
        raise ConfigError("[shear] modes and coeffs must have equal length")
    try:
        flow = ShearFlow(tuple((int(m), float(c)) for m, c in zip(modes, coeffs)))
    except ValueError as exc:
        raise ConfigError(f"bad [shear] section: {exc}") from exc

    band = _build(BandConfig, raw.get("band", {}), "band")
    initial = _build(InitialConfig, raw.get("initial", {}), "initial")

    esec = dict(raw.get("experiment", {}))
    if "eps_ladder" in esec:
        esec["eps_ladder"] = tuple(float(e) for e in esec["eps_ladder"])
    experiment = _build(ExperimentConfig, esec, "experiment")

    osec = dict(raw.get("output", {}))
    _take(osec, "output", {"dir", "threads"})
    out_dir = str(osec.get("dir", "out"))
    threads = int(osec.get("threads", _env_threads()))

    cfg = RunConfig(
        grid=grid,
        params=params,
        eps=float(eps),
        flow=flow,
        band=band,
        initial=initial,
        experiment=experiment,
        out_dir=out_dir,
        threads=threads,
    )
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def _env_threads() -> int:
    raw = os.environ.get("STRIP_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Apply CLI flag overrides (eps, t_end, out_dir, threads, seed, strict_gates)."""
    from dataclasses import replace

    params = cfg.params
    if overrides.get("t_end") is not None:
        params = replace(params, t_end=float(overrides["t_end"]))
    experiment = cfg.experiment
    if overrides.get("strict_gates"):
        experiment = replace(experiment, strict_gates=True)
    initial = cfg.initial
    if overrides.get("seed") is not None:
        initial = replace(initial, seed=int(overrides["seed"]))
    kw = {}
    if overrides.get("eps") is not None:
        kw["eps"] = float(overrides["eps"])
    if overrides.get("out_dir") is not None:
        kw["out_dir"] = str(overrides["out_dir"])
    if overrides.get("threads") is not None:
        kw["threads"] = max(1, int(overrides["threads"]))
    try:
        return replace(cfg, params=params, experiment=experiment, initial=initial, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
