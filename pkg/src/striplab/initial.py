"""Initial data profiles.

The default velocity profile is built from a clamped stream function so that
the horizontal compatibility (zero vertical mean of u per x-mode) and the
no-slip walls hold by construction:

    Psi0 = A * g(x) * (1 - cos(2 pi y)) / (2 pi),   u0 = dPsi0/dy,  v0 = -dPsi0/dx

with g an analytic few-mode profile with zero x-mean.  Both solvers are fed
the same discrete u0 so paired runs start bit-identically.
"""

from __future__ import annotations

import numpy as np

from .fields import FlowState, ScalarField, StripGrid, ddx, ddy

PROFILES = ("zero", "clamped_jet")


def analytic_xprofile(grid: StripGrid, seed: int, n_modes: int = 3) -> np.ndarray:
    """Zero-mean x-profile with geometrically decaying mode amplitudes."""
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_modes)
    out = np.zeros(grid.nx)
    for n in range(1, n_modes + 1):
        amp = 2.0 ** (1 - n)  # modes 1..3 with weights 1, 1/2, 1/4
        out += amp * np.cos(2.0 * np.pi * n * grid.x / grid.lx + phases[n - 1])
    return out / np.abs(out).max()


def clamped_stream_function(grid: StripGrid, amplitude: float, seed: int) -> ScalarField:
    g = analytic_xprofile(grid, seed)
    yprof = (1.0 - np.cos(2.0 * np.pi * grid.y)) / (2.0 * np.pi)
    return ScalarField.from_phys(grid, amplitude * np.outer(g, yprof))


def q_profile(grid: StripGrid, amplitude: float, seed: int) -> ScalarField:
    g = analytic_xprofile(grid, seed + 1)
    return ScalarField.from_phys(grid, amplitude * np.outer(g, np.sin(2.0 * np.pi * grid.y)))


def build_flow_state(
    grid: StripGrid,
    eps: float,
    amp_u: float = 5.0e-3,
    amp_q: float = 0.0,
    seed: int = 7,
    profile: str = "clamped_jet",
) -> FlowState:
    """Initial FlowState for the anisotropic solver (t = 0)."""
    if profile not in PROFILES:
        raise ValueError(f"unknown initial profile {profile!r}")
    if profile == "zero":
        z = ScalarField.zeros(grid)
        return FlowState(eps=eps, t=0.0, u=z, v=z, q1=z, q2=z)
    psi = clamped_stream_function(grid, amp_u, seed)
    u = ddy(psi)
    v = (-1.0) * ddx(psi).to_phys()
    if amp_q != 0.0:
        q1 = q_profile(grid, amp_q, seed)
        q2 = q_profile(grid, amp_q, seed + 100)
    else:
        q1 = ScalarField.zeros(grid)
        q2 = ScalarField.zeros(grid)
    return FlowState(eps=eps, t=0.0, u=u, v=v, q1=q1, q2=q2)


def initial_u(grid: StripGrid, amp_u: float, seed: int) -> ScalarField:
    """The shared horizontal velocity sample used by paired runs."""
    return ddy(clamped_stream_function(grid, amp_u, seed))
