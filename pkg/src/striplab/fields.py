"""Grids, scalar fields and the differential operators shared by every solver.

The domain is a strip: periodic in x (length ``lx``, sampled at ``nx`` points,
derivatives spectral) and walled in y (``ny`` interior nodes, homogeneous
Dirichlet ends built into the stencils, derivatives second-order centered).

A :class:`ScalarField` carries one unknown in either the physical view
(``nx x ny`` samples) or the spectral-in-x view (``nx`` complex modes x
``ny`` nodes, plain unnormalized DFT along axis 0).  Fields are treated as
immutable values: every operator returns a new field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CompatibilityViolation

PHYS = "phys"
SPEC = "spec"


@dataclass(frozen=True)
class StripGrid:
    """Discrete strip: x periodic, y in (0, 1) with Dirichlet walls.

    y nodes are y_j = j*dy, j = 1..ny with dy = 1/(ny+1); the wall values at
    y = 0, 1 are implicit zeros for Dirichlet fields.  The frequency of
    x-mode m is 2*pi*m/lx for m in {-nx/2, ..., nx/2 - 1}.
    """

    nx: int
    ny: int
    lx: float = 2.0 * np.pi

    def __post_init__(self):
        if self.nx < 8 or (self.nx & (self.nx - 1)) != 0:
            raise ValueError(f"nx must be a power of two >= 8, got {self.nx}")
        if self.ny < 7:
            raise ValueError(f"ny must be >= 7, got {self.ny}")
        if self.lx <= 0:
            raise ValueError("lx must be positive")

    @property
    def dy(self) -> float:
        return 1.0 / (self.ny + 1)

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.dy * np.arange(1, self.ny + 1)

    @property
    def xi(self) -> np.ndarray:
        """Signed x-frequencies in fftfreq order (includes the Nyquist mode)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)

    @property
    def dealias_keep(self) -> np.ndarray:
        """Boolean mask of modes kept by the 2/3-rule truncation."""
        m = np.fft.fftfreq(self.nx) * self.nx
        return np.abs(m) <= self.nx // 3


@dataclass(frozen=True)
class ScalarField:
    """One scalar unknown tied to a grid, in physical or spectral-in-x view."""

    grid: StripGrid
    data: np.ndarray
    view: str = PHYS
    real: bool = True

    def __post_init__(self):
        if self.data.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(
                f"field shape {self.data.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.ny})"
            )
        if self.view not in (PHYS, SPEC):
            raise ValueError(f"unknown view tag {self.view!r}")

    @classmethod
    def from_phys(cls, grid: StripGrid, data: np.ndarray) -> "ScalarField":
        data = np.asarray(data)
        return cls(grid, data, PHYS, real=not np.iscomplexobj(data))

    @classmethod
    def from_spec(cls, grid: StripGrid, data: np.ndarray, real: bool = True) -> "ScalarField":
        return cls(grid, np.asarray(data, dtype=complex), SPEC, real=real)

    @classmethod
    def zeros(cls, grid: StripGrid) -> "ScalarField":
        return cls(grid, np.zeros((grid.nx, grid.ny)), PHYS, real=True)

    def to_spec(self) -> "ScalarField":
        if self.view == SPEC:
            return self
        return replace(self, data=np.fft.fft(self.data, axis=0), view=SPEC)

    def to_phys(self) -> "ScalarField":
        if self.view == PHYS:
            return self
        out = np.fft.ifft(self.data, axis=0)
        if self.real:
            # Real fields drop the (conjugate-asymmetric) imaginary residue,
            # e.g. after an odd derivative touched the Nyquist mode.
            out = out.real
        return replace(self, data=out, view=PHYS)

    def values(self) -> np.ndarray:
        return self.to_phys().data

    def spectrum(self) -> np.ndarray:
        return self.to_spec().data

    def __add__(self, other: "ScalarField") -> "ScalarField":
        a, b = _align(self, other)
        return replace(a, data=a.data + b.data, real=a.real and b.real)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        a, b = _align(self, other)
        return replace(a, data=a.data - b.data, real=a.real and b.real)

    def __mul__(self, c: float) -> "ScalarField":
        return replace(self, data=self.data * c)

    __rmul__ = __mul__


def _align(a: ScalarField, b: ScalarField):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    if a.view != b.view:
        b = b.to_spec() if a.view == SPEC else b.to_phys()
    return a, b


@dataclass(frozen=True)
class SolverParams:
    """Coefficients and run controls shared by the time steppers.

    ``decay_rate`` is half the first Dirichlet eigenvalue of -d2/dy2 on
    (0, 1), i.e. pi^2/2; it sets the exponential weights used by the
    monitors and rate fits.
    """

    a_prime: float = 1.0
    c_prime: float = 1.0
    dt: float = 2.5e-3
    t_end: float = 1.0
    blowup_threshold: float = 1.0e3
    decay_rate: float = field(default=np.pi ** 2 / 2.0)

    def __post_init__(self):
        if self.a_prime <= 0 or self.c_prime <= 0:
            raise ValueError("a_prime and c_prime must be positive")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.blowup_threshold <= 0:
            raise ValueError("blowup_threshold must be positive")


@dataclass(frozen=True)
class FlowState:
    """Velocity perturbation and scaled Q pair at a fixed eps.

    ``q1, q2`` store the scaled pair (Q11, eps*Q12); the full Q tensor is
    [[q1, q2/eps], [q2/eps, -q1]], symmetric traceless by construction.
    """

    eps: float
    t: float
    u: ScalarField
    v: ScalarField
    q1: ScalarField
    q2: ScalarField

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    def full_q_tensor(self) -> np.ndarray:
        """Unscaled Q as an (nx, ny, 2, 2) array (diagnostic)."""
        q1 = self.q1.values()
        q12 = self.q2.values() / self.eps
        out = np.empty(q1.shape + (2, 2))
        out[..., 0, 0] = q1
        out[..., 0, 1] = q12
        out[..., 1, 0] = q12
        out[..., 1, 1] = -q1
        return out


# ---------------------------------------------------------------------------
# differential operators


def ddx(f: ScalarField) -> ScalarField:
    """Spectral x-derivative: multiply mode xi by i*xi (exact for band-limited data)."""
    g = f.to_spec()
    out = g.data * (1j * f.grid.xi)[:, None]
    return replace(g, data=out)


def d2x(f: ScalarField) -> ScalarField:
    g = f.to_spec()
    out = g.data * (-f.grid.xi ** 2)[:, None]
    return replace(g, data=out)


def _stencil_first(data: np.ndarray, dy: float, dirichlet: bool) -> np.ndarray:
    out = np.empty_like(data)
    out[:, 1:-1] = (data[:, 2:] - data[:, :-2]) / (2.0 * dy)
    if dirichlet:
        # implicit zeros at the walls
        out[:, 0] = data[:, 1] / (2.0 * dy)
        out[:, -1] = -data[:, -2] / (2.0 * dy)
    else:
        # one-sided second order at the first/last interior node
        out[:, 0] = (-3.0 * data[:, 0] + 4.0 * data[:, 1] - data[:, 2]) / (2.0 * dy)
        out[:, -1] = (3.0 * data[:, -1] - 4.0 * data[:, -2] + data[:, -3]) / (2.0 * dy)
    return out


def ddy(f: ScalarField, dirichlet: bool = True) -> ScalarField:
    """Centered y-derivative on interior nodes.

    Dirichlet fields use the implicit wall zeros; pass ``dirichlet=False``
    for fields with nonzero wall values (one-sided rows instead).
    """
    return replace(f, data=_stencil_first(f.data, f.grid.dy, dirichlet))


def d2y(f: ScalarField) -> ScalarField:
    """Second y-derivative, Dirichlet walls built in."""
    dy2 = f.grid.dy ** 2
    data = f.data
    out = np.empty_like(data)
    out[:, 1:-1] = (data[:, 2:] - 2.0 * data[:, 1:-1] + data[:, :-2]) / dy2
    out[:, 0] = (data[:, 1] - 2.0 * data[:, 0]) / dy2
    out[:, -1] = (data[:, -2] - 2.0 * data[:, -1]) / dy2
    return replace(f, data=out)


def wall_dy_traces(f: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """One-sided second-order traces of df/dy at y=0 and y=1 (Dirichlet f)."""
    d = f.data
    dy = f.grid.dy
    t0 = (4.0 * d[:, 0] - d[:, 1]) / (2.0 * dy)
    t1 = (d[:, -2] - 4.0 * d[:, -1]) / (2.0 * dy)
    return t0, t1


def laplacian_eps(f: ScalarField, eps: float) -> ScalarField:
    """Anisotropic Laplacian eps^2 d2/dx2 + d2/dy2 (eps=0 degenerates to d2/dy2)."""
    if eps == 0.0:
        return d2y(f)
    g = f.to_spec()
    out = g.data * (-(eps ** 2) * f.grid.xi ** 2)[:, None]
    out += d2y(g).data
    return replace(g, data=out)


def integrate_y(f: ScalarField) -> np.ndarray:
    """Composite trapezoid over y in [0, 1] with zero wall values.

    Returns one value per x-sample (or per x-mode in the spectral view).
    """
    return f.grid.dy * f.data.sum(axis=1)


def v_from_u(
    f: ScalarField,
    strict: bool = False,
    tol: float = 1.0e-8,
    return_residual: bool = False,
):
    """Vertical velocity v(x, y) = -int_0^y du/dx dy' by per-mode trapezoid.

    v vanishes at y=0 exactly and at y=1 iff the per-mode compatibility
    int_0^1 u dy = 0 holds.  ``strict`` raises :class:`CompatibilityViolation`
    when the top-wall residual exceeds ``tol`` (absolute, per mode).
    """
    g = ddx(f)  # spectral view
    dy = f.grid.dy
    # cumulative trapezoid with implicit zeros at both walls
    csum = np.cumsum(g.data, axis=1)
    integ = dy * (csum - 0.5 * g.data)
    top = dy * csum[:, -1]  # integral up to y=1
    v = replace(g, data=-integ)
    resid = np.abs(top).max()
    if strict and resid > tol:
        raise CompatibilityViolation(
            f"top-wall residual {resid:.3e} exceeds tolerance {tol:.3e}"
        )
    if return_residual:
        return v, -top
    return v


def divergence(u: ScalarField, v: ScalarField) -> ScalarField:
    return ddx(u) + ddy(v).to_spec()


def dealias(f: ScalarField) -> ScalarField:
    """2/3-rule truncation in x (applied to quadratic/cubic products)."""
    g = f.to_spec()
    out = g.data * f.grid.dealias_keep[:, None]
    return replace(g, data=out)


def multiply(f: ScalarField, g: ScalarField, dealiased: bool = True) -> ScalarField:
    """Pointwise product of two fields, dealiased by default."""
    out = ScalarField.from_phys(f.grid, f.values() * g.values())
    return dealias(out) if dealiased else out


def l2_norm(f: ScalarField) -> float:
    """L2 norm over the strip: exact-in-x Parseval, trapezoid-in-y with zero ends."""
    g = f.to_spec()
    w = f.grid.lx / f.grid.nx ** 2 * f.grid.dy
    return float(np.sqrt(w * np.sum(np.abs(g.data) ** 2)))


def linf_norm(f: ScalarField) -> float:
    return float(np.abs(f.values()).max())
