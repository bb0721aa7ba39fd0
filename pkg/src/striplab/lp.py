"""Horizontal Littlewood-Paley analysis, Besov norms and analytic-band weights.

Dyadic blocks act on the x-spectrum only (the theory is anisotropic: no
vertical decomposition).  The bank is built from the standard mollifier
profile: chi is a smooth cutoff equal to 1 on |r| <= 3/4 and 0 on
|r| >= 4/3, and phi(r) = chi(r/2) - chi(r), supported in [3/4, 8/3].  The
telescoping sum then makes the discrete partition of unity exact:

    chi(2^-j0 |xi|) + sum_{k=j0}^{kmax} phi(2^-k |xi|) = chi(2^-(kmax+1) |xi|) = 1

at every grid frequency once kmax is large enough.  Blocks below j0 are
merged into the low-pass S_j0; the B^s sums give it weight 2^(j0*s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .errors import BandExhausted, InsufficientData, WeightOverflow
from .fields import SPEC, ScalarField, StripGrid, ddx
from .shear import ShearFlow

# ---------------------------------------------------------------------------
# smooth bump profiles


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1 (exp(-1/t) glue)."""
    t = np.asarray(t, dtype=float)
    a = np.zeros_like(t)
    b = np.zeros_like(t)
    pos = t > 0
    a[pos] = np.exp(-1.0 / t[pos])
    neg = t < 1
    b[neg] = np.exp(-1.0 / (1.0 - t[neg]))
    return a / (a + b)


def chi_profile(r) -> np.ndarray:
    """Low-pass cutoff: 1 on |r| <= 3/4, 0 on |r| >= 4/3, smooth between."""
    r = np.abs(np.asarray(r, dtype=float))
    return 1.0 - _smooth_step((r - 0.75) / (4.0 / 3.0 - 0.75))


def phi_profile(r) -> np.ndarray:
    """Band profile chi(r/2) - chi(r); support in 3/4 <= |r| <= 8/3, nonnegative."""
    r = np.asarray(r, dtype=float)
    return chi_profile(r / 2.0) - chi_profile(r)


# ---------------------------------------------------------------------------
# filter bank


@dataclass(frozen=True)
class DyadicFilterBank:
    """Dyadic multipliers sampled at one grid's x-frequencies.

    ``phi_tab[i]`` holds phi(2^-k |xi|) for k = ks[i]; ``chi_tab`` holds the
    low-pass chi(2^-j0 |xi|).  ``sk_tab[i]`` holds the partial-sum multiplier
    chi(2^-(k-1) |xi|) used by the paraproducts.
    """

    grid: StripGrid
    j0: int
    k_max: int
    phi_tab: np.ndarray  # (n_blocks, nx)
    chi_tab: np.ndarray  # (nx,)
    sk_tab: np.ndarray  # (n_blocks, nx)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.j0, self.k_max + 1)

    @property
    def n_blocks(self) -> int:
        return self.k_max - self.j0 + 1

    def partition_deviation(self) -> float:
        total = self.chi_tab + self.phi_tab.sum(axis=0)
        return float(np.abs(total - 1.0).max())


def build_filter_bank(grid: StripGrid) -> DyadicFilterBank:
    """Construct the bank; the discrete partition of unity is exact to ~1e-15."""
    absxi = np.abs(grid.xi)
    xi_min = 2.0 * np.pi / grid.lx
    xi_max = absxi.max()
    # low-pass captures only xi = 0: need 2^-j0 * xi_min >= 4/3
    j0 = math.floor(math.log2(0.75 * xi_min))
    # telescoping closes once 2^-(kmax+1) * xi_max <= 3/4
    k_max = math.ceil(math.log2(xi_max * 4.0 / 3.0)) - 1
    ks = np.arange(j0, k_max + 1)
    phi_tab = np.stack([phi_profile(absxi / 2.0 ** k) for k in ks])
    chi_tab = chi_profile(absxi / 2.0 ** j0)
    sk_tab = np.stack([chi_profile(absxi / 2.0 ** (k - 1)) for k in ks])
    bank = DyadicFilterBank(grid, j0, k_max, phi_tab, chi_tab, sk_tab)
    dev = bank.partition_deviation()
    if dev > 1.0e-13:
        raise AssertionError(f"dyadic partition of unity off by {dev:.3e}")
    return bank


def dyadic_block(f: ScalarField, k: int, bank: DyadicFilterBank) -> ScalarField:
    """Band-pass f through the block of index k (Fourier multiplier in x)."""
    if not bank.j0 <= k <= bank.k_max:
        raise ValueError(f"block index {k} outside bank range [{bank.j0}, {bank.k_max}]")
    g = f.to_spec()
    return dc_replace(g, data=g.data * bank.phi_tab[k - bank.j0][:, None])


def lowpass_block(f: ScalarField, bank: DyadicFilterBank) -> ScalarField:
    g = f.to_spec()
    return dc_replace(g, data=g.data * bank.chi_tab[:, None])


def _spec_l2(grid: StripGrid, spec_data: np.ndarray) -> float:
    w = grid.lx / grid.nx ** 2 * grid.dy
    return math.sqrt(w * float(np.sum(np.abs(spec_data) ** 2)))


def block_l2_norms(fields, bank: DyadicFilterBank) -> np.ndarray:
    """Per-block L2 norms of a field (or tuple of fields, combined in L2).

    Index 0 is the low-pass block; the rest follow bank.ks.  Computed
    spectrally (exact-in-x Parseval, trapezoid-in-y).
    """
    if isinstance(fields, ScalarField):
        fields = (fields,)
    grid = bank.grid
    w = grid.lx / grid.nx ** 2 * grid.dy
    out = np.zeros(bank.n_blocks + 1)
    for f in fields:
        spec = f.spectrum()
        e = w * np.abs(spec) ** 2  # (nx, ny) energy density
        e_mode = e.sum(axis=1)  # per-mode energy
        out[0] += float(np.sum(bank.chi_tab ** 2 * e_mode))
        out[1:] += (bank.phi_tab ** 2 @ e_mode)
    return np.sqrt(out)


def besov_norm(fields, s: float, bank: DyadicFilterBank) -> float:
    """B^s norm: sum_k 2^(ks) ||Delta_k f||_L2, low-pass assigned index j0.

    ``fields`` may be one ScalarField or a sequence (pair norms combine the
    components in L2 per block before the dyadic sum).
    """
    norms = block_l2_norms(fields, bank)
    weights = np.concatenate(([2.0 ** (bank.j0 * s)], 2.0 ** (s * bank.ks)))
    return float(np.dot(weights, norms))


# ---------------------------------------------------------------------------
# analytic-band weights


@dataclass(frozen=True)
class BandState:
    """Evolving analytic band: weight exp((a - rate_coeff*value)|xi|).

    ``kind`` selects the ODE the band obeys: "eta" (anisotropic run, needs
    delta), "theta" (hydrostatic run) or "zeta" (convergence run, driven by
    solver norm samples).
    """

    a: float
    rate_coeff: float
    kind: str
    value: float = 0.0
    t: float = 0.0
    delta: float = 0.0
    decay_rate: float = np.pi ** 2 / 2.0

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("band half-width a must be positive")
        if self.kind not in ("eta", "theta", "zeta"):
            raise ValueError(f"unknown band kind {self.kind!r}")

    @property
    def width(self) -> float:
        return self.a - self.rate_coeff * self.value


def apply_band_weight(
    f: ScalarField,
    band: BandState,
    invert: bool = False,
    blowup_threshold: float | None = None,
) -> ScalarField:
    """Multiply each x-mode by exp(width*|xi|) (or its inverse)."""
    width = band.width
    if width <= 0.0:
        raise BandExhausted(
            f"analytic band exhausted at t={band.t:.4g} (width {width:.3e})"
        )
    g = f.to_spec()
    w = np.exp((-width if invert else width) * np.abs(f.grid.xi))
    out = g.data * w[:, None]
    if blowup_threshold is not None and (
        not np.all(np.isfinite(out)) or np.abs(out).max() / f.grid.nx > blowup_threshold
    ):
        raise WeightOverflow("band-weighted amplitude exceeded the blowup threshold")
    return dc_replace(g, data=out)


def _band_integrand(band: BandState, flow: ShearFlow):
    if band.kind == "eta":
        def rate(t):
            acc = band.delta * math.exp(-band.decay_rate * t)
            for m, c in flow.coeffs:
                acc += abs(c) * math.exp(-((m * math.pi) ** 2) * t)
            return acc
    elif band.kind == "theta":
        def rate(t):
            return sum(
                m * abs(c) * math.exp(-((m * math.pi) ** 2) * t) for m, c in flow.coeffs
            )
    else:
        raise ValueError("zeta bands advance from norm samples, not a closed form")
    return rate


def step_band_ode(
    band: BandState,
    dt: float,
    flow: ShearFlow | None = None,
    sample_now: float | None = None,
    sample_next: float | None = None,
) -> BandState:
    """Advance the band value over one step.

    eta/theta integrate their closed-form rates with classical RK4; zeta uses
    the trapezoid of solver-supplied samples (rate at t and t+dt).  The shear
    contribution to zeta is folded in here so callers pass norm samples only.
    """
    if band.kind in ("eta", "theta"):
        if flow is None:
            raise ValueError("eta/theta band steps need the shear flow")
        rate = _band_integrand(band, flow)
        t = band.t
        k1 = rate(t)
        k2 = rate(t + dt / 2.0)
        k4 = rate(t + dt)
        incr = dt / 6.0 * (k1 + 4.0 * k2 + k4)  # RK4 on dval/dt = rate(t)
    else:
        if sample_now is None or sample_next is None:
            raise ValueError("zeta band steps need rate samples at both endpoints")
        shear_now = shear_next = 0.0
        if flow is not None:
            shear_now = sum(
                m * abs(c) * math.exp(-((m * math.pi) ** 2) * band.t)
                for m, c in flow.coeffs
            )
            shear_next = sum(
                m * abs(c) * math.exp(-((m * math.pi) ** 2) * (band.t + dt))
                for m, c in flow.coeffs
            )
        incr = dt / 2.0 * ((sample_now + shear_now) + (sample_next + shear_next))
    if incr < 0:
        raise ValueError("band value must be nondecreasing")
    return dc_replace(band, value=band.value + incr, t=band.t + dt)


def eta_bound(band: BandState, flow: ShearFlow) -> float:
    """Ceiling delta/R + sum_m cbar/m^2 the eta band must stay below."""
    cbar = flow.sum_abs
    tail = sum(cbar / (m * m) for m, _ in flow.coeffs) if flow.coeffs else 0.0
    return band.delta / band.decay_rate + tail


# ---------------------------------------------------------------------------
# Chemin-Lerner accumulators


class CheminLernerAccumulator:
    """Time-integrated per-block norms, summed across blocks afterward.

    Accumulates int_0^T f(t) ||Delta_k a(t)||^p dt per block with
    left-endpoint quadrature (running max for p = inf), then
    finalize() returns sum_k 2^(ks) (integral)^(1/p).
    """

    def __init__(self, s: float, p, bank: DyadicFilterBank, weight=None):
        if p not in (1, 2, np.inf):
            raise ValueError("p must be 1, 2 or inf")
        self.s = s
        self.p = p
        self.bank = bank
        self.weight = weight if weight is not None else (lambda t: 1.0)
        self.per_block = np.zeros(bank.n_blocks + 1)

    def add(self, fields, t: float, dt: float) -> "CheminLernerAccumulator":
        norms = block_l2_norms(fields, self.bank)
        if self.p is np.inf:
            np.maximum(self.per_block, norms, out=self.per_block)
        else:
            self.per_block += self.weight(t) * norms ** self.p * dt
        return self

    def finalize(self) -> float:
        vals = self.per_block if self.p is np.inf else self.per_block ** (1.0 / self.p)
        weights = np.concatenate(
            ([2.0 ** (self.bank.j0 * self.s)], 2.0 ** (self.s * self.bank.ks))
        )
        return float(np.dot(weights, vals))


def exp_decay_weight(rate: float):
    """Time weight exp(2*rate*t) for the weighted Chemin-Lerner norms."""
    return lambda t: math.exp(2.0 * rate * t)


# ---------------------------------------------------------------------------
# Bony decomposition


def bony_decompose(f: ScalarField, g: ScalarField, bank: DyadicFilterBank):
    """Split fg into (T_f g, T_g f, R); the parts sum to fg exactly on the grid.

    The paraproducts pair the partial sum S_{k-1} with block k; the remainder
    collects |k - k'| <= 1 pairs over the extended block list in which the
    low-pass S_j0 acts as the block below j0.  Dealiasing is NOT applied: the
    identity is algebraic, per grid point.
    """
    fs, gs = f.spectrum(), g.spectrum()
    grid = bank.grid

    def phys(spec_data):
        return np.fft.ifft(spec_data, axis=0).real

    # extended block list: index 0 = low-pass, then bank blocks
    fb = [phys(fs * bank.chi_tab[:, None])]
    gb = [phys(gs * bank.chi_tab[:, None])]
    for i in range(bank.n_blocks):
        mult = bank.phi_tab[i][:, None]
        fb.append(phys(fs * mult))
        gb.append(phys(gs * mult))

    tf_g = np.zeros((grid.nx, grid.ny))
    tg_f = np.zeros((grid.nx, grid.ny))
    for i in range(bank.n_blocks):
        sk_f = phys(fs * bank.sk_tab[i][:, None])
        sk_g = phys(gs * bank.sk_tab[i][:, None])
        tf_g += sk_f * gb[i + 1]
        tg_f += sk_g * fb[i + 1]

    nb = bank.n_blocks + 1
    rem = np.zeros((grid.nx, grid.ny))
    for i in range(nb):
        close = sum(gb[j] for j in range(max(0, i - 1), min(nb, i + 2)))
        rem += fb[i] * close

    mk = lambda d: ScalarField.from_phys(grid, d)
    return mk(tf_g), mk(tg_f), mk(rem)


# ---------------------------------------------------------------------------
# Bernstein ratio check


def bernstein_check(f: ScalarField, bank: DyadicFilterBank, occupied_tol: float = 1e-13):
    """Per occupied block: ||dx Delta_k f|| / (2^k ||Delta_k f||) with bounds.

    The ratio is an L2 average of |xi|/2^k over the block's support, so it
    must lie in [3/4, 8/3] (times 2*pi/lx if the grid rescales frequencies).
    Returns a list of (k, ratio, lo, hi, ok) tuples.
    """
    lo, hi = 0.75, 8.0 / 3.0
    spec = f.spectrum()
    grid = bank.grid
    w = grid.lx / grid.nx ** 2 * grid.dy
    e_mode = w * (np.abs(spec) ** 2).sum(axis=1)
    scale = np.abs(grid.xi)
    total = math.sqrt(float(e_mode.sum()))
    report = []
    for i, k in enumerate(bank.ks):
        blk = bank.phi_tab[i] ** 2 * e_mode
        n2 = float(blk.sum())
        if math.sqrt(n2) <= occupied_tol * max(total, 1e-300):
            continue
        dx2 = float((scale ** 2 * blk).sum())
        ratio = math.sqrt(dx2 / n2) / 2.0 ** k
        report.append((int(k), ratio, lo, hi, lo <= ratio <= hi))
    return report


def analyticity_radius(f: ScalarField, floor: float = 1e-14) -> float:
    """Crude decay-rate estimate of the x-spectrum (diagnostic only)."""
    spec = np.abs(f.spectrum()).max(axis=1)
    xi = np.abs(f.grid.xi)
    keep = (spec > floor * max(spec.max(), 1e-300)) & (xi > 0)
    if keep.sum() < 3:
        raise InsufficientData("spectrum too narrow to estimate a radius")
    slope = np.polyfit(xi[keep], np.log(spec[keep]), 1)[0]
    return float(max(-slope, 0.0))
