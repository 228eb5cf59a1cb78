"""Dyadic, sector and modulation Fourier multipliers.

The dyadic cutoff phi is built from a C-infinity bump psi supported in
(1/2, 2) through phi(s) = psi(s) / sum_j psi(2^-j s), which makes the
partition identity sum_j phi(2^-j s) = 1 (s > 0) hold by construction.
"""

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .grid import (Field, Grid, SpectralField, coeff_arrays_forward,
                   coeff_arrays_inverse, transform_forward, transform_inverse)


def _bump(t):
    """Smooth bump supported in (-1, 1), equal to 1 at t = 0."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out


def _psi(s):
    """Bump in dyadic coordinates: supported in (1/2, 2), psi(1) = exp(0) = 1."""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = _bump(np.log2(s[pos]))
    return out


def phi(s):
    """Littlewood-Paley cutoff: supp in (1/2,2), sum_j phi(2^-j s) = 1 for s>0."""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    pos = s > 0
    sp = s[pos]
    num = _psi(sp)
    j = np.floor(np.log2(sp))
    den = np.zeros_like(sp)
    for off in (-1.0, 0.0, 1.0):
        den += _psi(sp * 2.0 ** (-(j + off)))
    out[pos] = num / den
    return out


@dataclass(frozen=True)
class DyadicIndex:
    """Dyadic scale lam = 2**exponent."""

    exponent: int

    def __post_init__(self):
        if abs(self.exponent) > 30:
            raise ValueError("dyadic exponent out of range")

    @property
    def value(self):
        return 2.0 ** self.exponent


def shell_range(grid):
    """Dyadic exponents j whose shell (2^(j-1), 2^(j+1)) meets the grid lattice."""
    jmin = int(np.floor(np.log2(grid.kmin))) - 1
    jmax = int(np.ceil(np.log2(grid.kmax))) + 1
    return range(jmin, jmax + 1)


def littlewood_paley_multiplier(grid, lam):
    kk = np.sqrt(grid.ksq())
    return phi(kk / lam)


def littlewood_paley_project(f: Field, index: DyadicIndex) -> Field:
    F = transform_forward(f)
    mult = littlewood_paley_multiplier(f.grid, index.value)
    return transform_inverse(SpectralField(f.grid, mult * F.coeffs))


# ---------------------------------------------------------------------------
# sector partition


@dataclass(frozen=True)
class Direction:
    """Unit vector belonging to the fixed direction set of its dimension."""

    e: tuple

    def __post_init__(self):
        v = np.asarray(self.e, dtype=np.float64)
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector")

    @property
    def vector(self):
        return np.asarray(self.e, dtype=np.float64)

    def __neg__(self):
        return Direction(tuple(-x for x in self.e))


def direction_set(d):
    """Finite covering set of unit directions, closed under negation.

    d=1: signs; d=2: 8 directions at 45 degrees; d=3: the 26 normalized
    nonzero sign-lattice directions.  Every unit vector lies strictly within
    45 degrees of some member, so the angular bumps below cover S^(d-1).
    """
    if d == 1:
        vecs = [(1.0,), (-1.0,)]
    elif d == 2:
        vecs = []
        for m in range(8):
            a = np.pi * m / 4.0
            vecs.append((np.cos(a), np.sin(a)))
    elif d == 3:
        vecs = []
        for sx in (-1, 0, 1):
            for sy in (-1, 0, 1):
                for sz in (-1, 0, 1):
                    if sx == sy == sz == 0:
                        continue
                    v = np.array([sx, sy, sz], dtype=np.float64)
                    vecs.append(tuple(v / np.linalg.norm(v)))
    else:
        raise ValueError("sector partition implemented for d <= 3")
    return [Direction(tuple(float(x) for x in v)) for v in vecs]


def sector_weights(grid, directions=None):
    """Normalized angular bumps h_e on the grid lattice, one per direction.

    Each weight is supported where the angle to e is < pi/4 (i.e. inside
    xi.e >= |xi|/sqrt(2)) and the weights sum to 1 away from xi = 0.
    """
    if directions is None:
        directions = direction_set(grid.d)
    ks = grid.wavevectors()
    kk = np.sqrt(grid.ksq())
    nonzero = kk > 0
    raw = []
    for dirn in directions:
        ev = dirn.vector
        dot = np.zeros(grid.shape)
        for ki, ei in zip(ks, ev):
            dot += ki * ei
        w = np.zeros(grid.shape)
        if grid.d == 1:
            w[nonzero] = (dot[nonzero] > 0).astype(np.float64)
        else:
            cosang = np.zeros(grid.shape)
            cosang[nonzero] = np.clip(dot[nonzero] / kk[nonzero], -1.0, 1.0)
            ang = np.arccos(cosang)
            w[nonzero] = _bump(ang[nonzero] / (np.pi / 4.0))
        raw.append(w)
    total = np.sum(raw, axis=0)
    weights = []
    for w in raw:
        h = np.zeros(grid.shape)
        h[nonzero] = w[nonzero] / total[nonzero]
        weights.append(h)
    return {dirn: h for dirn, h in zip(directions, weights)}


def sector_project(f: Field, e: Direction, weights=None) -> Field:
    if weights is None:
        weights = sector_weights(f.grid)
    if e not in weights:
        raise ValueError("direction is not a member of the partition set")
    F = transform_forward(f)
    return transform_inverse(SpectralField(f.grid, weights[e] * F.coeffs))


# ---------------------------------------------------------------------------
# modulation machinery


def modulation_weight(tau, xi_mag):
    """Distance-to-characteristic weight |tau^2-|xi|^4| / (tau^2+|xi|^4)^(1/2)."""
    tau = np.asarray(tau, dtype=np.float64)
    xi_mag = np.asarray(xi_mag, dtype=np.float64)
    denom_sq = tau ** 2 + xi_mag ** 4
    if np.any(denom_sq == 0.0):
        raise ValueError("modulation weight undefined at (tau, xi) = (0, 0)")
    return np.abs(tau ** 2 - xi_mag ** 4) / np.sqrt(denom_sq)


@dataclass
class SpaceTimeBlock:
    """Uniformly sampled trajectory of an L-component field over a window.

    snapshots has shape (n_times, L, *grid.shape).  `window` names the taper
    applied before any temporal transform ('hann' or 'none').
    """

    grid: Grid
    t0: float
    dt: float
    snapshots: np.ndarray
    window: str = "hann"

    def __post_init__(self):
        self.snapshots = np.asarray(self.snapshots, dtype=np.float64)
        if self.snapshots.ndim != 2 + self.grid.d:
            raise ValueError("snapshots must have shape (n_times, L, *grid.shape)")
        if self.n_times < 2:
            raise ValueError("blocks need at least 2 snapshots")
        if self.dt <= 0:
            raise ValueError("time spacing must be positive")
        if self.window not in ("hann", "none"):
            raise ValueError(f"unknown window {self.window!r}")

    @property
    def n_times(self):
        return self.snapshots.shape[0]

    @property
    def ncomp(self):
        return self.snapshots.shape[1]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_times)

    def taper_weights(self):
        if self.window == "none":
            return np.ones(self.n_times)
        return np.hanning(self.n_times)

    def tapered(self):
        """Snapshots with the window applied along time."""
        w = self.taper_weights()
        shape = (self.n_times,) + (1,) * (self.snapshots.ndim - 1)
        return self.snapshots * w.reshape(shape)

    def tau_freqs(self):
        return 2.0 * np.pi * sfft.fftfreq(self.n_times, self.dt)

    def field_at(self, i):
        return Field(self.grid, self.snapshots[i])

    def l2norm_tapered(self):
        data = self.tapered()
        return np.sqrt(np.sum(data ** 2) * self.grid.cell_volume * self.dt)


def block_transform(block: SpaceTimeBlock):
    """Space-time Fourier coefficients of the tapered block.

    Returns (coeffs, tau, xi_mag): coeffs has shape (n_times, L, *grid.shape),
    tau broadcasts over axis 0, xi_mag over the spatial axes.
    """
    if block.n_times < 8:
        raise ValueError("temporal spectrum needs at least 8 snapshots")
    data = block.tapered()
    coeffs = coeff_arrays_forward(data, block.grid)
    coeffs = sfft.fft(coeffs, axis=0) / block.n_times
    tau = block.tau_freqs().reshape((-1,) + (1,) * (1 + block.grid.d))
    xi_mag = np.sqrt(block.grid.ksq())[None]
    return coeffs, tau, xi_mag


def block_inverse(block: SpaceTimeBlock, coeffs):
    data = sfft.ifft(coeffs * block.n_times, axis=0)
    data = coeff_arrays_inverse(data, block.grid, real=False)
    return SpaceTimeBlock(block.grid, block.t0, block.dt, data.real, window="none")


def block_mass(coeffs, grid, dt, n_times):
    """Parseval L2(t,x)^2 mass of space-time coefficients."""
    return np.sum(np.abs(coeffs) ** 2) * grid.box ** grid.d * dt * n_times


def block_axes(block: SpaceTimeBlock):
    """Broadcastable (tau, |xi|) axes for space-time multipliers."""
    tau = block.tau_freqs().reshape((-1,) + (1,) * (1 + block.grid.d))
    xi_mag = np.sqrt(block.grid.ksq())[None]
    return tau, xi_mag


def modulation_values(block: SpaceTimeBlock):
    """w(tau, xi) on the discrete lattice, set to 0 at the (0, 0) corner."""
    tau, xi_mag = block_axes(block)
    denom_sq = tau ** 2 + xi_mag ** 4
    w = np.zeros(np.broadcast_shapes(tau.shape, xi_mag.shape))
    nz = denom_sq > 0
    num = np.abs(tau ** 2 - xi_mag ** 4)
    w[nz] = (num / np.sqrt(np.where(nz, denom_sq, 1.0)))[nz]
    return w


def resolvable_mu_range(block: SpaceTimeBlock):
    """Dyadic exponents of modulation shells resolvable on the block.

    The floor is the temporal frequency resolution 2*pi/(n_times*dt): shells
    finer than one tau bin cannot be distinguished from the characteristic.
    """
    w = modulation_values(block)
    wpos = w[w > 0]
    if wpos.size == 0:
        return range(0, 0)
    dtau = 2.0 * np.pi / (block.n_times * block.dt)
    jmin = int(np.floor(np.log2(dtau)))
    jmax = int(np.ceil(np.log2(wpos.max()))) + 1
    if jmax < jmin:
        jmax = jmin
    return range(jmin, jmax + 1)


def chi_cutoff(tau, xi_mag, lo=0.01, hi=0.1):
    """Smooth near-characteristic cutoff: 1 inside ratio<lo, 0 outside ratio>hi."""
    tau = np.asarray(tau, dtype=np.float64)
    xi_mag = np.asarray(xi_mag, dtype=np.float64)
    denom = tau ** 2 + xi_mag ** 4
    ratio = np.ones(np.broadcast_shapes(tau.shape, xi_mag.shape))
    nz = denom > 0
    ratio[nz] = (np.abs(tau ** 2 - xi_mag ** 4) / np.where(nz, denom, 1.0))[nz]
    t = (ratio - lo) / (hi - lo)
    t = np.clip(t, 0.0, 1.0)
    # C-infinity step from the standard exp(-1/t) mollifier pair
    def g(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out
    gt, gmt = g(t), g(1.0 - t)
    return gmt / (gt + gmt)


def spacetime_project(block: SpaceTimeBlock, which, value=None, chi_lo=0.01,
                      chi_hi=0.1) -> SpaceTimeBlock:
    """Apply a space-time multiplier to the tapered block.

    which: 'frequency' (needs dyadic value lam), 'modulation' (needs mu),
    'nearcone' (P0) or 'farcone' (1 - P0).
    """
    coeffs, tau, xi_mag = block_transform(block)
    if which == "frequency":
        lam = float(value)
        _check_resolvable(block, lam, kind="frequency")
        mult = phi((tau ** 2 + xi_mag ** 4) ** 0.25 / lam)
    elif which == "modulation":
        mu = float(value)
        _check_resolvable(block, mu, kind="modulation")
        w = modulation_values(block)
        mult = phi(w / mu)
    elif which == "nearcone":
        mult = chi_cutoff(tau, xi_mag, chi_lo, chi_hi)
    elif which == "farcone":
        mult = 1.0 - chi_cutoff(tau, xi_mag, chi_lo, chi_hi)
    else:
        raise ValueError(f"unknown projection {which!r}")
    return block_inverse(block, coeffs * mult)


def _check_resolvable(block, value, kind):
    tau_nyq = np.pi / block.dt
    k_nyq = block.grid.kmax
    top = max((tau_nyq ** 2 + k_nyq ** 4) ** 0.25, 1.0)
    tau_res = 2.0 * np.pi / (block.dt * block.n_times)
    if kind == "frequency":
        lo, hi = 0.25 * min(tau_res ** 0.5, block.grid.kmin), 2.0 * top
    else:
        lo, hi = 0.25 * tau_res, 2.0 * max(tau_nyq, k_nyq ** 2)
    if not lo <= value <= hi:
        raise ValueError(
            f"{kind} scale {value:g} outside resolvable range [{lo:g}, {hi:g}]"
        )
