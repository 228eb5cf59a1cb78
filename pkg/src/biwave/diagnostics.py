"""Norms as computable observables.

Homogeneous Besov/Sobolev norms over resolvable dyadic shells, modulation
(X^{b,p}) norms on space-time blocks, lateral L^p_e L^q norms in a
lattice-compatible frame, and the Strichartz admissibility rule.

Infinite dyadic sums are truncated to the shells the grid resolves; every
value carries its truncation range so callers can judge the surrogate.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Field, Grid, coeff_arrays_forward
from .multipliers import (Direction, SpaceTimeBlock, littlewood_paley_multiplier,
                          modulation_values, phi, resolvable_mu_range,
                          shell_range)


@dataclass
class NormSpec:
    """Parameters selecting one norm from the implemented families."""

    family: str
    s: float = 0.0
    p: float = 2.0
    q: float = 2.0
    b: float = 0.5
    lam: float = 0.0
    e: tuple = ()

    _FAMILIES = ("besov", "sobolev", "xbp", "lateral", "mixed-strichartz")

    def __post_init__(self):
        if self.family not in self._FAMILIES:
            raise ValueError(f"unknown norm family {self.family!r}")
        for name in ("p", "q"):
            v = getattr(self, name)
            if v < 1.0:
                raise ValueError(f"{name} must lie in [1, inf], got {v}")
        if self.family == "xbp" and self.b > 1.0:
            raise ValueError("xbp norms require b <= 1")


@dataclass
class NormValue:
    """A norm value plus the dyadic truncation range it was computed over."""

    value: float
    trunc_low: float = math.nan
    trunc_high: float = math.nan
    outside_fraction: float = 0.0
    flag: str = ""

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# spatial norms


def besov_norm(f: Field, s, p) -> NormValue:
    """Homogeneous Besov norm (sum_lam lam^{sp} ||P_lam f||_2^p)^{1/p}.

    The zero mode is ignored (homogeneous norm); shells run over the
    resolvable dyadic range of the grid.
    """
    grid = f.grid
    coeffs = coeff_arrays_forward(f.values, grid)
    shells = shell_range(grid)
    vol = grid.box ** grid.d
    pieces = []
    for j in shells:
        lam = 2.0 ** j
        mult = littlewood_paley_multiplier(grid, lam)
        piece = math.sqrt(vol * np.sum(mult ** 2 * np.abs(coeffs) ** 2))
        pieces.append((lam, piece))
    if p == math.inf:
        val = max((lam ** s * pc for lam, pc in pieces), default=0.0)
    else:
        val = sum(lam ** (s * p) * pc ** p for lam, pc in pieces) ** (1.0 / p)
    return NormValue(val, 2.0 ** shells.start, 2.0 ** (shells.stop - 1))


def sobolev_norm(f: Field, s) -> NormValue:
    """Homogeneous Sobolev norm (sum |k|^{2s} |F_k|^2 box^d)^{1/2}, k != 0."""
    grid = f.grid
    coeffs = coeff_arrays_forward(f.values, grid)
    ksq = grid.ksq()
    weight = np.where(ksq > 0, ksq, 1.0) ** s
    weight = np.where(ksq > 0, weight, 0.0)
    val = math.sqrt(grid.box ** grid.d * np.sum(weight * np.abs(coeffs) ** 2))
    return NormValue(val, grid.kmin, grid.kmax)


# ---------------------------------------------------------------------------
# modulation norms


def xbp_norm(block: SpaceTimeBlock, b, p, chi_skip=True) -> NormValue:
    """X^{b,p} modulation norm of a (shell-restricted, tapered) block.

    Computes (sum_mu mu^{pb} ||Q_mu f||_{L2}^p)^{1/p} over the resolvable
    dyadic range of the modulation weight w(tau, xi).  Mass at modulations
    outside that range is reported; above 20% the value is flagged
    unreliable.
    """
    coeffs, tau, xi_mag = _tapered_transform(block)
    w = modulation_values_from(tau, xi_mag)[:, 0]
    shells = resolvable_mu_range(block)
    if len(shells) == 0:
        return NormValue(0.0)
    jlo, jhi = shells.start, shells.stop - 1
    dens = np.sum(np.abs(coeffs) ** 2, axis=1)
    total = np.sum(dens)
    if total == 0.0:
        return NormValue(0.0, 2.0 ** jlo, 2.0 ** jhi)
    covered = np.zeros_like(dens)
    pieces = []
    vol = block.grid.box ** block.grid.d * block.n_times * block.dt
    for mu, mult in _modulation_multipliers(w, shells):
        mass = np.sum(mult ** 2 * dens)
        covered += mult
        pieces.append((mu, math.sqrt(vol * mass)))
    outside = float(np.sum((1.0 - np.clip(covered, 0.0, 1.0)) * dens) / total)
    if p == math.inf:
        val = max(mu ** b * pc for mu, pc in pieces)
    else:
        val = sum(mu ** (b * p) * pc ** p for mu, pc in pieces) ** (1.0 / p)
    flag = "unreliable" if outside > 0.20 else ""
    return NormValue(val, 2.0 ** jlo, 2.0 ** jhi, outside, flag)


def modulation_profile(block: SpaceTimeBlock):
    """Mass per resolvable dyadic modulation shell, normalized to sum <= 1.

    Returns (mu values, fractions) for concentration diagnostics.
    """
    coeffs, tau, xi_mag = _tapered_transform(block)
    w = modulation_values_from(tau, xi_mag)[:, 0]
    shells = resolvable_mu_range(block)
    dens = np.sum(np.abs(coeffs) ** 2, axis=1)
    total = np.sum(dens)
    mus, fracs = [], []
    for mu, mult in _modulation_multipliers(w, shells):
        mus.append(mu)
        fracs.append(float(np.sum(mult * dens) / total) if total else 0.0)
    return np.array(mus), np.array(fracs)


def _modulation_multipliers(w, shells):
    """Dyadic modulation multipliers; the lowest shell becomes the low-pass
    complement 1 - sum of the higher shells, so mass on or near the
    characteristic (w below the tau resolution) is counted there.  The
    multipliers then sum to 1 pointwise over the resolvable range.
    """
    mults = [(2.0 ** j, phi(w / 2.0 ** j)) for j in shells]
    if mults:
        mu0 = mults[0][0]
        higher = sum(m for _, m in mults[1:])
        low = np.clip(1.0 - higher, 0.0, 1.0)
        mults[0] = (mu0, low)
    return mults


def modulation_values_from(tau, xi_mag):
    denom = np.sqrt(tau ** 2 + xi_mag ** 4)
    safe = np.where(denom > 0, denom, 1.0)
    w = np.abs(tau ** 2 - xi_mag ** 4) / safe
    return np.where(denom > 0, w, 0.0)


def _tapered_transform(block):
    from .multipliers import block_transform

    return block_transform(block)


# ---------------------------------------------------------------------------
# lateral norms


def lateral_norm(block: SpaceTimeBlock, e: Direction, p, q) -> NormValue:
    """Lateral norm: outer L^p along direction e, inner L^q in (t, e-perp).

    Directions must be axis-aligned or face diagonals of the lattice.  Both
    cases use exact iterated quadrature: the lattice partitions into the
    hyperplanes perpendicular to such directions, so no resampling error
    enters.  The quadrature weights make the p = q case collapse to the
    plain space-time L^p norm exactly (Fubini).
    """
    grid = block.grid
    data = block.snapshots  # (nt, L, *shape)
    axis = _direction_axis(e, grid.d)
    if axis is not None:
        frame = np.moveaxis(data, 2 + axis, 0)  # (n_e, nt, L, rest...)
        lateral_step = grid.dx
        inner_cell = block.dt * grid.dx ** (grid.d - 1)
        flat = np.ascontiguousarray(frame).reshape(frame.shape[0], -1)
    else:
        flat = _diagonal_lines(data, e, grid)
        # adjacent diagonal hyperplanes sit dx/sqrt(2) apart; points within a
        # diagonal line are dx*sqrt(2) apart
        lateral_step = grid.dx / math.sqrt(2.0)
        inner_cell = block.dt * math.sqrt(2.0) * grid.dx ** (grid.d - 1)
    if q == math.inf:
        inner = np.max(np.abs(flat), axis=1)
    else:
        inner = (inner_cell * np.sum(np.abs(flat) ** q, axis=1)) ** (1.0 / q)
    if p == math.inf:
        val = float(np.max(inner))
    else:
        val = float((lateral_step * np.sum(inner ** p)) ** (1.0 / p))
    return NormValue(val)


def _direction_axis(e, d):
    vec = np.asarray(e.e)
    if len(vec) != d:
        raise ValueError("direction dimension does not match the grid")
    hits = np.nonzero(np.abs(np.abs(vec) - 1.0) < 1e-12)[0]
    if len(hits) == 1 and np.sum(np.abs(vec) > 1e-12) == 1:
        return int(hits[0])
    return None


def _diagonal_lines(data, e, grid):
    """Group lattice points by the diagonal hyperplane they lie on.

    For a face diagonal e mixing axes i and j with signs (si, sj), the
    hyperplane through a point is labeled by (si*a_i + sj*a_j) mod n.
    Returns an (n, everything-else) array, first axis = lateral coordinate.
    """
    vec = np.asarray(e.e)
    nz = np.abs(vec) > 1e-12
    if np.sum(nz) != 2 or not np.allclose(np.abs(vec[nz]), 1.0 / math.sqrt(2)):
        raise ValueError(f"direction {tuple(vec)} is not lattice-compatible")
    i, j = (int(k) for k in np.nonzero(nz)[0])
    si = 1 if vec[i] > 0 else -1
    sj = 1 if vec[j] > 0 else -1
    n = grid.n
    grids = np.meshgrid(*[np.arange(n)] * grid.d, indexing="ij")
    label = np.mod(si * grids[i] + sj * grids[j], n)
    nt, L = data.shape[0], data.shape[1]
    flat = data.reshape(nt, L, -1)
    order = np.argsort(label.ravel(), kind="stable")
    sorted_pts = flat[:, :, order]          # (nt, L, npts) grouped by label
    per_line = label.size // n
    lines = sorted_pts.reshape(nt, L, n, per_line)
    return np.moveaxis(lines, 2, 0).reshape(n, -1)


def admissible(p, q, d) -> bool:
    """Strichartz admissibility: 2/p + d/q <= d/2, excluding (2, inf) at d=2."""
    if p < 1 or q < 1:
        raise ValueError("exponents must lie in [1, inf]")
    if d == 2 and p == 2 and q == math.inf:
        return False
    lhs = 2.0 / p + (0.0 if q == math.inf else d / q)
    return lhs <= d / 2.0 + 1e-14
