"""Sphere-valued initial data generators.

All generators build u0 = cos(theta) p + sin(theta) q with orthonormal
p, q in R^L, so |u0| = 1 identically, and a velocity proportional to the
tangent vector -sin(theta) p + cos(theta) q.  The amplitude of theta is the
smallness parameter delta; bump profiles are compactly supported inside the
central half of the box.
"""

import numpy as np

from .grid import Field, Grid
from .propagator import State

KINDS = ("geodesic-bump", "multi-bump", "plane-mode")


def smooth_bump(grid: Grid, center, width):
    """C-infinity bump exp(1 - 1/(1 - r^2)) of the scaled radius, support r < 1."""
    coords = grid.coords()
    rsq = np.zeros(grid.shape)
    for xi, ci in zip(coords, center):
        # nearest periodic image
        di = np.mod(xi - ci + grid.box / 2.0, grid.box) - grid.box / 2.0
        rsq += (di / width) ** 2
    out = np.zeros(grid.shape)
    inside = rsq < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - rsq[inside]))
    return out


def _frame(L, rng):
    """Orthonormal pair (p, q) in R^L, deterministic in the rng."""
    p = rng.standard_normal(L)
    p /= np.linalg.norm(p)
    q = rng.standard_normal(L)
    q -= p * (p @ q)
    q /= np.linalg.norm(q)
    return p, q


def generate_initial_data(kind, grid: Grid, delta, seed=0, ncomp=3,
                          velocity_scale=1.0) -> State:
    """Build a sphere-valued state of amplitude delta.

    kinds: 'geodesic-bump' (single bump profile), 'multi-bump' (three
    bumps with rng-chosen centers and signs), 'plane-mode' (band-limited
    trigonometric profile, not compactly supported).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown initial data kind {kind!r}")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    rng = np.random.default_rng(seed)
    p, q = _frame(ncomp, rng)
    half = grid.box / 2.0
    if kind == "geodesic-bump":
        theta = delta * smooth_bump(grid, (half,) * grid.d, grid.box / 4.0)
        prof2 = smooth_bump(grid, (half,) * grid.d, grid.box / 5.0)
    elif kind == "multi-bump":
        theta = np.zeros(grid.shape)
        for _ in range(3):
            center = half + (rng.uniform(-0.12, 0.12, grid.d) * grid.box)
            width = grid.box * rng.uniform(0.08, 0.12)
            theta += rng.choice([-1.0, 1.0]) * smooth_bump(grid, center, width)
        theta *= delta
        prof2 = smooth_bump(grid, (half,) * grid.d, grid.box / 5.0)
    else:  # plane-mode
        coords = grid.coords()
        ks = rng.integers(1, 4, grid.d)
        phase = sum(k * x for k, x in zip(ks, coords)) * (2.0 * np.pi / grid.box)
        theta = delta * np.cos(phase)
        prof2 = np.cos(phase + rng.uniform(0, 2 * np.pi))
    u0 = np.cos(theta)[None] * p.reshape((-1,) + (1,) * grid.d) \
        + np.sin(theta)[None] * q.reshape((-1,) + (1,) * grid.d)
    tangent = -np.sin(theta)[None] * p.reshape((-1,) + (1,) * grid.d) \
        + np.cos(theta)[None] * q.reshape((-1,) + (1,) * grid.d)
    u1 = delta * velocity_scale * prof2[None] * tangent
    return State(Field(grid, u0), Field(grid, u1), 0.0)
