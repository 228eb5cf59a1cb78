"""Spectral differentiation on periodic grids."""

import numpy as np

from .grid import Field, SpectralField, transform_forward, transform_inverse

KINDS = ("gradient", "laplacian", "bilaplacian", "hessian")


def spectral_derivative(F: SpectralField, kind: str):
    """Apply a derivative multiplier to every coefficient.

    gradient    -> list of d SpectralFields, multiplier i*xi_i
    laplacian   -> SpectralField, multiplier -|xi|^2
    bilaplacian -> SpectralField, multiplier |xi|^4
    hessian     -> d x d nested list of SpectralFields, multiplier -xi_i*xi_j
    """
    grid = F.grid
    if kind not in KINDS:
        raise ValueError(f"unknown derivative kind {kind!r}")
    if kind == "gradient":
        ks = grid.wavevectors()
        return [SpectralField(grid, 1j * k * F.coeffs) for k in ks]
    if kind == "laplacian":
        return SpectralField(grid, -grid.ksq() * F.coeffs)
    if kind == "bilaplacian":
        return SpectralField(grid, grid.ksq() ** 2 * F.coeffs)
    ks = grid.wavevectors()
    return [
        [SpectralField(grid, -ks[i] * ks[j] * F.coeffs) for j in range(grid.d)]
        for i in range(grid.d)
    ]


def derivative_field(f: Field, kind: str):
    """Real-space convenience wrapper around spectral_derivative."""
    F = transform_forward(f)
    out = spectral_derivative(F, kind)
    if kind == "gradient":
        return [transform_inverse(G) for G in out]
    if kind == "hessian":
        return [[transform_inverse(G) for G in row] for row in out]
    return transform_inverse(out)
