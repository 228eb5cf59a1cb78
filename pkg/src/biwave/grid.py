"""Periodic grids, real fields and their discrete Fourier representation.

Coefficient convention: a Field f relates to its SpectralField F through

    f(x) = sum_k F[k] * exp(i k . x),

i.e. forward = fftn/n^d and inverse = ifftn*n^d.  With this normalization
Parseval reads  int |f|^2 dx = box^d * sum_k |F[k]|^2.
"""

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

MAX_POINTS = 2 ** 24


def fft_workers():
    """Worker count for scipy.fft, capped by BWM_THREADS."""
    cap = os.environ.get("BWM_THREADS")
    workers = os.cpu_count() or 1
    if cap:
        workers = max(1, min(workers, int(cap)))
    return workers


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, box)^d with n points per axis."""

    d: int
    n: int
    box: float = 2.0 * np.pi

    def __post_init__(self):
        if not 1 <= self.d <= 4:
            raise ValueError(f"dimension must be 1..4, got {self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if self.n ** self.d > MAX_POINTS:
            raise ValueError(f"total points {self.n**self.d} exceed {MAX_POINTS}")
        if self.box <= 0:
            raise ValueError("box length must be positive")

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def npoints(self):
        return self.n ** self.d

    @property
    def dx(self):
        return self.box / self.n

    @property
    def cell_volume(self):
        return self.dx ** self.d

    def axis_coords(self):
        return np.arange(self.n) * self.dx

    def coords(self):
        """d arrays of shape grid.shape with the point coordinates."""
        x = self.axis_coords()
        return np.meshgrid(*([x] * self.d), indexing="ij")

    def axis_freqs(self):
        """Wave numbers along one axis, fftfreq ordering, scaled by 2*pi/box."""
        return 2.0 * np.pi / self.box * sfft.fftfreq(self.n, 1.0 / self.n)

    def wavevectors(self):
        """d arrays of shape grid.shape with the frequency lattice."""
        k = self.axis_freqs()
        return np.meshgrid(*([k] * self.d), indexing="ij")

    def ksq(self):
        k2 = np.zeros(self.shape)
        for ki in self.wavevectors():
            k2 += ki ** 2
        return k2

    @property
    def kmin(self):
        return 2.0 * np.pi / self.box

    @property
    def kmax(self):
        return np.sqrt(self.d) * self.kmin * (self.n // 2)


@dataclass
class Field:
    """Real L-component field sampled on a grid; values shape (L, *grid.shape)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == self.grid.d:
            self.values = self.values[None]
        if self.values.shape[1:] != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @property
    def ncomp(self):
        return self.values.shape[0]

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def copy(self):
        return Field(self.grid, self.values.copy())

    def l2norm(self):
        """Physical L2 norm sqrt(int |f|^2 dx)."""
        return np.sqrt(np.sum(self.values ** 2) * self.grid.cell_volume)

    def mean(self):
        axes = tuple(range(1, 1 + self.grid.d))
        return self.values.mean(axis=axes)

    @classmethod
    def zeros(cls, grid, ncomp=1):
        return cls(grid, np.zeros((ncomp,) + grid.shape))


@dataclass
class SpectralField:
    """Fourier coefficients of a real field; coeffs shape (L, *grid.shape)."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.ndim == self.grid.d:
            self.coeffs = self.coeffs[None]
        if self.coeffs.shape[1:] != self.grid.shape:
            raise ValueError("coeff shape does not match grid")

    @property
    def ncomp(self):
        return self.coeffs.shape[0]

    def copy(self):
        return SpectralField(self.grid, self.coeffs.copy())

    def l2norm(self):
        """Parseval value of the physical L2 norm."""
        return np.sqrt(self.grid.box ** self.grid.d * np.sum(np.abs(self.coeffs) ** 2))

    @classmethod
    def zeros(cls, grid, ncomp=1):
        return cls(grid, np.zeros((ncomp,) + grid.shape, dtype=np.complex128))


def spatial_axes(grid):
    return tuple(range(1, 1 + grid.d))


def transform_forward(f: Field) -> SpectralField:
    f.check_finite()
    coeffs = sfft.fftn(f.values, axes=spatial_axes(f.grid), workers=fft_workers())
    coeffs /= f.grid.npoints
    return SpectralField(f.grid, coeffs)


def transform_inverse(F: SpectralField) -> Field:
    if not np.all(np.isfinite(F.coeffs)):
        raise ValueError("spectral field contains non-finite coefficients")
    vals = sfft.ifftn(F.coeffs, axes=spatial_axes(F.grid), workers=fft_workers())
    return Field(F.grid, vals.real * F.grid.npoints)


def coeff_arrays_forward(values, grid):
    """fft of a raw (..., *grid.shape) array in the package normalization."""
    axes = tuple(range(values.ndim - grid.d, values.ndim))
    return sfft.fftn(values, axes=axes, workers=fft_workers()) / grid.npoints


def coeff_arrays_inverse(coeffs, grid, real=True):
    axes = tuple(range(coeffs.ndim - grid.d, coeffs.ndim))
    out = sfft.ifftn(coeffs, axes=axes, workers=fft_workers()) * grid.npoints
    return out.real if real else out


def pad_coeffs(coeffs, grid, fine_grid):
    """Zero-pad spectral coefficients from grid onto a finer grid.

    The Nyquist plane is split evenly between +n/2 and -n/2 on the fine grid
    so real fields stay real.
    """
    n, m = grid.n, fine_grid.n
    if m < n:
        raise ValueError("fine grid must be at least as fine")
    if m == n:
        return coeffs.copy()
    out = coeffs
    for ax in range(coeffs.ndim - grid.d, coeffs.ndim):
        shape = list(out.shape)
        shape[ax] = m
        padded = np.zeros(shape, dtype=np.complex128)
        pos = [slice(None)] * out.ndim
        # modes 0 .. n/2-1
        src = pos.copy(); src[ax] = slice(0, n // 2)
        dst = pos.copy(); dst[ax] = slice(0, n // 2)
        padded[tuple(dst)] = out[tuple(src)]
        # modes -n/2+1 .. -1
        src[ax] = slice(n // 2 + 1, n)
        dst[ax] = slice(m - n // 2 + 1, m)
        padded[tuple(dst)] = out[tuple(src)]
        # Nyquist mode n/2 split between +-n/2
        src[ax] = slice(n // 2, n // 2 + 1)
        half = 0.5 * out[tuple(src)]
        dst[ax] = slice(n // 2, n // 2 + 1)
        padded[tuple(dst)] = half
        dst[ax] = slice(m - n // 2, m - n // 2 + 1)
        padded[tuple(dst)] += half
        out = padded
    return out


def truncate_coeffs(coeffs, fine_grid, grid):
    """Adjoint of pad_coeffs: restrict fine-grid coefficients to the coarse lattice."""
    n, m = grid.n, fine_grid.n
    if m == n:
        return coeffs.copy()
    out = coeffs
    for ax in range(coeffs.ndim - fine_grid.d, coeffs.ndim):
        shape = list(out.shape)
        shape[ax] = n
        trunc = np.zeros(shape, dtype=np.complex128)
        pos = [slice(None)] * out.ndim
        src = pos.copy(); dst = pos.copy()
        src[ax] = slice(0, n // 2)
        dst[ax] = slice(0, n // 2)
        trunc[tuple(dst)] = out[tuple(src)]
        src[ax] = slice(m - n // 2 + 1, m)
        dst[ax] = slice(n // 2 + 1, n)
        trunc[tuple(dst)] = out[tuple(src)]
        # fold the two fine Nyquist-compatible modes back onto coarse Nyquist
        acc = pos.copy(); acc[ax] = slice(n // 2, n // 2 + 1)
        src[ax] = slice(n // 2, n // 2 + 1)
        trunc[tuple(acc)] = out[tuple(src)]
        src[ax] = slice(m - n // 2, m - n // 2 + 1)
        trunc[tuple(acc)] += out[tuple(src)]
        out = trunc
    return out


def fine_grid_for(grid, factor=2):
    return Grid(grid.d, grid.n * factor, grid.box)
