"""Truncated multivariate polynomial maps R^L -> R^L.

Used to build Taylor models of the perturbed-sphere projection: coefficients
are stored per monomial multi-index, all products truncated at a fixed total
degree.  Sizes stay tiny (L <= 4, degree <= 6) so plain dict arithmetic is
fast enough.
"""

import itertools
import math

import numpy as np


class PolyMap:
    """coeffs: dict multiindex(tuple len nvars) -> np.ndarray shape (nout,)."""

    def __init__(self, nvars, nout, coeffs=None):
        self.nvars = nvars
        self.nout = nout
        self.coeffs = {}
        if coeffs:
            for alpha, c in coeffs.items():
                c = np.asarray(c, dtype=np.float64)
                if np.any(c != 0.0):
                    self.coeffs[tuple(alpha)] = c.copy()

    @classmethod
    def zero(cls, nvars, nout):
        return cls(nvars, nout)

    @classmethod
    def identity(cls, nvars):
        out = cls(nvars, nvars)
        for i in range(nvars):
            alpha = tuple(1 if j == i else 0 for j in range(nvars))
            out.coeffs[alpha] = np.eye(nvars)[i]
        return out

    @classmethod
    def constant(cls, nvars, value):
        value = np.asarray(value, dtype=np.float64)
        out = cls(nvars, value.shape[0])
        if np.any(value != 0.0):
            out.coeffs[(0,) * nvars] = value.copy()
        return out

    def copy(self):
        return PolyMap(self.nvars, self.nout, self.coeffs)

    def degree(self):
        return max((sum(a) for a in self.coeffs), default=0)

    def add(self, other, scale=1.0):
        out = self.copy()
        for alpha, c in other.coeffs.items():
            cur = out.coeffs.get(alpha)
            out.coeffs[alpha] = (cur + scale * c) if cur is not None else scale * c
        return PolyMap(self.nvars, self.nout, out.coeffs)

    def scale(self, factor):
        return PolyMap(self.nvars, self.nout,
                       {a: factor * c for a, c in self.coeffs.items()})

    def drop_constant(self):
        out = self.copy()
        out.coeffs.pop((0,) * self.nvars, None)
        return out

    def truncate(self, order):
        return PolyMap(self.nvars, self.nout,
                       {a: c for a, c in self.coeffs.items() if sum(a) <= order})

    def constant_term(self):
        return self.coeffs.get((0,) * self.nvars, np.zeros(self.nout)).copy()

    def eval(self, points):
        """points shape (nvars, N) -> values shape (nout, N)."""
        points = np.asarray(points, dtype=np.float64)
        npts = points.shape[1]
        out = np.zeros((self.nout, npts))
        for alpha, c in self.coeffs.items():
            mono = np.ones(npts)
            for i, a in enumerate(alpha):
                if a:
                    mono = mono * points[i] ** a
            out += c[:, None] * mono[None]
        return out

    def derivative_tensor(self, order):
        """Dense symmetric tensor of partial derivatives at the expansion point.

        Returns shape (nout,) + (nvars,)*order with entries
        d^order f_J / dx_{i1}..dx_{i_order} evaluated at the center.
        """
        shape = (self.nout,) + (self.nvars,) * order
        tens = np.zeros(shape)
        for idx in itertools.product(range(self.nvars), repeat=order):
            alpha = [0] * self.nvars
            for i in idx:
                alpha[i] += 1
            c = self.coeffs.get(tuple(alpha))
            if c is None:
                continue
            fact = 1.0
            for a in alpha:
                fact *= math.factorial(a)
            tens[(slice(None),) + idx] = c * fact
        return tens


def multiply_scalar(pa, pb, nvars, order):
    """Product of two scalar polynomials given as dict alpha -> float."""
    out = {}
    for a, ca in pa.items():
        for b, cb in pb.items():
            alpha = tuple(x + y for x, y in zip(a, b))
            if sum(alpha) > order:
                continue
            out[alpha] = out.get(alpha, 0.0) + ca * cb
    return out


def compose(outer: PolyMap, inner: PolyMap, order) -> PolyMap:
    """outer(inner(h)) truncated at total degree `order`.

    inner must have no constant term (it represents a displacement).
    """
    if any(c is not None for c in [inner.coeffs.get((0,) * inner.nvars)]):
        if inner.coeffs.get((0,) * inner.nvars) is not None:
            raise ValueError("inner map must have zero constant term")
    # scalar polynomials of each inner component
    comp_polys = []
    for i in range(inner.nout):
        poly = {a: float(c[i]) for a, c in inner.coeffs.items() if c[i] != 0.0}
        comp_polys.append(poly)
    one = {(0,) * inner.nvars: 1.0}
    # cache powers of components
    powers = [[one] for _ in range(inner.nout)]
    for i, poly in enumerate(comp_polys):
        for _ in range(order):
            powers[i].append(multiply_scalar(powers[i][-1], poly, inner.nvars, order))
    result = {}
    for alpha, c in outer.coeffs.items():
        if sum(alpha) > order:
            continue
        mono = one
        for i, a in enumerate(alpha):
            if a:
                mono = multiply_scalar(mono, powers[i][a], inner.nvars, order)
                if not mono:
                    break
        for beta, m in mono.items():
            if m == 0.0:
                continue
            cur = result.get(beta)
            contrib = c * m
            result[beta] = contrib if cur is None else cur + contrib
    return PolyMap(inner.nvars, outer.nout, result)


def shift_center(poly: PolyMap, x0) -> PolyMap:
    """Re-expand a polynomial around x0: returns q with q(h) = poly(x0 + h)."""
    x0 = np.asarray(x0, dtype=np.float64)
    nv = poly.nvars
    order = poly.degree()
    inner = PolyMap.identity(nv)
    # identity plus constant is not allowed in compose, expand binomially instead
    result = {}
    for alpha, c in poly.coeffs.items():
        # (x0_i + h_i)^a_i expanded per axis
        terms = [{(0,): 1.0}]
        axis_polys = []
        for i, a in enumerate(alpha):
            poly_i = {}
            for k in range(a + 1):
                poly_i[k] = math.comb(a, k) * x0[i] ** (a - k)
            axis_polys.append(poly_i)
        # combine axes
        combos = [((0,) * nv, 1.0)]
        for i, poly_i in enumerate(axis_polys):
            new = []
            for beta, m in combos:
                for k, ck in poly_i.items():
                    b = list(beta)
                    b[i] = k
                    new.append((tuple(b), m * ck))
            combos = new
        for beta, m in combos:
            if m == 0.0:
                continue
            cur = result.get(beta)
            contrib = c * m
            result[beta] = contrib if cur is None else cur + contrib
    return PolyMap(nv, poly.nout, result)


def invert_jet(jet: PolyMap, order) -> PolyMap:
    """Formal inverse of a jet with zero constant term and invertible linear part.

    Returns H with H(jet(h)) = h + O(h^(order+1)).
    """
    nv = jet.nvars
    lin = np.zeros((jet.nout, nv))
    for i in range(nv):
        alpha = tuple(1 if j == i else 0 for j in range(nv))
        c = jet.coeffs.get(alpha)
        if c is not None:
            lin[:, i] = c
    ainv = np.linalg.inv(lin)
    ainv_map = PolyMap(nv, nv)
    for i in range(nv):
        alpha = tuple(1 if j == i else 0 for j in range(nv))
        col = ainv[:, i]
        if np.any(col != 0.0):
            ainv_map.coeffs[alpha] = col.copy()
    higher = jet.truncate(order)
    for i in range(nv):
        alpha = tuple(1 if j == i else 0 for j in range(nv))
        higher.coeffs.pop(alpha, None)
    higher = higher.drop_constant()
    h = ainv_map.copy()
    for _ in range(order):
        correction = compose(higher, h, order)
        u_minus = PolyMap.identity(nv).add(correction, scale=-1.0)
        h = compose(ainv_map, u_minus, order)
    return h


def sphere_projection_jet(x0, order, nvars) -> PolyMap:
    """Taylor jet of x -> x/|x| at x0, as displacement map h -> Pi(x0+h)."""
    x0 = np.asarray(x0, dtype=np.float64)
    r0sq = float(x0 @ x0)
    if r0sq <= 0.25:
        raise ValueError("sphere projection jet requires |x0| > 1/2")
    nv = nvars
    # s(h) = (2 <x0,h> + |h|^2) / r0^2, no constant term
    s = {}
    for i in range(nv):
        a1 = tuple(1 if j == i else 0 for j in range(nv))
        if x0[i] != 0.0:
            s[a1] = 2.0 * x0[i] / r0sq
        a2 = tuple(2 if j == i else 0 for j in range(nv))
        s[a2] = s.get(a2, 0.0) + 1.0 / r0sq
    # (1+s)^(-1/2) = sum_m binom(-1/2, m) s^m truncated
    one = {(0,) * nv: 1.0}
    series = dict(one)
    spow = dict(one)
    coef = 1.0
    for m in range(1, order + 1):
        coef *= (-0.5 - (m - 1)) / m
        spow = multiply_scalar(spow, s, nv, order)
        for beta, v in spow.items():
            series[beta] = series.get(beta, 0.0) + coef * v
    # multiply by (x0 + h) / r0
    r0 = np.sqrt(r0sq)
    out = {}
    for beta, v in series.items():
        cur = out.get(beta)
        contrib = v / r0 * x0
        out[beta] = contrib if cur is None else cur + contrib
    for i in range(nv):
        a1 = tuple(1 if j == i else 0 for j in range(nv))
        basis = np.eye(nv)[i]
        for beta, v in series.items():
            alpha = tuple(b + a for b, a in zip(beta, a1))
            if sum(alpha) > order:
                continue
            cur = out.get(alpha)
            contrib = v / r0 * basis
            out[alpha] = contrib if cur is None else cur + contrib
    return PolyMap(nv, nv, out)
