"""Target manifolds, projector derivative tensors and the nonlinearities.

Two evaluation routes to the same right-hand side:

* `sphere_nonlinearity` forms the scalar
      |u_t|^2 + |Lap u|^2 + 4 <grad u, grad Lap u> + 2 <hess u, hess u>
  and returns minus that scalar times u (valid for round-sphere targets).

* `general_nonlinearity` contracts derivative tensors of the nearest-point
  projection (orders 2..4) against the same derivative fields; it works for
  the sphere (closed-form tensors) and for analytic perturbations of the
  sphere (tensors from a truncated Taylor model of the projection).

Both routes dealias products by forming them on a grid refined 2x per axis
and truncating back, which is exact for the cubic sphere products of
band-limited inputs.
"""

from dataclasses import dataclass, field

import numpy as np

from .grid import (Field, Grid, coeff_arrays_forward, coeff_arrays_inverse,
                   fine_grid_for, pad_coeffs, truncate_coeffs)
from .multipliers import SpaceTimeBlock
from .polymap import (PolyMap, compose, invert_jet, shift_center,
                      sphere_projection_jet)
from .propagator import State


class TubeError(RuntimeError):
    """Raised when a field leaves the tube where the projection is defined."""


# ---------------------------------------------------------------------------
# sphere target, closed forms


class SphereTarget:
    """Round unit sphere S^(L-1) in R^L with Pi(x) = x/|x|."""

    kind = "sphere"

    def __init__(self, L):
        if L < 2:
            raise ValueError("sphere targets need L >= 2 components")
        self.L = L

    def project(self, pts):
        r = np.linalg.norm(pts, axis=0)
        if np.any(r <= 0.5):
            raise TubeError("point outside the tube |x| > 1/2")
        return pts / r

    def dproj(self, pts):
        """d Pi at pts: (I - xhat xhat^T)/|x|, shape (L, L, N)."""
        r = np.linalg.norm(pts, axis=0)
        if np.any(r <= 0.5):
            raise TubeError("point outside the tube |x| > 1/2")
        xhat = pts / r
        eye = np.eye(self.L)[:, :, None]
        return (eye - xhat[:, None] * xhat[None, :]) / r

    def distance(self, pts):
        return np.abs(np.linalg.norm(pts, axis=0) - 1.0)

    def normal(self, pts):
        r = np.linalg.norm(pts, axis=0)
        return pts / r

    # contraction helpers; pts/vectors have shape (L, N)

    def d2_contract(self, x, a, b):
        """d2 Pi_x(a, b), the derivative of the tangent projector."""
        r2 = np.sum(x * x, axis=0)
        r = np.sqrt(r2)
        xa = np.sum(x * a, axis=0)
        xb = np.sum(x * b, axis=0)
        ab = np.sum(a * b, axis=0)
        return (-(ab * x + xb * a + xa * b) / r2 + 3.0 * xa * xb * x / r2 ** 2) / r

    def d3_contract(self, x, a, b, c):
        r2 = np.sum(x * x, axis=0)
        r = np.sqrt(r2)
        xa = np.sum(x * a, axis=0)
        xb = np.sum(x * b, axis=0)
        xc = np.sum(x * c, axis=0)
        ab = np.sum(a * b, axis=0)
        ac = np.sum(a * c, axis=0)
        bc = np.sum(b * c, axis=0)
        r3, r5, r7 = r * r2, r * r2 ** 2, r * r2 ** 3
        out = -(a * bc + b * ac + c * ab) / r3
        out += 3.0 * (a * xb * xc + b * xa * xc + c * xa * xb
                      + x * (ab * xc + ac * xb + bc * xa)) / r5
        out -= 15.0 * x * xa * xb * xc / r7
        return out

    def d4_contract(self, x, a, b, c, e):
        r2 = np.sum(x * x, axis=0)
        r = np.sqrt(r2)
        xa = np.sum(x * a, axis=0)
        xb = np.sum(x * b, axis=0)
        xc = np.sum(x * c, axis=0)
        xe = np.sum(x * e, axis=0)
        ab = np.sum(a * b, axis=0)
        ac = np.sum(a * c, axis=0)
        ae = np.sum(a * e, axis=0)
        bc = np.sum(b * c, axis=0)
        be = np.sum(b * e, axis=0)
        ce = np.sum(c * e, axis=0)
        r3, r5, r7, r9 = r * r2, r * r2 ** 2, r * r2 ** 3, r * r2 ** 4
        bracket = (a * xb * xc + b * xa * xc + c * xa * xb
                   + x * (ab * xc + ac * xb + bc * xa))
        out = 3.0 * xe * (a * bc + b * ac + c * ab) / r5
        out -= 15.0 * xe * bracket / r7
        out += 3.0 * (a * (be * xc + xb * ce)
                      + b * (ae * xc + xa * ce)
                      + c * (ae * xb + xa * be)
                      + e * (ab * xc + ac * xb + bc * xa)
                      + x * (ab * ce + ac * be + bc * ae)) / r5
        out += 105.0 * xe * x * xa * xb * xc / r9
        out -= 15.0 * (e * xa * xb * xc
                       + x * (ae * xb * xc + xa * be * xc + xa * xb * ce)) / r7
        return out


# ---------------------------------------------------------------------------
# perturbed sphere: Phi o Pi_sphere o Phi^{-1} with Phi = id + eps * p


class PerturbedSphereTarget:
    """Analytic perturbation of the sphere via a polynomial diffeomorphism.

    Phi(x) = x + eps * p(x) with p a finite multivariate polynomial; the
    projection onto N = Phi(S^(L-1)) is Pi_N = Phi o Pi_sphere o Phi^{-1}.
    Derivative tensors come from a Taylor model of Pi_N truncated at
    `series_order`.
    """

    kind = "perturbed-sphere"

    def __init__(self, L, eps, poly: PolyMap, series_order=6):
        if poly.nvars != L or poly.nout != L:
            raise ValueError("perturbation polynomial must map R^L -> R^L")
        if series_order < 4:
            raise ValueError("series_order must be >= 4 for the tensor expansion")
        self.L = L
        self.eps = eps
        self.poly = poly
        self.series_order = series_order
        self.sphere = SphereTarget(L)

    def phi(self, pts):
        return pts + self.eps * self.poly.eval(pts)

    def phi_jacobian(self, pts):
        npts = pts.shape[1]
        jac = np.repeat(np.eye(self.L)[:, :, None], npts, axis=2)
        for i in range(self.L):
            dp = _poly_partial(self.poly, i)
            jac[:, i, :] += self.eps * dp.eval(pts)
        return jac

    def phi_inverse(self, pts, tol=1e-13, maxiter=60):
        """Newton solve of Phi(x) = y, vectorized over points."""
        x = pts.copy()
        for _ in range(maxiter):
            res = self.phi(x) - pts
            if np.max(np.abs(res)) < tol:
                break
            jac = self.phi_jacobian(x)
            # solve per point
            sol = np.linalg.solve(jac.transpose(2, 0, 1), res.T[..., None])
            x = x - sol[..., 0].T
        else:
            raise TubeError("Newton iteration for Phi^-1 did not converge")
        return x

    def project(self, pts):
        x = self.phi_inverse(pts)
        return self.phi(self.sphere.project(x))

    def dproj(self, pts):
        x = self.phi_inverse(pts)
        z = self.sphere.project(x)
        jac_out = self.phi_jacobian(z)           # DPhi at Pi_s(x)
        dps = self.sphere.dproj(x)               # DPi_s at x
        jac_in = self.phi_jacobian(x)            # DPhi at x
        inv_in = np.linalg.inv(jac_in.transpose(2, 0, 1))
        out = np.einsum("abn,bcn,ncd->adn", jac_out, dps, inv_in)
        return out

    def distance(self, pts):
        return np.linalg.norm(pts - self.project(pts), axis=0)

    def normal(self, pts):
        """Unit normal at Pi(pts): the sphere normal pushed through DPhi^-T."""
        x = self.phi_inverse(pts)
        z = self.sphere.project(x)
        jac = self.phi_jacobian(z).transpose(2, 0, 1)
        # normal of Phi(S) at Phi(z): inverse-transpose of DPhi applied to z
        nrm = np.linalg.solve(jac.transpose(0, 2, 1), z.T[..., None])[..., 0].T
        return nrm / np.linalg.norm(nrm, axis=0)

    def taylor_model(self, center, order=None) -> PolyMap:
        """Degree-`order` Taylor jet of Pi_N around `center` (displacement form).

        Returns T with T(h) approximating Pi_N(center + h); the constant term
        is Pi_N(center).
        """
        order = order or self.series_order
        center = np.asarray(center, dtype=np.float64)
        y0 = center[:, None]
        x0 = self.phi_inverse(y0)[:, 0]
        z0 = self.sphere.project(x0[:, None])[:, 0]
        phi_map = PolyMap.identity(self.L).add(self.poly, scale=self.eps)
        # jet of Phi^{-1} at center: invert the Phi jet at x0
        phi_at_x0 = shift_center(phi_map, x0).drop_constant()
        inv_jet = invert_jet(phi_at_x0.truncate(order), order)
        # jet of Pi_sphere at x0
        pis_jet = sphere_projection_jet(x0, order, self.L)
        pis_disp = pis_jet.drop_constant()
        # jet of Phi at z0
        phi_at_z0 = shift_center(phi_map, z0)
        phi_const = phi_at_z0.constant_term()
        phi_disp = phi_at_z0.drop_constant()
        inner = compose(pis_disp, inv_jet, order)
        outer = compose(phi_disp, inner, order)
        total = outer.add(PolyMap.constant(self.L, phi_const))
        return total


def _poly_partial(poly: PolyMap, i):
    out = PolyMap(poly.nvars, poly.nout)
    for alpha, c in poly.coeffs.items():
        if alpha[i] == 0:
            continue
        beta = list(alpha)
        beta[i] -= 1
        key = tuple(beta)
        contrib = alpha[i] * c
        cur = out.coeffs.get(key)
        out.coeffs[key] = contrib if cur is None else cur + contrib
    return out


def nearest_point(target, p):
    """Projection and tangent projector at ambient points p of shape (L, N)."""
    p = np.asarray(p, dtype=np.float64)
    squeeze = p.ndim == 1
    if squeeze:
        p = p[:, None]
    proj = target.project(p)
    dp = target.dproj(p)
    if squeeze:
        return proj[:, 0], dp[:, :, 0]
    return proj, dp


# ---------------------------------------------------------------------------
# derivative fields on the dealiasing grid


@dataclass
class DerivativeBundle:
    """Spectral derivatives of a state sampled on the 2x dealiasing grid."""

    fine: Grid
    u: np.ndarray          # (L, *fine.shape)
    ut: np.ndarray
    lap: np.ndarray
    grad: np.ndarray       # (d, L, *fine.shape)
    gradlap: np.ndarray
    hess: np.ndarray       # (d, d, L, *fine.shape)


def derivative_bundle(s: State, dealias=True) -> DerivativeBundle:
    grid = s.grid
    fine = fine_grid_for(grid, 2) if dealias else grid
    uc = coeff_arrays_forward(s.u.values, grid)
    utc = coeff_arrays_forward(s.ut.values, grid)
    if dealias:
        uc = pad_coeffs(uc, grid, fine)
        utc = pad_coeffs(utc, grid, fine)
    ks = fine.wavevectors()
    ksq = fine.ksq()
    d, L = grid.d, s.ncomp
    u = coeff_arrays_inverse(uc, fine)
    ut = coeff_arrays_inverse(utc, fine)
    lap = coeff_arrays_inverse(-ksq * uc, fine)
    lap_c = -ksq * uc
    grad = np.empty((d,) + u.shape)
    gradlap = np.empty((d,) + u.shape)
    hess = np.empty((d, d) + u.shape)
    for i in range(d):
        grad[i] = coeff_arrays_inverse(1j * ks[i] * uc, fine)
        gradlap[i] = coeff_arrays_inverse(1j * ks[i] * lap_c, fine)
        for j in range(i, d):
            hij = coeff_arrays_inverse(-ks[i] * ks[j] * uc, fine)
            hess[i, j] = hij
            hess[j, i] = hij
    return DerivativeBundle(fine, u, ut, lap, grad, gradlap, hess)


def _restrict(values, fine, grid):
    if fine.n == grid.n:
        return values.copy()
    c = coeff_arrays_forward(values, fine)
    return coeff_arrays_inverse(truncate_coeffs(c, fine, grid), grid)


# ---------------------------------------------------------------------------
# nonlinearities


def sphere_scalar(bundle: DerivativeBundle):
    """|u_t|^2 + |Lap u|^2 + 4 <grad u, grad Lap u> + 2 <hess u, hess u>."""
    scal = np.sum(bundle.ut ** 2, axis=0) + np.sum(bundle.lap ** 2, axis=0)
    d = bundle.grad.shape[0]
    for i in range(d):
        scal += 4.0 * np.sum(bundle.grad[i] * bundle.gradlap[i], axis=0)
        for j in range(d):
            scal += 2.0 * np.sum(bundle.hess[i, j] * bundle.hess[j, i], axis=0)
    return scal


def sphere_nonlinearity(s: State, dealias=True, enforce_tube=True) -> Field:
    """Right-hand side -(scalar) u of the sphere system."""
    if enforce_tube:
        norms = np.linalg.norm(s.u.values, axis=0)
        if np.min(norms) < 0.5:
            idx = np.unravel_index(np.argmin(norms), norms.shape)
            raise TubeError(
                f"|u| = {norms[idx]:.3g} < 1/2 at grid index {idx}"
            )
    bundle = derivative_bundle(s, dealias=dealias)
    out = -sphere_scalar(bundle)[None] * bundle.u
    return Field(s.grid, _restrict(out, bundle.fine, s.grid))


def _flatten(arr, grid):
    return arr.reshape(arr.shape[: arr.ndim - grid.d] + (-1,))


def general_nonlinearity(s: State, target, dealias=True, series_center=None,
                         series_order=None) -> Field:
    """Projector-expansion right-hand side for sphere or perturbed targets.

    Contractions (tensors are derivatives of the nearest-point projection):
        d2Pi(u_t,u_t) + d2Pi(Lap u,Lap u) + 4 d2Pi(d_i u, d_i Lap u)
      + 2 d2Pi(d_i d_j u, d_i d_j u) + 2 d3Pi(d_i u, d_i u, Lap u)
      + 4 d3Pi(d_i u, d_j u, d_i d_j u) + d4Pi(d_i u, d_i u, d_j u, d_j u).

    For perturbed-sphere targets the tensors come from a Taylor model of the
    projection around `series_center` (default: projection of the mean of u),
    truncated at `series_order` (default: the target's configured order).
    """
    bundle = derivative_bundle(s, dealias=dealias)
    grid, fine = s.grid, bundle.fine
    x = _flatten(bundle.u, fine)
    if isinstance(target, SphereTarget):
        c2, c3, c4 = target.d2_contract, target.d3_contract, target.d4_contract
    else:
        center = series_center
        if center is None:
            center = target.project(s.u.mean()[:, None])[:, 0]
        model = target.taylor_model(center, series_order)
        c2, c3, c4 = _model_contractors(model, np.asarray(center), x)
    ut = _flatten(bundle.ut, fine)
    lap = _flatten(bundle.lap, fine)
    grad = _flatten(bundle.grad, fine)
    gradlap = _flatten(bundle.gradlap, fine)
    hess = _flatten(bundle.hess, fine)
    d = grid.d

    out = c2(x, ut, ut) + c2(x, lap, lap)
    for i in range(d):
        out += 4.0 * c2(x, grad[i], gradlap[i])
        out += 2.0 * c3(x, grad[i], grad[i], lap)
        for j in range(d):
            out += 2.0 * c2(x, hess[i, j], hess[i, j])
            out += 4.0 * c3(x, grad[i], grad[j], hess[i, j])
            out += c4(x, grad[i], grad[i], grad[j], grad[j])
    out = out.reshape((s.ncomp,) + fine.shape)
    return Field(grid, _restrict(out, fine, grid))


def _model_contractors(model: PolyMap, center, x):
    """Pointwise tensor contractions from a polynomial Taylor model.

    The model is a polynomial in the displacement h = x - center; its k-th
    derivative tensors at each point are polynomials too, evaluated by
    differentiating the model symbolically.
    """
    h = x - center[:, None]
    L = model.nout

    def tensor_at_points(order):
        # derivative polynomial for each index tuple, evaluated at h
        import itertools
        npts = h.shape[1]
        tens = np.zeros((L,) + (L,) * order + (npts,))
        for idx in itertools.product(range(L), repeat=order):
            dpoly = model
            for i in idx:
                dpoly = _poly_partial(dpoly, i)
            if dpoly.coeffs:
                tens[(slice(None),) + idx] = dpoly.eval(h)
        return tens

    t2 = tensor_at_points(2)
    t3 = tensor_at_points(3)
    t4 = tensor_at_points(4)
    c2 = lambda _x, a, b: np.einsum("jabn,an,bn->jn", t2, a, b)
    c3 = lambda _x, a, b, c: np.einsum("jabcn,an,bn,cn->jn", t3, a, b, c)
    c4 = lambda _x, a, b, c, e: np.einsum("jabcen,an,bn,cn,en->jn", t4, a, b, c, e)
    return c2, c3, c4


# ---------------------------------------------------------------------------
# bilinear families and the null-form identity


class BilinearFamily:
    """Family x -> Q_x of symmetric bilinear forms with L-component output.

    `evaluator(points)` returns coefficients Q^J_KM of shape (L, L, L, N) for
    points of shape (L, N); symmetry in (K, M) is required.
    """

    def __init__(self, L, evaluator):
        self.L = L
        self.evaluator = evaluator

    def coefficients(self, points):
        q = self.evaluator(points)
        if q.shape[:3] != (self.L, self.L, self.L):
            raise ValueError("bilinear family returned wrong coefficient shape")
        return q

    @classmethod
    def constant(cls, tensor):
        tensor = np.asarray(tensor, dtype=np.float64)
        L = tensor.shape[0]
        if not np.allclose(tensor, tensor.transpose(0, 2, 1)):
            raise ValueError("bilinear forms must be symmetric")

        def ev(points):
            return np.repeat(tensor[..., None], points.shape[1], axis=-1)

        return cls(L, ev)

    @classmethod
    def zero(cls, L):
        return cls.constant(np.zeros((L, L, L)))

    @classmethod
    def from_target(cls, target):
        """Q_x = d2 Pi_x, the family appearing in the projector expansion."""
        if not isinstance(target, SphereTarget):
            raise ValueError("from_target supports sphere targets")

        def ev(points):
            L = target.L
            npts = points.shape[1]
            q = np.empty((L, L, L, npts))
            eye = np.eye(L)
            for k in range(L):
                for m in range(k, L):
                    val = target.d2_contract(points, eye[k][:, None], eye[m][:, None])
                    q[:, k, m] = val
                    q[:, m, k] = val
            return q

        return cls(target.L, ev)


# centered finite-difference stencils, order 4
_D1_STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2_STENCIL = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _time_derivative(data, dt, order):
    """4th-order centered time derivative along axis 0, valid on the interior."""
    st = _D1_STENCIL / dt if order == 1 else _D2_STENCIL / dt ** 2
    nt = data.shape[0]
    out = np.zeros((nt - 4,) + data.shape[1:])
    for k, c in enumerate(st):
        if c != 0.0:
            out += c * data[k: nt - 4 + k]
    return out


def _bilaplacian_slices(data, grid):
    c = coeff_arrays_forward(data, grid)
    return coeff_arrays_inverse(grid.ksq() ** 2 * c, grid)


def _wave_operator(data, grid, dt):
    """L = d_t^2 + Lap^2 on interior time slices of (nt, ..., *grid.shape) data."""
    interior = _time_derivative(data, dt, 2)
    interior += _bilaplacian_slices(data[2:-2], grid)
    return interior


def null_form(block: SpaceTimeBlock, Q: BilinearFamily, form="commutator"):
    """Evaluate the quadratic nonlinearity on the interior times of a block.

    form='commutator' uses 1/2 Q_u(L(u.u) - u.Lu - Lu.u); form='expanded'
    uses the derivative expansion Q_u(u_t,u_t) + Q_u(Lap u,Lap u)
    + 2 Q_u(grad u, grad Lap u) + 2 Q_u(grad Lap u, grad u)
    + 2 Q_u(hess u, hess u).  Time derivatives are 4th-order centered
    stencils; space derivatives are spectral.

    Returns (times, values) with values of shape (nt-4, L, *grid.shape).
    """
    if block.n_times < 9:
        raise ValueError("block too short for 4th-order time stencils")
    grid = block.grid
    data = block.snapshots            # untapered: identity is pointwise
    L = block.ncomp
    dt = block.dt
    nt = block.n_times
    times = block.times[2:-2]
    u_mid = data[2:-2]
    upts = _flatten_block(u_mid, grid)
    q = Q.coefficients(upts)          # (L, L, L, Npts*nt)

    if form == "commutator":
        lu = _wave_operator(data, grid, dt)          # (nt-4, L, ...)
        prod = data[:, :, None] * data[:, None, :]   # (nt, L, L, ...)
        lprod = _wave_operator(prod, grid, dt)
        sym = lprod - u_mid[:, :, None] * lu[:, None, :] \
            - u_mid[:, None, :] * lu[:, :, None]
        s_flat = _flatten_block(sym.reshape((nt - 4, L * L) + grid.shape), grid)
        s_flat = s_flat.reshape(L, L, -1)
        out = 0.5 * np.einsum("jkmn,kmn->jn", q, s_flat)
    elif form == "expanded":
        ut = _time_derivative(data, dt, 1)
        bil = _spatial_bilinear(data[2:-2], grid)
        ut_f = _flatten_block(ut, grid)
        out = np.einsum("jkmn,kn,mn->jn", q, ut_f, ut_f)
        out += bil_contract(q, bil)
    else:
        raise ValueError(f"unknown form {form!r}")
    out = out.reshape((L, nt - 4) + grid.shape)
    return times, np.moveaxis(out, 0, 1)


def _flatten_block(data, grid):
    """(nt, L, *shape) -> (L, nt * npts) with time folded into the point axis."""
    nt, L = data.shape[0], data.shape[1]
    flat = data.reshape(nt, L, -1)
    return np.moveaxis(flat, 1, 0).reshape(L, -1)


def _spatial_bilinear(data, grid):
    """Symmetric spatial part Lap.Lap + 2 grad.gradlap (x2) + 2 hess.hess.

    Returns a (L, L, N) array of sum over the derivative pairings, flattened
    like _flatten_block.
    """
    nt, L = data.shape[0], data.shape[1]
    c = coeff_arrays_forward(data, grid)
    ks = grid.wavevectors()
    ksq = grid.ksq()
    lap = coeff_arrays_inverse(-ksq * c, grid)
    lap_f = _flatten_block(lap, grid)
    out = lap_f[:, None] * lap_f[None, :]
    for i in range(grid.d):
        gi = coeff_arrays_inverse(1j * ks[i] * c, grid)
        gli = coeff_arrays_inverse(-1j * ks[i] * ksq * c, grid)
        gi_f = _flatten_block(gi, grid)
        gli_f = _flatten_block(gli, grid)
        out += 2.0 * (gi_f[:, None] * gli_f[None, :] + gli_f[:, None] * gi_f[None, :])
        for j in range(grid.d):
            hij = coeff_arrays_inverse(-ks[i] * ks[j] * c, grid)
            h_f = _flatten_block(hij, grid)
            out += 2.0 * h_f[:, None] * h_f[None, :]
    return out


def bil_contract(q, bil):
    return np.einsum("jkmn,kmn->jn", q, bil)
