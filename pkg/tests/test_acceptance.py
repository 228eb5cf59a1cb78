"""End-to-end acceptance checks, one test per headline guarantee.

Each test pins the tolerance it claims and stays inside a stated runtime
budget on commodity hardware.
"""

import math
import time

import numpy as np
import pytest

from biwave.diagnostics import (admissible, besov_norm, lateral_norm,
                                modulation_profile)
from biwave.evolution import (RunConfig, evolve, parabolic_rescale,
                              picard_solve)
from biwave.geometry import (BilinearFamily, SphereTarget,
                             general_nonlinearity, null_form,
                             sphere_nonlinearity)
from biwave.grid import Field, Grid
from biwave.harness import _analytic_block, _sphere_state
from biwave.initial_data import generate_initial_data
from biwave.multipliers import (Direction, SpaceTimeBlock, direction_set,
                                littlewood_paley_multiplier, sector_weights,
                                shell_range)
from biwave.propagator import (LinearPropagator, State, default_dt,
                               linear_flow, schrodinger_factorization_check)


def _small_sphere_state(grid, L, rng, amp):
    x = grid.coords()
    theta = np.zeros(grid.shape)
    vel = np.zeros(grid.shape)
    for _ in range(3):
        kvec = rng.integers(-2, 3, grid.d)
        a, ph = rng.standard_normal(2)
        theta += amp * a * np.cos(sum(float(k) * xi
                                      for k, xi in zip(kvec, x)) + ph)
        kvec = rng.integers(-2, 3, grid.d)
        a, ph = rng.standard_normal(2)
        vel += amp * a * np.cos(sum(float(k) * xi
                                    for k, xi in zip(kvec, x)) + ph)
    p, q = np.zeros(L), np.zeros(L)
    p[0], q[1] = 1.0, 1.0
    sh = (-1,) + (1,) * grid.d
    u = np.cos(theta)[None] * p.reshape(sh) + np.sin(theta)[None] * q.reshape(sh)
    tan = -np.sin(theta)[None] * p.reshape(sh) + np.cos(theta)[None] * q.reshape(sh)
    return State(Field(grid, u), Field(grid, vel[None] * tan), 0.0)


def test_linear_exactness():
    """20 eigenmodes match the closed form to 1e-12 relative over [0, 10];
    the Schrodinger factorization residual stays below 1e-11.  < 10 s."""
    start = time.time()
    rng = np.random.default_rng(100)
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(1, 4))
        g = Grid(d, 32)
        kvec = rng.integers(1, 8, d).astype(float)
        ksq = float(np.sum(kvec ** 2))
        x = g.coords()
        phase = sum(k * xi for k, xi in zip(kvec, x))
        a, b = rng.standard_normal(2)
        s = State(Field(g, (a * np.cos(phase))[None]),
                  Field(g, (b * np.cos(phase))[None]), 0.0)
        for t in (0.1, 1.7, 10.0):
            adv = linear_flow(s, t)
            cu = a * math.cos(ksq * t) + b * math.sin(ksq * t) / ksq
            cv = -a * ksq * math.sin(ksq * t) + b * math.cos(ksq * t)
            scale = max(abs(a), abs(b), abs(a) * ksq)
            worst = max(worst,
                        np.max(np.abs(adv.u.values[0] - cu * np.cos(phase)))
                        / scale,
                        np.max(np.abs(adv.ut.values[0] - cv * np.cos(phase)))
                        / scale)
    assert worst < 1e-12

    g = Grid(2, 32)
    rng2 = np.random.default_rng(101)
    s0 = _small_sphere_state(g, 3, rng2, 0.2)
    axes = tuple(range(1, 1 + g.d))
    s0 = State(Field(g, s0.u.values - s0.u.values.mean(axis=axes,
                                                       keepdims=True)),
               Field(g, s0.ut.values - s0.ut.values.mean(axis=axes,
                                                         keepdims=True)), 0.0)
    for t in (0.1, 1.0, 5.0):
        assert schrodinger_factorization_check(s0, t) < 1e-11
    assert time.time() - start < 10.0


def test_null_form_identity():
    """Commutator and expanded forms of the bilinear right-hand side agree
    to 1e-8 relative on 10 random analytic blocks; the residual drops at
    least 12x when the time step halves.  < 60 s."""
    start = time.time()
    dims = [1, 1, 1, 1, 2, 2, 2, 2, 3, 3]
    sizes = {1: 32, 2: 16, 3: 8}
    for i, d in enumerate(dims):
        g = Grid(d, sizes[d])
        L = 3
        rng = np.random.default_rng(200 + i)
        T = rng.standard_normal((L, L, L))
        Q = BilinearFamily.constant(0.5 * (T + T.transpose(0, 2, 1)))
        errs = []
        for dt in (1e-2, 5e-3):
            rng2 = np.random.default_rng(300 + i)
            snaps = _analytic_block(g, L, 12, dt, rng2)
            blk = SpaceTimeBlock(g, 0.0, dt, snaps, window="none")
            _, v1 = null_form(blk, Q, form="commutator")
            _, v2 = null_form(blk, Q, form="expanded")
            errs.append(np.max(np.abs(v1 - v2)) / np.max(np.abs(v2)))
        assert errs[0] < 1e-8
        assert errs[0] / errs[1] > 12.0
    assert time.time() - start < 60.0


def test_sphere_specialization():
    """The intrinsic (projector-expansion) nonlinearity equals the closed
    sphere formula to 1e-9 on 10 random sphere-valued states.  < 30 s."""
    start = time.time()
    rng = np.random.default_rng(1000)
    plans = [(1, 128, None)] * 4 + [(2, 64, None)] * 4 + [(3, 32, 0.06)] * 2
    tgt = SphereTarget(3)
    for d, n, amp in plans:
        g = Grid(d, n)
        if amp is None:
            s = _sphere_state(g, 3, rng)
        else:
            s = _small_sphere_state(g, 3, rng, amp)
        a = sphere_nonlinearity(s).values
        b = general_nonlinearity(s, tgt).values
        assert np.max(np.abs(a - b)) < 1e-9
    assert time.time() - start < 30.0


def test_conservation_and_constraint():
    """d = 3, n = 32, sphere target, delta = 0.05, T = 1: relative energy
    drift and constraint drift each below 1e-5, and both shrink at least
    3.5x when dt halves.  < 5 min."""
    start = time.time()
    g = Grid(3, 32)
    # band-limited lowest-wavevector data so spatial truncation does not
    # mask the order-2 time discretization error
    s0 = generate_initial_data("plane-mode", g, 0.05, seed=44)
    dt0 = default_dt(g)
    edrifts, gdrifts = [], []
    for dt in (dt0, dt0 / 2):
        cfg = RunConfig(g, dt=dt, t_final=1.0, target=SphereTarget(3),
                        record_every=8)
        traj = evolve(cfg, s0)
        assert not traj.halted
        e = traj.energy
        edrifts.append(np.max(np.abs(e - e[0])) / e[0])
        gdrifts.append(np.max(traj.geometric_drift))
    assert edrifts[0] < 1e-5 and gdrifts[0] < 1e-5
    assert edrifts[0] / edrifts[1] > 3.5
    assert gdrifts[0] / gdrifts[1] > 3.5
    assert time.time() - start < 300.0


def test_picard_contraction():
    """For delta in {0.01, 0.02, 0.04} the iteration distances d_k decay
    geometrically for k = 2..6 (down to the roundoff floor), and the first
    contraction ratio scales linearly in delta within 30%.  < 10 min."""
    start = time.time()
    g = Grid(2, 16)
    r0s = []
    for delta in (0.01, 0.02, 0.04):
        s0 = generate_initial_data("geodesic-bump", g, delta, seed=12)
        cfg = RunConfig(g, dt=0.01, t_final=0.3, target=SphereTarget(3),
                        picard_iterations=7)
        res = picard_solve(cfg, s0)
        assert not res.halted
        floor = 1e-12 * res.d[0]
        for k in range(2, 7):
            assert res.d[k] < 0.5 * res.d[k - 1] or res.d[k] < floor
        r0s.append(res.r[0])
    for lo, hi in ((r0s[0], r0s[1]), (r0s[1], r0s[2])):
        assert abs(hi / lo - 2.0) < 0.6  # linear in delta within 30%
    assert time.time() - start < 600.0


def test_scaling_law():
    """The parabolic rescaling changes the energy by exactly lambda^{4-d}
    (to 1e-8) for lambda = 2 in d = 1..4; d = 4 leaves it invariant."""
    start = time.time()
    for d, n in [(1, 64), (2, 32), (3, 16), (4, 8)]:
        g = Grid(d, n)
        s = generate_initial_data("geodesic-bump", g, 0.3, seed=d)
        _, rep = parabolic_rescale(s, 2.0)
        expect = 2.0 ** (4 - d)
        assert abs(rep["ratio"] - expect) < 1e-8 * expect
        if d == 4:
            assert rep["expected"] == 1.0
            assert abs(rep["energy_after"] - rep["energy_before"]) \
                < 1e-10 * rep["energy_before"]
    assert time.time() - start < 10.0


def test_norm_machinery():
    """Partition reconstructions and the lateral collapse hold to 1e-10,
    the single-shell Besov identity is exact, free waves put >= 80% of
    their modulation mass in the lowest shells, and the lateral smoothing
    exponent regresses to 0.5 +- 0.15 over lambda in {2, 4, 8}.  < 2 min."""
    start = time.time()
    # dyadic and sector partitions
    for d, n in [(1, 64), (2, 32)]:
        g = Grid(d, n)
        mask = g.ksq() > 0
        total = sum(littlewood_paley_multiplier(g, 2.0 ** j)
                    for j in shell_range(g))
        assert np.max(np.abs(total[mask] - 1.0)) < 1e-10
        wsum = sum(sector_weights(g, direction_set(d)).values())
        assert np.max(np.abs(wsum[mask] - 1.0)) < 1e-10

    # lateral p = q collapse
    rng = np.random.default_rng(700)
    g2 = Grid(2, 16)
    data = rng.standard_normal((8, 1) + g2.shape)
    blk = SpaceTimeBlock(g2, 0.0, 0.05, data, window="none")
    plain = math.sqrt(0.05 * g2.cell_volume * np.sum(data ** 2))
    for e in direction_set(2):
        assert abs(lateral_norm(blk, e, 2, 2).value - plain) < 1e-10 * plain

    # single-shell Besov identity
    g1 = Grid(1, 128)
    coeffs = rng.standard_normal(g1.shape) + 1j * rng.standard_normal(g1.shape)
    mult = littlewood_paley_multiplier(g1, 2.0 ** 3)
    coeffs = np.where(mult == 1.0, coeffs, 0.0)
    f = Field(g1, np.fft.ifftn(coeffs * g1.npoints).real[None])
    l2 = math.sqrt(g1.cell_volume * np.sum(f.values ** 2))
    assert abs(besov_norm(f, 1.0, 1.0).value - 8.0 * l2) < 1e-10 * l2

    # free-wave modulation concentration
    gm = Grid(1, 32)
    k = 3
    dtm = 2 * math.pi / k ** 2 / 16
    x = gm.axis_coords()
    s = State(Field(gm, np.cos(k * x)[None]), Field.zeros(gm, 1), 0.0)
    prop = LinearPropagator(gm)
    snaps = np.array([linear_flow(s, j * dtm, propagator=prop).u.values
                      for j in range(128)])
    mblk = SpaceTimeBlock(gm, 0.0, dtm, snaps, window="hann")
    _, fracs = modulation_profile(mblk)
    assert np.sum(fracs[:2]) >= 0.80

    # lateral smoothing exponent for wave packets at frequency ~ 3*lambda
    gl = Grid(1, 256)
    xl = gl.axis_coords()
    propl = LinearPropagator(gl)
    lams = (2.0, 4.0, 8.0)
    vals = []
    for lam in lams:
        psi = np.exp(-((xl - math.pi) / 0.6) ** 2) * np.exp(1j * lam * 3 * xl)
        c = np.fft.fft(psi) / gl.n
        lap = np.fft.ifft(-gl.ksq() * c * gl.n)
        sp = State(Field(gl, psi.real[None]), Field(gl, -lap.imag[None]), 0.0)
        nt, T = 64, 0.1
        snaps = np.array([linear_flow(sp, j * T / nt, propagator=propl).u.values
                          for j in range(nt)])
        pblk = SpaceTimeBlock(gl, 0.0, T / nt, snaps, window="none")
        l2 = math.sqrt(gl.dx * np.sum(psi.real ** 2))
        vals.append(lateral_norm(pblk, Direction((1.0,)),
                                 math.inf, 2.0).value / l2)
    slope = -np.polyfit(np.log(lams), np.log(vals), 1)[0]
    assert abs(slope - 0.5) < 0.15
    assert vals[0] > vals[1] > vals[2]
    assert time.time() - start < 120.0


def test_admissibility_table():
    """The admissible-pair rule reproduces a 50-entry hand-checked table:
    2/p + d/q <= d/2, with (2, inf) excluded in d = 2.  < 1 s."""
    start = time.time()
    inf = math.inf
    table = [
        # d = 1, bound 1/2
        (inf, inf, 1, True), (4, inf, 1, True), (3, inf, 1, False),
        (inf, 2, 1, True), (inf, 3, 1, True), (8, 8, 1, True),
        (4, 4, 1, False), (2, 2, 1, False), (16, 6, 1, True),
        (5, inf, 1, True), (4, 8, 1, False), (inf, 1, 1, False),
        # d = 2, bound 1, (2, inf) excluded
        (2, inf, 2, False), (4, inf, 2, True), (inf, 2, 2, True),
        (inf, inf, 2, True), (2, 4, 2, False), (4, 8, 2, True),
        (3, 6, 2, True), (8, 4, 2, True), (2, 2, 2, False),
        (inf, 1, 2, False), (2.5, inf, 2, True), (10.0 / 3.0, 10, 2, True),
        (1, inf, 2, False),
        # d = 3, bound 3/2
        (2, inf, 3, True), (inf, 2, 3, True), (2, 12, 3, True),
        (2, 6, 3, True), (2, 4, 3, False), (4, 4, 3, True),
        (1, inf, 3, False), (inf, inf, 3, True), (2, 2, 3, False),
        (inf, 3, 3, True), (8, 3, 3, True), (1, 1, 3, False),
        (3, 12, 3, True),
        # d = 4, bound 2
        (2, inf, 4, True), (1, inf, 4, True), (inf, 2, 4, True),
        (2, 8, 4, True), (2, 4, 4, True), (2, 2, 4, False),
        (1, 8, 4, False), (4, 4, 4, True), (inf, 1, 4, False),
        (1, 4, 4, False), (inf, inf, 4, True), (3, 3, 4, True),
    ]
    assert len(table) == 50
    for p, q, d, expected in table:
        assert admissible(p, q, d) == expected, (p, q, d)
    assert time.time() - start < 1.0
