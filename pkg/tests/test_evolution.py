"""Nonlinear stepping, monitors, Picard iteration, parabolic rescaling."""

import numpy as np
import pytest

from biwave.evolution import (RunConfig, constraint_monitor, energy, evolve,
                              parabolic_rescale, picard_solve)
from biwave.geometry import SphereTarget
from biwave.grid import Field, Grid
from biwave.initial_data import generate_initial_data
from biwave.propagator import State, linear_flow
from biwave.spectral import derivative_field


def _pole_state(grid, ncomp=3):
    u = np.zeros((ncomp,) + grid.shape)
    u[0] = 1.0
    return State(Field(grid, u), Field.zeros(grid, ncomp), 0.0)


def test_run_config_validation():
    g = Grid(1, 16)
    with pytest.raises(ValueError):
        RunConfig(g, dt=-0.01, t_final=1.0)
    with pytest.raises(ValueError):
        RunConfig(g, dt=0.01, t_final=0.0)
    with pytest.raises(ValueError):
        RunConfig(g, dt=0.01, t_final=1.0, delta=-0.1)
    with pytest.raises(ValueError):
        RunConfig(g, dt=0.01, t_final=1.0, record_every=0)
    assert RunConfig(g, dt=0.01, t_final=0.1).n_steps() == 10


def test_energy_eigenmode_oracle():
    # u = sin(x), ut = 0: E = 1/2 int (u_xx)^2 = 1/2 int sin^2 = pi/2
    g = Grid(1, 64)
    x = g.axis_coords()
    s = State(Field(g, np.sin(x)[None]), Field.zeros(g, 1), 0.0)
    assert abs(energy(s) - np.pi / 2) < 1e-12
    # kinetic part: ut = cos(2x) adds 1/2 int cos^2 = pi/2
    s2 = State(s.u, Field(g, np.cos(2 * x)[None]), 0.0)
    assert abs(energy(s2) - np.pi) < 1e-12


def test_energy_matches_real_space_quadrature():
    rng = np.random.default_rng(50)
    g = Grid(2, 32)
    s = generate_initial_data("multi-bump", g, 0.2, seed=7)
    lap = derivative_field(s.u, "laplacian")
    quad = 0.5 * g.cell_volume * (np.sum(s.ut.values ** 2) +
                                  np.sum(lap.values ** 2))
    assert abs(energy(s) - quad) < 1e-10 * max(quad, 1.0)


def test_constraint_monitor_trivials():
    g = Grid(2, 16)
    tgt = SphereTarget(3)
    s = generate_initial_data("geodesic-bump", g, 0.1, seed=3)
    geo, tan = constraint_monitor(s, tgt)
    assert geo < 1e-13 and tan < 1e-13
    off = State(Field(g, 1.01 * s.u.values), s.ut, 0.0)
    geo2, _ = constraint_monitor(off, tgt)
    assert abs(geo2 - 0.01) < 1e-12


def test_zero_delta_stays_constant():
    g = Grid(1, 32)
    s0 = _pole_state(g)
    cfg = RunConfig(g, dt=0.01, t_final=0.1, target=SphereTarget(3))
    traj = evolve(cfg, s0)
    assert not traj.halted
    assert np.max(np.abs(traj.block.snapshots - s0.u.values[None])) < 1e-13
    assert np.max(traj.geometric_drift) < 1e-13


def test_evolve_matches_linear_flow_without_forcing():
    g = Grid(1, 32)
    s0 = generate_initial_data("plane-mode", g, 0.1, seed=2)
    cfg = RunConfig(g, dt=0.01, t_final=0.2, target=None)
    traj = evolve(cfg, s0)
    ref = linear_flow(s0, 0.2)
    assert np.max(np.abs(traj.final_state().u.values - ref.u.values)) < 1e-10
    assert np.max(np.abs(traj.final_state().ut.values - ref.ut.values)) < 1e-10


def test_small_data_run_conserves_energy():
    g = Grid(2, 16)
    s0 = generate_initial_data("geodesic-bump", g, 0.05, seed=1)
    cfg = RunConfig(g, dt=0.005, t_final=0.25, target=SphereTarget(3))
    traj = evolve(cfg, s0)
    assert not traj.halted
    e = traj.energy
    assert np.max(np.abs(e - e[0])) < 1e-4 * max(e[0], 1.0)
    assert np.max(traj.geometric_drift) < 1e-4
    assert np.max(traj.tangency_drift) < 1e-2


def test_renormalize_suppresses_geometric_drift():
    g = Grid(2, 16)
    s0 = generate_initial_data("geodesic-bump", g, 0.2, seed=4)
    base = RunConfig(g, dt=0.01, t_final=0.5, target=SphereTarget(3))
    renorm = RunConfig(g, dt=0.01, t_final=0.5, target=SphereTarget(3),
                       renormalize=True)
    t1 = evolve(base, s0)
    t2 = evolve(renorm, s0)
    assert np.max(t2.geometric_drift) < 1e-12
    assert np.max(t2.geometric_drift) <= np.max(t1.geometric_drift)


def test_record_every_strides_monitors():
    g = Grid(1, 16)
    s0 = _pole_state(g)
    cfg = RunConfig(g, dt=0.01, t_final=0.1, record_every=5,
                    target=SphereTarget(3))
    traj = evolve(cfg, s0)
    assert len(traj.times) == 3
    assert np.allclose(np.diff(traj.times), 0.05)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_is_flagged_not_raised():
    g = Grid(1, 16)
    s0 = _pole_state(g)
    huge = lambda s: Field(g, 1e200 * np.ones((3,) + g.shape))
    cfg = RunConfig(g, dt=0.01, t_final=1.0, target=SphereTarget(3))
    traj = evolve(cfg, s0, forcing=huge)
    assert traj.halted
    assert traj.halt_reason != ""


# ---------------------------------------------------------------------------
# Picard


def test_picard_zero_forcing_is_exact():
    # with Q = 0 the second iterate is already the fixed point: d_1 = 0
    g = Grid(1, 32)
    s0 = generate_initial_data("plane-mode", g, 0.1, seed=5)
    cfg = RunConfig(g, dt=0.02, t_final=0.1, target=None,
                    picard_iterations=3)
    res = picard_solve(cfg, s0)
    assert res.d[0] > 0
    assert res.d[1] < 1e-12 * res.d[0]


def test_picard_contracts_for_small_data():
    g = Grid(2, 16)
    s0 = generate_initial_data("geodesic-bump", g, 0.02, seed=6)
    cfg = RunConfig(g, dt=0.02, t_final=0.2, target=SphereTarget(3),
                    picard_iterations=5)
    res = picard_solve(cfg, s0)
    assert not res.halted
    floor = 1e-12 * max(res.d[0], 1.0)
    for k in range(1, len(res.d)):
        assert res.d[k] < 0.5 * res.d[k - 1] or res.d[k] < floor


def test_picard_first_ratio_linear_in_delta():
    g = Grid(1, 32)
    ratios = []
    for delta in (0.01, 0.02):
        s0 = generate_initial_data("geodesic-bump", g, delta, seed=8)
        cfg = RunConfig(g, dt=0.02, t_final=0.2, target=SphereTarget(3),
                        picard_iterations=2)
        res = picard_solve(cfg, s0)
        ratios.append(res.r[0])
    assert abs(ratios[1] / ratios[0] - 2.0) < 0.2


# ---------------------------------------------------------------------------
# rescaling


def test_rescale_energy_ratios():
    for d, n, lam, expect in [(1, 32, 2.0, 8.0), (2, 16, 2.0, 4.0),
                              (3, 8, 2.0, 2.0), (4, 8, 2.0, 1.0),
                              (1, 32, 4.0, 64.0)]:
        g = Grid(d, n)
        s = generate_initial_data("geodesic-bump", g, 0.3, seed=d)
        out, rep = parabolic_rescale(s, lam)
        assert abs(rep["ratio"] - expect) < 1e-8 * expect
        assert rep["expected"] == expect
        assert out.grid.box == pytest.approx(g.box / lam)
        # sample values carried over, velocity scaled by lam^2
        assert np.array_equal(out.u.values, s.u.values)
        assert np.allclose(out.ut.values, lam ** 2 * s.ut.values)


def test_rescale_rejects_non_dyadic():
    g = Grid(1, 16)
    s = _pole_state(g)
    with pytest.raises(ValueError):
        parabolic_rescale(s, 3.0)
