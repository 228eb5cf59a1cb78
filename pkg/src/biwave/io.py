"""File formats: field snapshots, run configs, CSV output.

Snapshot layout (all little-endian):
    magic   4 bytes   b"BWM1"
    d       uint32    spatial dimension
    n       uint32    points per axis
    box     float64   box side length
    L       uint32    number of components
    time    float64   simulation time
    values  L * n^d float64, component-major, row-major per component

A State file is two snapshot records back to back (u then ut, same time).

Configs are flat ``key = value`` text with ``[section]`` headers; blank
lines and ``#`` comments are ignored.  Floats print with 17 significant
digits everywhere for byte-stable regressions.
"""

import configparser
import io as _io
import struct

import numpy as np

from .grid import Field, Grid
from .polymap import PolyMap
from .propagator import State

MAGIC = b"BWM1"
_HEADER = struct.Struct("<4sIIdId")

FLOAT_FMT = "%.17g"


def fmt_float(x):
    return FLOAT_FMT % float(x)


# ---------------------------------------------------------------------------
# snapshots


def write_field(fh, f: Field, time=0.0):
    grid = f.grid
    L = f.values.shape[0]
    fh.write(_HEADER.pack(MAGIC, grid.d, grid.n, grid.box, L, float(time)))
    fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(fh):
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ValueError("truncated snapshot header")
    magic, d, n, box, L, time = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    grid = Grid(int(d), int(n), float(box))
    count = L * grid.npoints
    payload = fh.read(count * 8)
    if len(payload) != count * 8:
        raise ValueError("truncated snapshot payload")
    values = np.frombuffer(payload, dtype="<f8").copy()
    return Field(grid, values.reshape((L,) + grid.shape)), float(time)


def save_state(path, s: State):
    with open(path, "wb") as fh:
        write_field(fh, s.u, s.time)
        write_field(fh, s.ut, s.time)


def load_state(path) -> State:
    with open(path, "rb") as fh:
        u, time = read_field(fh)
        ut, _ = read_field(fh)
    return State(u, ut, time)


# ---------------------------------------------------------------------------
# configuration

DEFAULT_CONFIG = {
    "grid": {"d": "2", "n": "16", "box": fmt_float(2.0 * np.pi)},
    "target": {"kind": "sphere", "components": "3", "eps": "0",
               "series_order": "6"},
    "integrator": {"dt": "auto", "t_final": "0.5", "safety": "1"},
    "data": {"kind": "geodesic-bump", "delta": "0.05"},
    "run": {"record_every": "1", "picard_iterations": "6",
            "renormalize": "off"},
}


def parse_config(text):
    """Parse flat key = value config text into nested dicts (strings)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string(text)
    out = {sec: dict(DEFAULT_CONFIG.get(sec, {})) for sec in DEFAULT_CONFIG}
    for sec in cp.sections():
        out.setdefault(sec, {})
        for key, val in cp.items(sec):
            out[sec][key] = val.strip()
    return out


def serialize_config(cfg):
    lines = []
    for sec in sorted(cfg):
        lines.append(f"[{sec}]")
        for key in sorted(cfg[sec]):
            lines.append(f"{key} = {cfg[sec][key]}")
        lines.append("")
    return "\n".join(lines)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def build_grid(cfg) -> Grid:
    g = cfg["grid"]
    return Grid(int(g["d"]), int(g["n"]), float(g["box"]))


def build_target(cfg):
    from .geometry import PerturbedSphereTarget, SphereTarget

    t = cfg["target"]
    L = int(t["components"])
    if t["kind"] == "sphere":
        return SphereTarget(L)
    if t["kind"] == "perturbed-sphere":
        eps = float(t["eps"])
        poly = _parse_poly(t, L)
        return PerturbedSphereTarget(L, eps, poly,
                                     series_order=int(t["series_order"]))
    raise ValueError(f"unknown target kind {t['kind']!r}")


def _parse_poly(t, L):
    """Perturbation polynomial from keys 'poly.<alpha>' = comma floats.

    <alpha> is the multi-index as underscore-joined integers, e.g.
    poly.2_0_0 = 0.1, -0.2, 0 for the x_1^2 term of an L = 3 map.
    """
    poly = PolyMap(L, L)
    for key, val in t.items():
        if not key.startswith("poly."):
            continue
        alpha = tuple(int(s) for s in key[len("poly."):].split("_"))
        if len(alpha) != L:
            raise ValueError(f"multi-index {alpha} has wrong length")
        coeffs = np.array([float(s) for s in val.split(",")])
        if coeffs.size != L:
            raise ValueError(f"coefficient vector for {alpha} has wrong length")
        poly.coeffs[alpha] = coeffs
    return poly


def build_run_config(cfg, grid=None, target=None):
    from .evolution import RunConfig
    from .propagator import default_dt

    grid = grid if grid is not None else build_grid(cfg)
    target = target if target is not None else build_target(cfg)
    integ = cfg["integrator"]
    dt = integ["dt"]
    if dt == "auto":
        dt_val = default_dt(grid, float(integ.get("safety", "1")))
    else:
        dt_val = float(dt)
    run = cfg["run"]
    return RunConfig(
        grid=grid,
        dt=dt_val,
        t_final=float(integ["t_final"]),
        delta=float(cfg["data"]["delta"]),
        record_every=int(run["record_every"]),
        picard_iterations=int(run["picard_iterations"]),
        renormalize=run["renormalize"].lower() in ("on", "true", "1", "yes"),
        seed=0,
        target=target,
        data_kind=cfg["data"]["kind"],
    )


# ---------------------------------------------------------------------------
# CSV output


def write_csv(path, header, rows):
    """Plain CSV with floats at 17 significant digits."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [fmt_float(c) if isinstance(c, float) or
                     isinstance(c, np.floating) else str(c) for c in row]
            fh.write(",".join(cells) + "\n")


def monitors_csv(path, traj):
    rows = zip(traj.times, traj.energy, traj.geometric_drift,
               traj.tangency_drift, traj.besov)
    write_csv(path, ["time", "energy", "geometric_drift", "tangency_drift",
                     "besov"], [tuple(float(c) for c in r) for r in rows])


def picard_csv(path, result):
    rows = []
    for k, dk in enumerate(result.d):
        rk = float(result.r[k]) if k < len(result.r) else float("nan")
        rows.append((k, float(dk), rk))
    write_csv(path, ["k", "d_k", "r_k"], rows)
