"""On-disk artifact formats.

* Field dump: one ASCII header line ``HJF1 dim=.. counts=.. mins=.. maxs=..
  periodic=..`` followed by the node values as row-major little-endian
  float64.
* Value-function dump: an ``HJT1 n=.. times=..`` index line followed by one
  field dump per time sample.
* Trajectory: whitespace-delimited text, one record per step
  ``t px py theta v omega dx dy dtheta``.
* Plan summaries and run manifests: line-delimited ``key=value`` text.

Everything is deterministic byte-for-byte given identical inputs.
"""

from __future__ import annotations

import numpy as np

from spp import grid as G
from spp.sim import Trajectory


class FormatError(ValueError):
    pass


def _fmt_floats(xs):
    return ",".join(repr(float(x)) for x in xs)


def dump_field(field: G.Field, fh) -> None:
    g = field.grid
    header = (f"HJF1 dim={g.dim} counts={','.join(str(c) for c in g.counts)} "
              f"mins={_fmt_floats(g.mins)} maxs={_fmt_floats(g.maxs)} "
              f"periodic={','.join('1' if p else '0' for p in g.periodic)}\n")
    fh.write(header.encode("ascii"))
    fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def load_field(fh) -> G.Field:
    header = _read_line(fh)
    parts = header.split()
    if not parts or parts[0] != "HJF1":
        raise FormatError(f"expected HJF1 header, got {header[:40]!r}")
    kv = dict(p.split("=", 1) for p in parts[1:])
    try:
        dim = int(kv["dim"])
        counts = tuple(int(c) for c in kv["counts"].split(","))
        mins = tuple(float(x) for x in kv["mins"].split(","))
        maxs = tuple(float(x) for x in kv["maxs"].split(","))
        periodic = tuple(c == "1" for c in kv["periodic"].split(","))
    except (KeyError, ValueError) as e:
        raise FormatError(f"bad HJF1 header: {e}") from e
    if len(counts) != dim:
        raise FormatError("counts length does not match dim")
    grid = G.make_grid(mins, maxs, counts, periodic)
    n = int(np.prod(counts))
    raw = fh.read(8 * n)
    if len(raw) != 8 * n:
        raise FormatError("truncated field payload")
    values = np.frombuffer(raw, dtype="<f8").reshape(counts).copy()
    return G.Field(grid, values)


def _read_line(fh) -> str:
    buf = bytearray()
    while True:
        ch = fh.read(1)
        if not ch:
            raise FormatError("unexpected end of file in header")
        if ch == b"\n":
            break
        buf.extend(ch)
    return buf.decode("ascii")


def dump_time_fields(tf: G.TimeField, fh) -> None:
    header = f"HJT1 n={len(tf.times)} times={_fmt_floats(tf.times)}\n"
    fh.write(header.encode("ascii"))
    for f in tf.fields:
        dump_field(f, fh)


def load_time_fields(fh) -> G.TimeField:
    header = _read_line(fh)
    parts = header.split()
    if not parts or parts[0] != "HJT1":
        raise FormatError(f"expected HJT1 header, got {header[:40]!r}")
    kv = dict(p.split("=", 1) for p in parts[1:])
    n = int(kv["n"])
    times = np.array([float(x) for x in kv["times"].split(",")])
    if len(times) != n:
        raise FormatError("times length does not match n")
    fields = [load_field(fh) for _ in range(n)]
    return G.TimeField(times, fields)


def save_field(field, path):
    with open(path, "wb") as fh:
        dump_field(field, fh)


def load_field_file(path):
    with open(path, "rb") as fh:
        return load_field(fh)


def save_time_fields(tf, path):
    with open(path, "wb") as fh:
        dump_time_fields(tf, fh)


def load_time_fields_file(path):
    with open(path, "rb") as fh:
        return load_time_fields(fh)


TRAJ_COLUMNS = "t px py theta v omega dx dy dtheta"


def dump_trajectory(traj: Trajectory, fh) -> None:
    fh.write(f"# {TRAJ_COLUMNS}\n")
    for k in range(len(traj.times)):
        row = [traj.times[k], *traj.states[k], *traj.controls[k], *traj.disturbances[k]]
        fh.write(" ".join(f"{x:.12g}" for x in row) + "\n")


def load_trajectory(fh) -> Trajectory:
    data = np.loadtxt(fh, ndmin=2)
    if data.shape[1] != 9:
        raise FormatError(f"trajectory record needs 9 columns, got {data.shape[1]}")
    return Trajectory(data[:, 0], data[:, 1:4], data[:, 4:6], data[:, 6:9])


def save_trajectory(traj, path):
    with open(path, "w") as fh:
        dump_trajectory(traj, fh)


def load_trajectory_file(path):
    with open(path) as fh:
        return load_trajectory(fh)


def plan_summary_lines(plans):
    """One line per vehicle: id, latest departure time, schedule, method."""
    lines = []
    for p in plans:
        lines.append(f"vehicle={p.vehicle.id} ldt={p.ldt:.6f} sta={p.vehicle.sta:.6f} "
                     f"method={p.method} feasible=1")
    return lines


def write_kv(path, pairs):
    with open(path, "w") as fh:
        for k, v in pairs:
            fh.write(f"{k}={v}\n")


def read_kv(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"bad manifest line {line!r}")
            k, v = line.split("=", 1)
            out[k] = v
    return out
