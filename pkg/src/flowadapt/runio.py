"""Run directory artifacts: binary state containers, CSV tables, plans.

The binary container holds a forward trajectory or a dual solution: a fixed
header (magic, version, kind, mesh hash, shapes), a JSON metadata blob, the
per-step arrays, optionally the full snapshot sequence, and a trailing CRC32
over everything after the magic.  All scalars are little-endian; floats are
written raw, so round-trips are bit-exact.
"""

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ArtifactError

MAGIC = b"FADT"
VERSION = 1
KIND_FORWARD = 0
KIND_DUAL = 1

_HEAD = struct.Struct("<IBQIIIB")  # version, kind, mesh_hash, n_vars, n_cells, n_steps, has_states


def write_states(path, kind, mesh_hash, times, dts, modes, newton_iters,
                 linear_iters, states=None, meta=None):
    """Write one state container; ``states`` may be omitted for trace runs."""
    times = np.asarray(times, dtype="<f8")
    dts = np.asarray(dts, dtype="<f8")
    modes = np.asarray(modes, dtype=np.uint8)
    newton_iters = np.asarray(newton_iters, dtype="<u4")
    linear_iters = np.asarray(linear_iters, dtype="<u4")
    n_steps = dts.shape[0]
    if times.shape[0] != n_steps + 1:
        raise ValueError("times must hold one more entry than dts")
    if states is not None:
        states = np.asarray(states, dtype="<f8")
        n_records, n_cells, n_vars = states.shape
        if n_records != n_steps + 1:
            raise ValueError("states must hold one snapshot per time node")
    else:
        n_cells = n_vars = 0
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    body = bytearray()
    body += _HEAD.pack(VERSION, kind, int(mesh_hash), n_vars, n_cells, n_steps,
                       1 if states is not None else 0)
    body += struct.pack("<I", len(blob)) + blob
    body += times.tobytes()
    body += dts.tobytes()
    body += modes.tobytes()
    body += newton_iters.tobytes()
    body += linear_iters.tobytes()
    if states is not None:
        body += states.tobytes()
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(body)
        fh.write(struct.pack("<I", crc))


def read_states(path, expect_kind=None, expect_mesh_hash=None):
    """Read a container back; returns a dict of arrays plus metadata.

    Raises ArtifactError on a bad magic, corrupted payload, wrong kind, or a
    mesh hash that does not match the mesh the caller is working on.
    """
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + _HEAD.size + 8 or raw[: len(MAGIC)] != MAGIC:
        raise ArtifactError(f"{path}: not a state container")
    body, (crc_stored,) = raw[len(MAGIC):-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise ArtifactError(f"{path}: checksum mismatch, file is corrupted")
    version, kind, mesh_hash, n_vars, n_cells, n_steps, has_states = _HEAD.unpack_from(body, 0)
    if version != VERSION:
        raise ArtifactError(f"{path}: container version {version}, expected {VERSION}")
    if expect_kind is not None and kind != expect_kind:
        names = {KIND_FORWARD: "forward trajectory", KIND_DUAL: "dual solution"}
        raise ArtifactError(
            f"{path}: holds a {names.get(kind, kind)}, expected a {names.get(expect_kind)}"
        )
    if expect_mesh_hash is not None and mesh_hash != int(expect_mesh_hash):
        raise ArtifactError(
            f"{path}: written on a different mesh (hash {mesh_hash} != {int(expect_mesh_hash)})"
        )
    off = _HEAD.size
    (blob_len,) = struct.unpack_from("<I", body, off)
    off += 4
    meta = json.loads(body[off : off + blob_len].decode()) if blob_len else {}
    off += blob_len

    def take(dtype, count, shape=None):
        nonlocal off
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=off).copy()
        off += arr.nbytes
        return arr if shape is None else arr.reshape(shape)

    out = {
        "kind": kind,
        "mesh_hash": mesh_hash,
        "meta": meta,
        "times": take("<f8", n_steps + 1),
        "dts": take("<f8", n_steps),
        "modes": take("u1", n_steps),
        "newton_iters": take("<u4", n_steps).astype(np.int64),
        "linear_iters": take("<u4", n_steps).astype(np.int64),
    }
    if has_states:
        out["states"] = take("<f8", (n_steps + 1) * n_cells * n_vars,
                             (n_steps + 1, n_cells, n_vars))
    else:
        out["states"] = None
    if off != len(body):
        raise ArtifactError(f"{path}: trailing bytes, file is corrupted")
    return out


def write_trajectory(path, traj, meta=None):
    md = dict(traj.meta)
    md.update(meta or {})
    md.setdefault("model", traj.model.name)
    write_states(path, KIND_FORWARD, traj.mesh.mesh_hash, traj.times, traj.dts,
                 traj.modes, traj.newton_iters, traj.linear_iters, traj.states, md)


def read_trajectory(path, mesh, model):
    from .forward import Trajectory

    data = read_states(path, expect_kind=KIND_FORWARD,
                       expect_mesh_hash=mesh.mesh_hash)
    return Trajectory(
        mesh=mesh, model=model, times=data["times"], dts=data["dts"],
        modes=data["modes"], states=data["states"],
        newton_iters=data["newton_iters"], linear_iters=data["linear_iters"],
        meta=data["meta"],
    )


# -- plain-text artifacts ----------------------------------------------------

MODE_NAMES = {0: "explicit", 1: "implicit"}
MODE_CODES = {v: k for k, v in MODE_NAMES.items()}


def write_plan(path, steps, meta=None):
    """Plan file: '# key = value' header lines, then 'dt mode' rows."""
    lines = []
    for key, val in sorted((meta or {}).items()):
        if isinstance(val, str):
            text = repr(val)
        elif isinstance(val, float):
            text = f"{val:.17g}"
        else:
            text = str(val)
        lines.append(f"# {key} = {text}")
    for dt, mode in steps:
        lines.append(f"{dt:.17g} {MODE_NAMES[int(mode)]}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_plan(path):
    """Parse a plan file back into (steps, meta)."""
    steps = []
    meta = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "=" in line:
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = _parse_scalar(val.strip())
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in MODE_CODES:
            raise ArtifactError(f"{path}:{ln}: expected 'dt explicit|implicit'")
        try:
            dt = float(parts[0])
        except ValueError:
            raise ArtifactError(f"{path}:{ln}: bad timestep {parts[0]!r}")
        if not (dt > 0.0 and np.isfinite(dt)):
            raise ArtifactError(f"{path}:{ln}: timestep must be positive and finite")
        steps.append((dt, MODE_CODES[parts[1]]))
    return steps, meta


def _parse_scalar(text):
    if text.startswith("'") and text.endswith("'"):
        return text[1:-1]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def write_csv(path, header, rows, meta=None):
    """Small numeric CSV writer; floats keep full precision.

    ``meta`` entries come first as '# key = value' lines so every table
    carries its format version and source-run identity.
    """
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return f"{v:.17g}"
        return str(v)

    lines = []
    for key, val in sorted((meta or {}).items()):
        text = repr(val) if isinstance(val, str) else fmt(val)
        lines.append(f"# {key} = {text}")
    lines.append(",".join(header))
    lines += [",".join(fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Read a CSV written by write_csv back into (header, data, meta)."""
    meta = {}
    body = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            if "=" in line:
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = _parse_scalar(val.strip())
            continue
        if line.strip():
            body.append(line)
    if not body:
        raise ArtifactError(f"{path}: empty table")
    header = body[0].split(",")
    try:
        data = np.array([[float(v) for v in line.split(",")] for line in body[1:]])
    except ValueError:
        raise ArtifactError(f"{path}: non-numeric table entry")
    if data.size == 0:
        data = data.reshape(0, len(header))
    return header, data, meta
