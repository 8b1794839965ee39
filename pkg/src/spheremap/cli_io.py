"""Configuration, persistence, and the batch command-line interface.

Snapshot files are a small checksummed raw binary format (little-endian
64-bit floats, 3 interleaved components for vector fields) so round-trips
are bit exact and trivially parseable.  Diagnostics tables are CSV with
locale-independent 17-significant-digit formatting; identical runs produce
byte-identical files.  All writes go through a temp file and an atomic
rename.
"""

from __future__ import annotations

import argparse
import configparser
import glob
import os
import struct
import sys
import zlib
from dataclasses import dataclass

import numpy as np

from .diagnostics import (
    SpaceTimeRecord,
    directional_norm,
    frame_bound_ratio,
    xk_norm,
)
from .evolution import SimConfig, run
from .gauge import (
    a_from_psi,
    derive_psi,
    residual_compatibility,
    residual_curvature,
    residual_psi0,
)
from .geometry import SphereField, coulomb_fix, divergence, projection_frame
from .initial_data import InitialDataSpec, generate_initial
from .spectral import Grid, l2_norm

__all__ = [
    "ConfigError",
    "SnapshotFormatError",
    "Snapshot",
    "save_snapshot",
    "load_snapshot",
    "emit_diagnostics_csv",
    "emit_series_csv",
    "parse_config",
    "gauge_identity_suite",
    "cli_main",
    "InitialDataSpec",
    "generate_initial",
]

_MAGIC = b"SPHMAP\x00\x01"
_VERSION = 1
_KIND_SCALAR = 1
_KIND_VECTOR3 = 3


class ConfigError(ValueError):
    """Malformed or unknown configuration input."""


class SnapshotFormatError(IOError):
    """Snapshot file is corrupt, truncated, or has the wrong format."""


@dataclass(frozen=True)
class Snapshot:
    grid: Grid
    time: float
    values: np.ndarray   # (n,...,n) real scalar or (3, n,...,n) vector


def _atomic_write(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def save_snapshot(values: np.ndarray, grid: Grid, time: float, path: str) -> None:
    """Write a field snapshot; kind (scalar/vector) is inferred from shape."""
    values = np.asarray(values)
    if values.shape == (3,) + grid.shape:
        kind = _KIND_VECTOR3
        payload = np.moveaxis(values, 0, -1)  # interleave components per point
    elif values.shape == grid.shape:
        kind = _KIND_SCALAR
        payload = values
    else:
        raise ValueError(f"values shape {values.shape} fits neither scalar nor vector layout")
    if np.iscomplexobj(payload):
        raise ValueError("snapshot payload must be real")
    payload_bytes = np.ascontiguousarray(payload, dtype="<f8").tobytes()

    header = bytearray()
    header += _MAGIC
    header += struct.pack("<III", _VERSION, kind, grid.d)
    header += struct.pack(f"<{grid.d}I", *((grid.n,) * grid.d))
    header += struct.pack("<ddQ", grid.length, float(time), payload.size)
    header += struct.pack("<I", zlib.crc32(payload_bytes))
    header += struct.pack("<I", zlib.crc32(bytes(header)))
    _atomic_write(path, bytes(header) + payload_bytes)


def load_snapshot(path: str, expect_grid: Grid | None = None) -> Snapshot:
    """Read a snapshot back; raises on corruption or on a grid mismatch."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 12 or blob[: len(_MAGIC)] != _MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic, not a snapshot file")
    off = len(_MAGIC)
    version, kind, d = struct.unpack_from("<III", blob, off)
    off += 12
    if version != _VERSION:
        raise SnapshotFormatError(f"{path}: unsupported snapshot version {version}")
    if kind not in (_KIND_SCALAR, _KIND_VECTOR3):
        raise SnapshotFormatError(f"{path}: unknown field kind {kind}")
    if not 1 <= d <= 8 or len(blob) < off + 4 * d + 8 + 8 + 8 + 8:
        raise SnapshotFormatError(f"{path}: truncated header")
    ns = struct.unpack_from(f"<{d}I", blob, off)
    off += 4 * d
    length, time, count = struct.unpack_from("<ddQ", blob, off)
    off += 24
    (payload_crc,) = struct.unpack_from("<I", blob, off)
    off += 4
    (header_crc,) = struct.unpack_from("<I", blob, off)
    if zlib.crc32(blob[: off]) != header_crc:
        raise SnapshotFormatError(f"{path}: header checksum mismatch")
    off += 4

    if len(set(ns)) != 1:
        raise SnapshotFormatError(f"{path}: anisotropic grids are not supported")
    grid = Grid(d=d, n=ns[0], length=length)
    expected_count = (3 if kind == _KIND_VECTOR3 else 1) * grid.n**grid.d
    if count != expected_count:
        raise SnapshotFormatError(f"{path}: payload length {count} != expected {expected_count}")
    payload_bytes = blob[off:]
    if len(payload_bytes) != 8 * count:
        raise SnapshotFormatError(f"{path}: truncated payload")
    if zlib.crc32(payload_bytes) != payload_crc:
        raise SnapshotFormatError(f"{path}: payload checksum mismatch")

    if expect_grid is not None and (grid.d, grid.n, grid.length) != (
        expect_grid.d,
        expect_grid.n,
        expect_grid.length,
    ):
        raise ValueError(
            f"{path}: grid mismatch, file has d={grid.d} n={grid.n} L={grid.length}, "
            f"expected d={expect_grid.d} n={expect_grid.n} L={expect_grid.length}"
        )

    flat = np.frombuffer(payload_bytes, dtype="<f8")
    if kind == _KIND_VECTOR3:
        values = np.moveaxis(flat.reshape(grid.shape + (3,)), -1, 0).copy()
    else:
        values = flat.reshape(grid.shape).copy()
    return Snapshot(grid, time, values)


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def emit_diagnostics_csv(rows, path: str) -> None:
    """Write diagnostics rows as CSV with a header naming every field."""
    from .diagnostics import DiagnosticsRow

    lines = [",".join(DiagnosticsRow.FIELDS)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row.as_tuple()))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def emit_series_csv(header, rows, path: str) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

_TRIPLE_KEYS = {"q", "u", "qprime"}

_SCHEMA = {
    "grid": {"d": int, "n": int, "length": float},
    "time": {"dt": "float_or_auto", "steps": int},
    "run": {
        "integrator": str,
        "cadence": int,
        "snapshot_every": int,
        "qprime": "triple_or_auto",
    },
    "initial": {
        "kind": str,
        "amplitude": float,
        "width": "float_or_auto",
        "mode_cutoff": int,
        "seed": int,
        "q": "triple",
        "u": "triple_or_auto",
        "profile": str,
    },
    "output": {"directory": str},
}


def _parse_triple(text: str):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"expected three comma-separated numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _convert(section: str, key: str, text: str):
    kind = _SCHEMA[section][key]
    try:
        if kind == "float_or_auto":
            return None if text.strip().lower() == "auto" else float(text)
        if kind == "triple_or_auto":
            return None if text.strip().lower() == "auto" else _parse_triple(text)
        if kind == "triple":
            return _parse_triple(text)
        return kind(text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {key} = {text!r}: {exc}") from exc


def parse_config(
    path: str,
    overrides=(),
    out_dir: str | None = None,
    seed: int | None = None,
) -> SimConfig:
    """Read a sectioned key=value config file into a SimConfig.

    Unknown sections or keys abort before any computation.  ``overrides``
    are ``section.key=value`` strings applied on top of the file; ``out_dir``
    and ``seed`` override the corresponding entries when given.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")

    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        section, key = section.strip(), key.strip()
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())

    values: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, text in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values.setdefault(section, {})[key] = _convert(section, key, text)

    gsec = values.get("grid", {})
    for required in ("d", "n"):
        if required not in gsec:
            raise ConfigError(f"[grid] {required} is required")
    grid = Grid(d=gsec["d"], n=gsec["n"], length=gsec.get("length", 2.0 * np.pi))

    isec = dict(values.get("initial", {}))
    if seed is not None:
        isec["seed"] = seed
    initial = InitialDataSpec(
        kind=isec.get("kind", "geodesic-bump"),
        amplitude=isec.get("amplitude", 0.05),
        width=isec.get("width"),
        mode_cutoff=isec.get("mode_cutoff", 2),
        seed=isec.get("seed", 0),
        q=isec.get("q", (0.0, 0.0, 1.0)),
        u=isec.get("u"),
        profile=isec.get("profile", "bump"),
    )

    tsec = values.get("time", {})
    rsec = values.get("run", {})
    osec = values.get("output", {})
    directory = out_dir if out_dir is not None else osec.get("directory")
    try:
        return SimConfig(
            grid=grid,
            initial=initial,
            dt=tsec.get("dt"),
            steps=tsec.get("steps", 0),
            integrator=rsec.get("integrator", "rk4-projected"),
            cadence=rsec.get("cadence", 1),
            snapshot_every=rsec.get("snapshot_every", 0),
            qprime=rsec.get("qprime"),
            out_dir=directory,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# verification helpers shared by the verify and sweep subcommands
# ---------------------------------------------------------------------------

def gauge_identity_suite(s: SphereField, qprime: np.ndarray | None = None) -> dict:
    """Residuals of the structural identities on one time slice.

    Returns compatibility, curvature and psi_0 residuals, the divergence of
    the Coulomb connection, and the L2 mismatch between the connection
    recovered from psi alone and the frame connection.
    """
    grid = s.grid
    frame, conn, _ = coulomb_fix(projection_frame(s, qprime))
    psi = derive_psi(frame)
    a_psi = a_from_psi(grid, psi).a
    cross = np.sqrt(sum(l2_norm(grid, a_psi[m] - conn.a[m]) ** 2 for m in range(grid.d)))
    return {
        "res_compatibility": residual_compatibility(grid, psi, conn.a),
        "res_curvature": residual_curvature(grid, psi, conn.a),
        "res_psi0": residual_psi0(frame, psi, conn.a),
        "res_cross": float(cross),
        "div_a": l2_norm(grid, divergence(grid, conn.a)),
    }


def _sphere_from_snapshot(snap: Snapshot, q: np.ndarray | None = None) -> SphereField:
    if snap.values.ndim != snap.grid.d + 1:
        raise ValueError("snapshot does not contain a vector field")
    if q is None:
        mean = snap.values.mean(axis=tuple(range(1, snap.grid.d + 1)))
        q = mean / np.linalg.norm(mean)
    return SphereField(snap.grid, snap.values, q=np.asarray(q, dtype=float))


# ---------------------------------------------------------------------------
# command line interface
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    config = parse_config(args.config, args.override, args.out, args.seed)
    record = run(config)
    last = record.rows[-1]
    print(f"completed {len(record.rows)} diagnostic rows, final t = {_fmt(last.t)}")
    print(f"energy = {_fmt(last.energy)}  l2_dist_q = {_fmt(last.l2_dist_q)}")
    if config.out_dir:
        print(f"outputs written to {config.out_dir}")
    if record.aborted:
        print(f"run aborted: {record.abort_reason}", file=sys.stderr)
        return 3
    return 0


def _cmd_verify(args) -> int:
    snap = load_snapshot(args.snapshot)
    q = _parse_triple(args.q) if args.q else None
    qp = _parse_triple(args.qprime) if args.qprime else None
    s = _sphere_from_snapshot(snap, q)
    suite = gauge_identity_suite(s, qp)
    for name, value in suite.items():
        print(f"{name} = {_fmt(value)}")
    return 0


def _load_record_dir(directory: str):
    paths = sorted(glob.glob(os.path.join(directory, "snapshot_*.bin")))
    if len(paths) < 2:
        raise ConfigError(f"{directory}: need at least two snapshots for a record")
    snaps = [load_snapshot(p) for p in paths]
    grid = snaps[0].grid
    for p, sn in zip(paths[1:], snaps[1:]):
        if (sn.grid.d, sn.grid.n, sn.grid.length) != (grid.d, grid.n, grid.length):
            raise ValueError(f"{p}: grid mismatch within record directory")
    times = np.array([sn.time for sn in snaps])
    return grid, times, snaps


def _cmd_norms(args) -> int:
    grid, times, snaps = _load_record_dir(args.dir)
    fields = []
    for sn in snaps:
        s = _sphere_from_snapshot(sn, _parse_triple(args.q) if args.q else None)
        if args.observable == "sminusq":
            diff = s.values - s.q.reshape((3,) + (1,) * grid.d)
            fields.append(np.sqrt(np.sum(diff**2, axis=0)))
        else:  # psi1
            frame, _, _ = coulomb_fix(projection_frame(s))
            fields.append(derive_psi(frame)[0])
    rec = SpaceTimeRecord(grid, times, np.stack(fields))

    results = []
    pq = {"1": 1.0, "2": 2.0, "inf": np.inf}
    value = directional_norm(rec, args.direction, pq[args.p], pq[args.q_exp])
    results.append((f"L^({args.p},{args.q_exp})_e{args.direction:+d}", value))
    print(f"{results[-1][0]} = {_fmt(value)}")
    if args.modulation_k is not None:
        xk = xk_norm(rec, args.modulation_k)
        results.append((f"X_{args.modulation_k}", xk))
        print(f"X_{args.modulation_k} = {_fmt(xk)}")
    if args.out:
        emit_series_csv(["norm", "value"], results, args.out)
    return 0


def _cmd_sweep(args) -> int:
    if "=" not in args.vary:
        raise ConfigError("--vary must be section.key=v1,v2,...")
    target, raw_values = args.vary.split("=", 1)
    swept = [v.strip() for v in raw_values.split(",") if v.strip()]
    if len(swept) < 2:
        raise ConfigError("--vary needs at least two values")

    rows = []
    suites = []
    for value in swept:
        config = parse_config(args.config, list(args.override) + [f"{target}={value}"],
                              out_dir=None, seed=args.seed)
        s0 = generate_initial(config.initial, config.grid)
        suite = gauge_identity_suite(s0, config.resolved_qprime())
        ratio = frame_bound_ratio(s0, config.resolved_qprime())
        suites.append(suite)
        rows.append((float(value), *suite.values(), ratio))
        printable = "  ".join(f"{k}={_fmt(v)}" for k, v in suite.items())
        print(f"{target} = {value}:  {printable}  frame_ratio={_fmt(ratio)}")

    for prev, cur, v_prev, v_cur in zip(suites, suites[1:], swept, swept[1:]):
        for key in ("res_compatibility", "res_curvature", "res_psi0", "res_cross"):
            if cur[key] > 0:
                print(f"ratio[{key}] {v_prev}->{v_cur} = {_fmt(prev[key] / cur[key])}")

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        header = [target, "res_compatibility", "res_curvature", "res_psi0",
                  "res_cross", "div_a", "frame_ratio"]
        emit_series_csv(header, rows, os.path.join(args.out, "sweep.csv"))
        print(f"summary written to {os.path.join(args.out, 'sweep.csv')}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spheremap",
        description="Pseudo-spectral lab for the sphere-valued Schrodinger map flow",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate per config file")
    p_run.add_argument("--config", required=True, help="path to the run config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="initial-data RNG seed")
    p_run.add_argument("--override", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="config override")
    p_run.set_defaults(func=_cmd_run)

    p_ver = sub.add_parser("verify", help="gauge-identity residual suite on a snapshot")
    p_ver.add_argument("snapshot", help="snapshot file")
    p_ver.add_argument("--q", default=None, help="base point, x,y,z (default: mean direction)")
    p_ver.add_argument("--qprime", default=None, help="frame direction, x,y,z")
    p_ver.set_defaults(func=_cmd_verify)

    p_nrm = sub.add_parser("norms", help="directional / modulation norms on a record")
    p_nrm.add_argument("--dir", required=True, help="run output directory with snapshots")
    p_nrm.add_argument("--observable", choices=("sminusq", "psi1"), default="sminusq")
    p_nrm.add_argument("--direction", type=int, default=1, help="signed axis, e.g. 1 or -2")
    p_nrm.add_argument("--p", choices=("1", "2", "inf"), default="2")
    p_nrm.add_argument("--q-exp", choices=("1", "2", "inf"), default="2",
                       help="inner exponent")
    p_nrm.add_argument("--q", default=None, help="base point x,y,z")
    p_nrm.add_argument("--modulation-k", type=int, default=None)
    p_nrm.add_argument("--out", default=None, help="CSV output path")
    p_nrm.set_defaults(func=_cmd_norms)

    p_swp = sub.add_parser("sweep", help="amplitude or resolution sweeps, summary CSV")
    p_swp.add_argument("--config", required=True)
    p_swp.add_argument("--vary", required=True, metavar="SECTION.KEY=V1,V2,...")
    p_swp.add_argument("--seed", type=int, default=None)
    p_swp.add_argument("--out", default=None, help="directory for sweep.csv")
    p_swp.add_argument("--override", action="append", default=[])
    p_swp.set_defaults(func=_cmd_sweep)
    return parser


def cli_main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SnapshotFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(cli_main())
