"""Reading and writing meshes, boundary data, fields, families and reports.

Floats are always written so that they re-parse bit-identically: text records
and CSV use 17 significant digits, JSON goes through orjson's shortest
round-trip representation.
"""
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import orjson
import pandas as pd
from pydantic import BaseModel

from quasilocal.mesh_core import MetricField, TriMesh
from quasilocal.quasilocal_energy import BoundaryData
from quasilocal.tools.constants import FLOAT_FORMAT, LOGGER_MAIN, SCHEMA_VERSION
from quasilocal.tools.errors import FormatError, InputError, QuasiLocalError

logger = logging.getLogger(LOGGER_MAIN)

JSON_OPTIONS = orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2


@dataclass(frozen=True, eq=False)
class MeshFile:
    """Contents of a mesh text file: faces plus edge lengths and/or vertex positions."""
    mesh: TriMesh
    lengths: np.ndarray | None
    positions: np.ndarray | None
    comments: tuple[str, ...] = ()

    def metric(self) -> MetricField:
        if self.lengths is not None:
            return MetricField(self.mesh, self.lengths, self.positions)
        if self.positions is None:
            raise InputError("mesh file carries neither edge lengths nor vertex positions")
        edges = self.mesh.edges
        lengths = np.linalg.norm(self.positions[edges[:, 0]] - self.positions[edges[:, 1]], axis=1)
        return MetricField(self.mesh, lengths, self.positions)


def _float(path, number: int, token: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise FormatError(path, number, f"'{token}' is not a number") from None
    if not np.isfinite(value):
        raise FormatError(path, number, f"'{token}' is not finite")
    return value


def _index(path, number: int, token: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise FormatError(path, number, f"'{token}' is not a vertex index") from None


def read_mesh(path: str | os.PathLike) -> MeshFile:
    """Parse `v x y z`, `f i j k`, `l e length` and `l i j length` records; `#` starts a comment.

    `l e length` names the canonical edge id e (vertex pairs i < j sorted
    lexicographically); `l i j length` names the edge by its endpoints.
    """
    faces, positions, comments = [], [], []
    by_id, by_pair = [], []
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith('#'):
                comments.append(stripped[1:].strip())
                continue
            tokens = stripped.split()
            match tokens[0]:
                case 'v' if len(tokens) == 4:
                    positions.append([_float(path, number, t) for t in tokens[1:]])
                case 'f' if len(tokens) == 4:
                    faces.append([_index(path, number, t) for t in tokens[1:]])
                case 'l' if len(tokens) == 3:
                    by_id.append((number, _index(path, number, tokens[1]), _float(path, number, tokens[2])))
                case 'l' if len(tokens) == 4:
                    pair = tuple(sorted(_index(path, number, t) for t in tokens[1:3]))
                    by_pair.append((number, pair, _float(path, number, tokens[3])))
                case 'l':
                    raise FormatError(path, number, f"record 'l' expects 2 or 3 values, got {len(tokens) - 1}")
                case 'v' | 'f':
                    raise FormatError(path, number, f"record '{tokens[0]}' expects 3 values, got {len(tokens) - 1}")
                case _:
                    raise FormatError(path, number, f"unknown record type '{tokens[0]}'")
    if not faces:
        raise FormatError(path, 0, "no face records")
    vertex_count = len(positions) if positions else int(np.max(faces)) + 1
    mesh = TriMesh(vertex_count, np.array(faces))
    edge_lengths = None
    if by_id or by_pair:
        ids = {tuple(edge): k for k, edge in enumerate(mesh.edges.tolist())}
        records = list(by_id)
        for number, pair, value in by_pair:
            if pair not in ids:
                raise FormatError(path, number, f"edge {pair} is not an edge of the mesh")
            records.append((number, ids[pair], value))
        edge_lengths = np.full(mesh.edge_count, np.nan)
        for number, e, value in records:
            if not 0 <= e < mesh.edge_count:
                raise FormatError(path, number, f"edge id {e} out of range 0..{mesh.edge_count - 1}")
            if not np.isnan(edge_lengths[e]):
                raise FormatError(path, number, f"edge {e} {tuple(mesh.edges[e].tolist())} has a second length")
            edge_lengths[e] = value
        missing = np.flatnonzero(np.isnan(edge_lengths))
        if len(missing):
            first = tuple(mesh.edges[missing[0]].tolist())
            raise FormatError(path, 0, f"{len(missing)} edges have no length, first {first}")
    logger.debug(f"read mesh {path}: {vertex_count} vertices, {mesh.face_count} faces")
    return MeshFile(mesh, edge_lengths, np.array(positions) if positions else None, tuple(comments))


def write_mesh(path: str | os.PathLike, mesh: TriMesh, lengths: np.ndarray | None = None,
               positions: np.ndarray | None = None, header: Iterable[str] = ()):
    lines = [f"# {text}" for text in header]
    if positions is not None:
        lines.extend(f"v {FLOAT_FORMAT % x} {FLOAT_FORMAT % y} {FLOAT_FORMAT % z}" for x, y, z in positions)
    lines.extend(f"f {i} {j} {k}" for i, j, k in mesh.faces.tolist())
    if lengths is not None:
        lines.extend(f"l {e} {FLOAT_FORMAT % value}" for e, value in enumerate(lengths))
    Path(path).write_text("\n".join(lines) + "\n")


def write_metric(path: str | os.PathLike, sigma: MetricField, header: Iterable[str] = ()):
    write_mesh(path, sigma.mesh, sigma.lengths, sigma.seed_positions, header)


def write_embedding(path: str | os.PathLike, X) -> None:
    header = [f"gauge {X.gauge.describe()}",
              f"residual {FLOAT_FORMAT % X.residual} iterations {X.iterations}"]
    write_mesh(path, X.mesh, positions=X.positions, header=header)


def write_json(path: str | os.PathLike, document: dict[str, Any]):
    Path(path).write_bytes(orjson.dumps({"schema_version": SCHEMA_VERSION, **document},
                                        default=_json_default, option=JSON_OPTIONS))


def read_json(path: str | os.PathLike) -> dict[str, Any]:
    try:
        document = orjson.loads(Path(path).read_bytes())
    except orjson.JSONDecodeError as exc:
        raise FormatError(path, exc.lineno, exc.msg) from None
    if not isinstance(document, dict):
        raise FormatError(path, 1, "document must be a JSON object")
    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise FormatError(path, 1, f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")
    return document


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, os.PathLike):
        return os.fspath(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_boundary(path: str | os.PathLike, data: BoundaryData, mesh_path: str | os.PathLike | None = None):
    """Boundary JSON plus its metric file; the mesh reference is stored relative to the JSON document."""
    path = Path(path)
    mesh_path = Path(mesh_path) if mesh_path is not None else path.with_suffix('.mesh')
    write_metric(mesh_path, data.sigma)
    write_json(path, {
        "mesh": os.path.relpath(mesh_path, path.parent),
        "normH": data.normH,
        "V": data.V,
        "time_symmetric": data.time_symmetric,
    })


def read_boundary(path: str | os.PathLike) -> BoundaryData:
    path = Path(path)
    document = read_json(path)
    for key in ("mesh", "normH"):
        if key not in document:
            raise FormatError(path, 1, f"missing key '{key}'")
    sigma = read_mesh(path.parent / document["mesh"]).metric()
    V = document.get("V")
    return BoundaryData(sigma, np.array(document["normH"], dtype=np.float64),
                        None if V is None else np.array(V, dtype=np.float64),
                        bool(document.get("time_symmetric", False)))


def write_field(path: str | os.PathLike, values: np.ndarray, name: str = "value"):
    frame = pd.DataFrame({"vertex": np.arange(len(values)), name: np.asarray(values, dtype=np.float64)})
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_field(path: str | os.PathLike, name: str, expected: int | None = None) -> np.ndarray:
    """Read a `vertex,value` CSV; the value column may carry any header."""
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise FormatError(path, 1, f"field '{name}': {exc}") from None
    if frame.shape[1] != 2 or frame.columns[0] != "vertex":
        raise FormatError(path, 1, f"field '{name}' must have columns vertex,<value>")
    if not np.array_equal(frame["vertex"].to_numpy(), np.arange(len(frame))):
        bad = int(np.flatnonzero(frame["vertex"].to_numpy() != np.arange(len(frame)))[0])
        raise FormatError(path, bad + 2, f"field '{name}': vertex ids must run 0, 1, 2, ...")
    values = frame.iloc[:, 1].to_numpy(dtype=np.float64)
    if expected is not None and len(values) != expected:
        raise InputError(f"field '{name}' has {len(values)} values, expected {expected}")
    return values


def read_family(path: str | os.PathLike):
    from quasilocal.critical_solver import DataFamily

    path = Path(path)
    document = read_json(path)
    members = document.get("members")
    if not isinstance(members, list) or not members:
        raise FormatError(path, 1, "'members' must be a non-empty list")
    parameters = [float(member["t"]) for member in members]
    data = [read_boundary(path.parent / member["data"]) for member in members]
    return DataFamily(np.array(parameters), tuple(data))


def write_family(path: str | os.PathLike, parameters: Iterable[float], data: Iterable[BoundaryData]):
    path = Path(path)
    members = []
    for k, (t, member) in enumerate(zip(parameters, data)):
        member_path = path.with_name(f"{path.stem}_{k:03d}.json")
        write_boundary(member_path, member)
        members.append({"t": float(t), "data": member_path.name})
    write_json(path, {"members": members})


def write_report(path: str | os.PathLike, report: BaseModel, **extra):
    write_json(path, {**report.model_dump(), **extra})


def write_diagnostics(path: str | os.PathLike, error: QuasiLocalError):
    write_json(path, error.diagnostics())


def write_table(path: str | os.PathLike, frame: pd.DataFrame):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def shape_table(shape) -> pd.DataFrame:
    """Per-vertex H₀, K, principal curvatures and normals."""
    half = shape.mean_curvature / 2
    spread = np.sqrt(np.maximum(half ** 2 - shape.gauss_curvature, 0.0))
    return pd.DataFrame({
        "vertex": np.arange(len(half)),
        "H0": shape.mean_curvature,
        "K": shape.gauss_curvature,
        "k1": half - spread,
        "k2": half + spread,
        "nx": shape.normals[:, 0],
        "ny": shape.normals[:, 1],
        "nz": shape.normals[:, 2],
    })
