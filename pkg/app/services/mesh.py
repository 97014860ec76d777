"""
Triangulations of polygonal domains for P1 elements.

Text format, one record per line, '#' starts a comment:

    v <x> <y>
    t <i> <j> <k>      0-based, counterclockwise
    b <i> <j>          boundary edge, oriented along Γ
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from app.core.errors import DegenerateElement, InvalidInput, ParseError
from app.core.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges", np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2))

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def validate(self) -> "Mesh":
        n = self.n_vertices
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise InvalidInput("triangle references a vertex index out of range")
        if self.boundary_edges.size and (self.boundary_edges.min() < 0 or self.boundary_edges.max() >= n):
            raise InvalidInput("boundary edge references a vertex index out of range")

        areas = self.signed_areas()
        bad = np.flatnonzero(areas <= 0)
        if bad.size:
            raise DegenerateElement(int(bad[0]), float(areas[bad[0]]))

        directed = [tuple(e) for e in _directed_edges(self.triangles).tolist()]
        counts = Counter(tuple(sorted(e)) for e in directed)
        if any(c > 2 for c in counts.values()):
            raise InvalidInput("an edge is shared by more than two triangles")
        free = {e for e in directed if counts[tuple(sorted(e))] == 1}
        given = {tuple(e) for e in self.boundary_edges.tolist()}
        if given != free:
            raise InvalidInput(
                f"boundary edges do not match the free triangle edges with Γ orientation "
                f"({len(given)} given, {len(free)} free)"
            )
        outgoing = Counter(e[0] for e in given)
        incoming = Counter(e[1] for e in given)
        if any(c != 1 for c in outgoing.values()) or outgoing.keys() != incoming.keys() or any(
            c != 1 for c in incoming.values()
        ):
            raise InvalidInput("boundary edges do not form closed loops")
        return self


def _directed_edges(triangles: np.ndarray) -> np.ndarray:
    return np.vstack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])


def area(mesh: Mesh) -> float:
    return float(mesh.signed_areas().sum())


def perimeter(mesh: Mesh) -> float:
    d = mesh.vertices[mesh.boundary_edges[:, 1]] - mesh.vertices[mesh.boundary_edges[:, 0]]
    return float(np.linalg.norm(d, axis=1).sum())


def mesh_unit_square(n: int) -> Mesh:
    """Structured mesh of [0,1]², (n+1)² vertices, 2n² triangles."""
    if n < 1:
        raise InvalidInput("unit square mesh needs n >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.vstack([lower, upper])

    loop = np.concatenate([idx[0, :-1], idx[:-1, -1], idx[-1, :0:-1], idx[:0:-1, 0]])
    boundary = np.column_stack([loop, np.roll(loop, -1)])
    return Mesh(vertices, triangles, boundary)


def _project_to_unit_circle(points: np.ndarray) -> np.ndarray:
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def mesh_disk(level: int) -> Mesh:
    """Hexagon fan inscribed in the unit circle, refined ``level`` times with boundary projection."""
    if level < 0:
        raise InvalidInput("disk mesh level must be >= 0")
    angles = np.arange(6) * np.pi / 3
    vertices = np.vstack([[0.0, 0.0], np.column_stack([np.cos(angles), np.sin(angles)])])
    ring = np.arange(1, 7)
    triangles = np.column_stack([np.zeros(6, dtype=np.int64), ring, np.roll(ring, -1)])
    boundary = np.column_stack([ring, np.roll(ring, -1)])
    mesh = Mesh(vertices, triangles, boundary)
    for _ in range(level):
        mesh = mesh_refine(mesh, boundary_projection=_project_to_unit_circle)
    return mesh


def mesh_refine(mesh: Mesh, boundary_projection: Callable[[np.ndarray], np.ndarray] | None = None) -> Mesh:
    """Red refinement: every triangle splits into four through its edge midpoints."""
    T = mesh.n_triangles
    N = mesh.n_vertices
    edges = np.sort(_directed_edges(mesh.triangles), axis=1)
    unique, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    midpoints = 0.5 * (mesh.vertices[unique[:, 0]] + mesh.vertices[unique[:, 1]])

    edge_index = {tuple(e): N + k for k, e in enumerate(unique.tolist())}
    b_mid = np.array([edge_index[tuple(sorted(e))] for e in mesh.boundary_edges.tolist()], dtype=np.int64)
    if boundary_projection is not None and b_mid.size:
        midpoints[b_mid - N] = boundary_projection(midpoints[b_mid - N])

    a, b, c = mesh.triangles.T
    m_ab = N + inverse[:T]
    m_bc = N + inverse[T:2 * T]
    m_ca = N + inverse[2 * T:]
    children = np.vstack([
        np.column_stack([a, m_ab, m_ca]),
        np.column_stack([m_ab, b, m_bc]),
        np.column_stack([m_ca, m_bc, c]),
        np.column_stack([m_ab, m_bc, m_ca]),
    ])
    be = mesh.boundary_edges
    boundary = np.vstack([np.column_stack([be[:, 0], b_mid]), np.column_stack([b_mid, be[:, 1]])])
    logger.debug(f"Refined mesh: {N} -> {N + unique.shape[0]} vertices, {T} -> {4 * T} triangles")
    return Mesh(np.vstack([mesh.vertices, midpoints]), children, boundary)


def mesh_write(mesh: Mesh) -> str:
    lines = [f"# relforms mesh: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles"]
    lines += [f"v {x:.17g} {y:.17g}" for x, y in mesh.vertices.tolist()]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines += [f"b {i} {j}" for i, j in mesh.boundary_edges.tolist()]
    return "\n".join(lines) + "\n"


_ARITY = {"v": 2, "t": 3, "b": 2}


def mesh_read(text: str) -> Mesh:
    vertices, triangles, boundary = [], [], []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *fields = line.split()
        if tag not in _ARITY:
            raise ParseError(line_no, f"unknown record type {tag!r}")
        if len(fields) != _ARITY[tag]:
            raise ParseError(line_no, f"record {tag!r} expects {_ARITY[tag]} fields, got {len(fields)}")
        try:
            if tag == "v":
                vertices.append([float(x) for x in fields])
                if not np.all(np.isfinite(vertices[-1])):
                    raise ParseError(line_no, "non-finite coordinate")
            else:
                ids = [int(x) for x in fields]
                (triangles if tag == "t" else boundary).append(ids)
        except ValueError as e:
            if isinstance(e, ParseError):
                raise
            raise ParseError(line_no, f"malformed number in {line!r}") from e
    if not vertices or not triangles:
        raise ParseError(len(text.splitlines()), "mesh needs at least one vertex and one triangle")
    return Mesh(np.array(vertices), np.array(triangles), np.array(boundary).reshape(-1, 2)).validate()


def mesh_from_spec(spec: str) -> Mesh:
    """``square:<n>``, ``disk:<level>`` or ``file:<path>``."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "square":
            return mesh_unit_square(int(arg))
        if kind == "disk":
            return mesh_disk(int(arg))
    except ValueError as e:
        if isinstance(e, InvalidInput):
            raise
        raise InvalidInput(f"mesh spec {spec!r} needs an integer parameter") from e
    if kind == "file":
        try:
            return mesh_read(Path(arg).read_text())
        except OSError as e:
            raise InvalidInput(f"cannot read mesh file {arg!r}: {e}") from e
    raise InvalidInput(f"unknown mesh spec {spec!r}; expected square:<n>, disk:<level> or file:<path>")
