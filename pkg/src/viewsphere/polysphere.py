"""Discrete viewpoint sample space: a Goldberg-style sphere of near-equidistant cells.

The sample space is built as the dual of a frequency-``nu`` class-I geodesic
icosahedron: every geodesic vertex becomes one cell (the center of a hexagonal
face, or one of the 12 pentagonal faces), and two cells are adjacent when
their vertices share a geodesic edge.  This yields exactly ``10*nu**2 + 2``
cells; ``nu = 10`` gives the 1002-point sphere used by the benchmark.
"""

from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Cell",
    "PolySphere",
    "SphereFormatError",
    "build_sphere",
]

_FORMAT_HEADER = "viewsphere-sphere v1"

# Dot products within this tolerance of the maximum count as ties for
# nearest_cell; ties resolve to the lowest cell id.
_NEAREST_TIE_EPS = 1e-12

_UNIT_NORM_TOL = 1e-12


class SphereFormatError(ValueError):
    """Raised when a serialized sphere is malformed or violates invariants."""


@dataclass(frozen=True)
class Cell:
    """One sample point of the discretized sphere."""

    id: int
    center: tuple[float, float, float]
    is_pentagon: bool


@dataclass(frozen=True)
class PolySphere:
    """Immutable discretized viewpoint sphere.

    ``centers`` is an (N, 3) read-only array of unit vectors; ``adjacency``
    holds sorted neighbor ids per cell.  All query methods are read-only and
    safe for unrestricted concurrent use.
    """

    frequency: int
    cells: tuple[Cell, ...]
    adjacency: tuple[tuple[int, ...], ...]
    centers: np.ndarray = field(repr=False)
    checksum: str = field(repr=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def pentagon_ids(self) -> tuple[int, ...]:
        return tuple(c.id for c in self.cells if c.is_pentagon)

    def neighbors(self, cell: int) -> tuple[int, ...]:
        self._check_id(cell)
        return self.adjacency[cell]

    def ring(self, origin: int, k: int) -> set[int]:
        """Cells at graph distance exactly ``k`` from ``origin``."""
        self._check_id(origin)
        if k < 0:
            raise ValueError(f"ring index must be >= 0, got {k}")
        if k == 0:
            return {origin}
        return self._bfs_levels(origin, k)[k]

    def disk(self, origin: int, k: int) -> set[int]:
        """Union of rings 0..k around ``origin``."""
        self._check_id(origin)
        if k < 0:
            raise ValueError(f"ring index must be >= 0, got {k}")
        levels = self._bfs_levels(origin, k)
        out: set[int] = set()
        for cells in levels:
            out |= cells
        return out

    def graph_distance(self, a: int, b: int) -> int:
        """BFS shortest-path length between two cells."""
        self._check_id(a)
        self._check_id(b)
        if a == b:
            return 0
        seen = {a}
        frontier = deque([(a, 0)])
        while frontier:
            cell, dist = frontier.popleft()
            for nb in self.adjacency[cell]:
                if nb == b:
                    return dist + 1
                if nb not in seen:
                    seen.add(nb)
                    frontier.append((nb, dist + 1))
        raise RuntimeError("adjacency graph is not connected")  # pragma: no cover

    def nearest_cell(self, direction: np.ndarray) -> int:
        """Cell whose center is closest in angle to ``direction``.

        The input is normalized internally; exact ties (dot products within
        1e-12 of the maximum) resolve to the lowest cell id.
        """
        d = np.asarray(direction, dtype=float).reshape(3)
        norm = float(np.linalg.norm(d))
        if not norm > 0.0 or not np.all(np.isfinite(d)):
            raise ValueError("direction must be a finite non-zero vector")
        dots = self.centers @ (d / norm)
        best = float(dots.max())
        return int(np.nonzero(dots >= best - _NEAREST_TIE_EPS)[0][0])

    def _bfs_levels(self, origin: int, max_k: int) -> list[set[int]]:
        levels: list[set[int]] = [{origin}]
        seen = {origin}
        current = {origin}
        for _ in range(max_k):
            nxt: set[int] = set()
            for cell in current:
                for nb in self.adjacency[cell]:
                    if nb not in seen:
                        seen.add(nb)
                        nxt.add(nb)
            levels.append(nxt)
            if not nxt:
                break
            current = nxt
        while len(levels) <= max_k:
            levels.append(set())
        return levels

    def _check_id(self, cell: int) -> None:
        if not isinstance(cell, (int, np.integer)) or not 0 <= cell < len(self.cells):
            raise ValueError(f"invalid cell id: {cell!r}")

    # -- serialization -----------------------------------------------------

    def serialize(self) -> str:
        """Canonical text form; also the checksum input."""
        lines = [
            _FORMAT_HEADER,
            f"frequency {self.frequency}",
            f"cells {self.n_cells}",
        ]
        for cell in self.cells:
            x, y, z = cell.center
            flag = "P" if cell.is_pentagon else "H"
            nbrs = " ".join(str(n) for n in self.adjacency[cell.id])
            lines.append(f"{cell.id} {x!r} {y!r} {z!r} {flag} {nbrs}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.serialize())

    @classmethod
    def load(cls, path) -> "PolySphere":
        with open(path, "r", encoding="ascii") as fh:
            text = fh.read()
        return cls.from_serialized(text)

    @classmethod
    def from_serialized(cls, text: str) -> "PolySphere":
        lines = text.splitlines()
        if not lines or lines[0] != _FORMAT_HEADER:
            raise SphereFormatError("unrecognized sphere file header")
        try:
            frequency = int(lines[1].split()[1])
            n = int(lines[2].split()[1])
        except (IndexError, ValueError) as exc:
            raise SphereFormatError(f"malformed sphere header: {exc}") from exc
        if len(lines) != 3 + n:
            raise SphereFormatError(
                f"expected {n} cell lines, found {len(lines) - 3}"
            )
        centers = np.empty((n, 3), dtype=float)
        pent = [False] * n
        adjacency: list[tuple[int, ...]] = [()] * n
        for row, line in enumerate(lines[3:]):
            parts = line.split()
            try:
                cid = int(parts[0])
                xyz = [float(parts[1]), float(parts[2]), float(parts[3])]
                flag = parts[4]
                nbrs = tuple(int(p) for p in parts[5:])
            except (IndexError, ValueError) as exc:
                raise SphereFormatError(f"malformed cell line {row}: {exc}") from exc
            if cid != row or flag not in ("P", "H"):
                raise SphereFormatError(f"malformed cell line {row}")
            centers[cid] = xyz
            pent[cid] = flag == "P"
            adjacency[cid] = nbrs
        sphere = _assemble(frequency, centers, adjacency, pent)
        _validate(sphere)
        return sphere


def build_sphere(frequency: int) -> PolySphere:
    """Build the frequency-``nu`` sphere: 10*nu**2 + 2 cells, 12 pentagons.

    Construction is deterministic: the base icosahedron is oriented with a
    vertex on +Y and -Y, corner cells get ids 0..11, then edge cells sorted
    by edge, then face-interior cells by face.
    """
    if not isinstance(frequency, (int, np.integer)) or frequency < 1:
        raise ValueError(f"frequency must be a positive integer, got {frequency!r}")
    nu = int(frequency)
    base_verts, base_faces = _icosahedron()
    n_cells = 10 * nu * nu + 2

    # Global id layout: corners, then edge subdivision points in sorted edge
    # order, then per-face interior points.  Integer keys keep shared points
    # exact; no floating-point deduplication is needed.
    edges = sorted({_ordered(a, b) for f in base_faces for a, b in _face_edges(f)})
    edge_base: dict[tuple[int, int], int] = {}
    next_id = 12
    for e in edges:
        edge_base[e] = next_id
        next_id += nu - 1
    interior_base: dict[int, int] = {}
    per_face_interior = max(0, (nu - 1) * (nu - 2) // 2)
    for fi in range(len(base_faces)):
        interior_base[fi] = next_id
        next_id += per_face_interior
    assert next_id == n_cells

    centers = np.zeros((n_cells, 3), dtype=float)
    for vid, v in enumerate(base_verts):
        centers[vid] = v
    for (a, b), base in edge_base.items():
        va, vb = base_verts[a], base_verts[b]
        for t in range(1, nu):
            centers[base + t - 1] = _project((va * (nu - t) + vb * t) / nu)

    adj_sets: list[set[int]] = [set() for _ in range(n_cells)]
    for fi, (fa, fb, fc) in enumerate(base_faces):
        va, vb, vc = base_verts[fa], base_verts[fb], base_verts[fc]
        interior_seq = 0

        def cell_id(i: int, j: int) -> int:
            if i == 0 and j == 0:
                return fa
            if i == nu and j == 0:
                return fb
            if i == 0 and j == nu:
                return fc
            if j == 0:
                return _edge_point(edge_base, fa, fb, i, nu)
            if i == 0:
                return _edge_point(edge_base, fa, fc, j, nu)
            if i + j == nu:
                return _edge_point(edge_base, fb, fc, j, nu)
            # interior: rows i=1..nu-2, j=1..nu-1-i
            return interior_base[fi] + _interior_index(i, j, nu)

        if per_face_interior:
            for i in range(1, nu - 1):
                for j in range(1, nu - i):
                    cid = interior_base[fi] + interior_seq
                    interior_seq += 1
                    centers[cid] = _project((va * (nu - i - j) + vb * i + vc * j) / nu)

        for i in range(nu):
            for j in range(nu - i):
                p0, p1, p2 = cell_id(i, j), cell_id(i + 1, j), cell_id(i, j + 1)
                _link(adj_sets, p0, p1, p2)
                if i + j <= nu - 2:
                    p3 = cell_id(i + 1, j + 1)
                    _link(adj_sets, p1, p3, p2)

    adjacency = [tuple(sorted(s)) for s in adj_sets]
    pent = [len(a) == 5 for a in adjacency]
    sphere = _assemble(nu, centers, adjacency, pent)
    _validate(sphere)
    return sphere


def _assemble(frequency, centers, adjacency, pent) -> PolySphere:
    centers = np.ascontiguousarray(centers, dtype=float)
    centers.flags.writeable = False
    cells = tuple(
        Cell(i, (float(centers[i, 0]), float(centers[i, 1]), float(centers[i, 2])), pent[i])
        for i in range(len(adjacency))
    )
    sphere = PolySphere(
        frequency=frequency,
        cells=cells,
        adjacency=tuple(adjacency),
        centers=centers,
        checksum="",
    )
    digest = hashlib.sha256(sphere.serialize().encode("ascii")).hexdigest()
    object.__setattr__(sphere, "checksum", digest)
    return sphere


def _validate(sphere: PolySphere) -> None:
    nu = sphere.frequency
    n = sphere.n_cells
    if nu < 1:
        raise SphereFormatError(f"frequency must be >= 1, got {nu}")
    if n != 10 * nu * nu + 2:
        raise SphereFormatError(f"cell count {n} != 10*{nu}^2+2")
    degrees = [len(a) for a in sphere.adjacency]
    n_pent = sum(1 for d in degrees if d == 5)
    if n_pent != 12 or any(d not in (5, 6) for d in degrees):
        raise SphereFormatError("sphere must have exactly 12 degree-5 cells, rest degree-6")
    for cell in sphere.cells:
        if cell.is_pentagon != (degrees[cell.id] == 5):
            raise SphereFormatError(f"pentagon flag mismatch at cell {cell.id}")
    for cid, nbrs in enumerate(sphere.adjacency):
        if cid in nbrs or len(set(nbrs)) != len(nbrs):
            raise SphereFormatError(f"bad neighbor list at cell {cid}")
        for nb in nbrs:
            if not 0 <= nb < n or cid not in sphere.adjacency[nb]:
                raise SphereFormatError(f"asymmetric adjacency at ({cid}, {nb})")
    norms = np.linalg.norm(sphere.centers, axis=1)
    if np.abs(norms - 1.0).max() > _UNIT_NORM_TOL:
        raise SphereFormatError("cell centers must be unit vectors")
    # connectivity
    seen = {0}
    frontier = deque([0])
    while frontier:
        for nb in sphere.adjacency[frontier.popleft()]:
            if nb not in seen:
                seen.add(nb)
                frontier.append(nb)
    if len(seen) != n:
        raise SphereFormatError("adjacency graph is not connected")


def _icosahedron() -> tuple[np.ndarray, list[tuple[int, int, int]]]:
    """Unit icosahedron with vertices 0 and 11 on the +Y/-Y polar axis."""
    lat_y = 1.0 / math.sqrt(5.0)
    ring_r = 2.0 / math.sqrt(5.0)
    verts = [np.array([0.0, 1.0, 0.0])]
    for i in range(5):
        a = 2.0 * math.pi * i / 5.0
        verts.append(np.array([ring_r * math.cos(a), lat_y, ring_r * math.sin(a)]))
    for i in range(5):
        a = 2.0 * math.pi * i / 5.0 + math.pi / 5.0
        verts.append(np.array([ring_r * math.cos(a), -lat_y, ring_r * math.sin(a)]))
    verts.append(np.array([0.0, -1.0, 0.0]))

    faces: list[tuple[int, int, int]] = []
    for i in range(5):
        u, u1 = 1 + i, 1 + (i + 1) % 5
        l, l1 = 6 + i, 6 + (i + 1) % 5
        faces.append((0, u, u1))
        faces.append((u, u1, l))
        faces.append((l, l1, u1))
        faces.append((11, l, l1))
    return np.array(verts), faces


def _face_edges(face):
    a, b, c = face
    return ((a, b), (b, c), (a, c))


def _ordered(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _edge_point(edge_base, a: int, b: int, t: int, nu: int) -> int:
    """Global id of the t-th subdivision point from vertex a toward b."""
    if a < b:
        return edge_base[(a, b)] + t - 1
    return edge_base[(b, a)] + (nu - t) - 1


def _interior_index(i: int, j: int, nu: int) -> int:
    # row-major over i=1..nu-2, j=1..nu-1-i
    offset = 0
    for row in range(1, i):
        offset += nu - 1 - row
    return offset + (j - 1)


def _link(adj_sets, a: int, b: int, c: int) -> None:
    adj_sets[a].add(b)
    adj_sets[a].add(c)
    adj_sets[b].add(a)
    adj_sets[b].add(c)
    adj_sets[c].add(a)
    adj_sets[c].add(b)


def _project(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)
