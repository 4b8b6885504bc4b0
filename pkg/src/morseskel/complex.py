"""
Simplicial 2-skeletons over which the skeletonization runs.

A :class:`Complex2` holds vertices (position + density), edges and
triangles.  Complexes come from three places:

* :func:`build_grid_complex` triangulates the supra-threshold grid points of
  a :class:`DensityVolume` with a fixed Freudenthal (Kuhn) split of each
  unit cube along its ``(0,0,0) -> (1,1,1)`` diagonal;
* :func:`load_complex` reads an arbitrary complex from a text file;
* the tiling merge step assembles one from per-tile skeletons.

Volumes are stored as ``(nz, ny, nx)`` arrays so that the flat order is
x-fastest, matching the raw file layout.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)

__all__ = [
    "ComplexError",
    "DensityVolume",
    "Complex2",
    "build_grid_complex",
    "gaussian_smooth",
    "load_complex",
    "save_complex",
    "load_volume",
    "save_volume",
    "load_points",
    "rasterize_points",
    "EDGE_OFFSETS",
    "TRIANGLE_OFFSETS",
]


class ComplexError(ValueError):
    """Invalid volume, complex, or complex file."""


# -----------------------------------------------------------------------------
# Cube template
# -----------------------------------------------------------------------------
# Every simplex of the Freudenthal triangulation is p + {0, a, b, ...} with
# 0 < a < b < ... a chain of 0/1 offset vectors.  Only chains of length <= 3
# (edges and triangles) are emitted.
_UNIT = [np.array(o, dtype=np.int64) for o in itertools.product((0, 1), repeat=3)][1:]


def _below(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(a <= b) and np.any(a < b))


EDGE_OFFSETS = np.array([u for u in _UNIT], dtype=np.int64)  # (7, 3) xyz
TRIANGLE_OFFSETS = np.array(
    [(a, b) for a in _UNIT for b in _UNIT if _below(a, b)], dtype=np.int64
)  # (12, 2, 3) xyz


# -----------------------------------------------------------------------------
# Volumes
# -----------------------------------------------------------------------------
@dataclass
class DensityVolume:
    """
    Scalar density on a regular grid.

    Parameters
    ----------
    values : (nz, ny, nx) array
        Density per grid point; x varies fastest in memory.  May be a
        ``np.memmap`` for volumes that do not fit in memory.
    spacing : (sx, sy, sz)
        Physical size of one voxel along each axis.
    origin : (ox, oy, oz) int
        Voxel offset of ``values[0, 0, 0]`` inside a larger (global) grid.
        Non-zero only for tiles.
    """

    values: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self) -> None:
        if self.values.ndim != 3:
            raise ComplexError(f"volume must be 3-D, got shape {self.values.shape}")
        if min(self.values.shape) <= 0:
            raise ComplexError(f"volume dims must be positive, got {self.dims}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise ComplexError(f"spacing must be 3 positive reals, got {self.spacing}")
        self.origin = tuple(int(o) for o in self.origin)

    @classmethod
    def from_flat(cls, values, dims, spacing=(1.0, 1.0, 1.0)) -> "DensityVolume":
        """Build from an x-fastest flat array and ``(nx, ny, nz)`` dims."""
        nx, ny, nz = (int(d) for d in dims)
        values = np.asarray(values, dtype=np.float64)
        if nx <= 0 or ny <= 0 or nz <= 0:
            raise ComplexError(f"volume dims must be positive, got {dims}")
        if values.size != nx * ny * nz:
            raise ComplexError(
                f"values length {values.size} does not match dims {nx}x{ny}x{nz}"
            )
        return cls(values.reshape(nz, ny, nx), spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.values.shape
        return nx, ny, nz


def save_volume(volume: DensityVolume, path) -> None:
    """Write ``path`` (float32 LE, x-fastest) plus the ``.hdr`` sidecar."""
    path = Path(path)
    np.ascontiguousarray(volume.values, dtype="<f4").tofile(path)
    nx, ny, nz = volume.dims
    sx, sy, sz = volume.spacing
    path.with_suffix(".hdr").write_text(
        f"dims {nx} {ny} {nz}\nspacing {sx!r} {sy!r} {sz!r}\n"
    )


def _read_header(path: Path) -> tuple[tuple[int, int, int], tuple[float, float, float]]:
    hdr = path.with_suffix(".hdr")
    if not hdr.exists():
        raise ComplexError(f"missing volume header {hdr}")
    dims, spacing = None, (1.0, 1.0, 1.0)
    for lineno, line in enumerate(hdr.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        try:
            if key == "dims" and len(rest) == 3:
                dims = tuple(int(r) for r in rest)
            elif key == "spacing" and len(rest) == 3:
                spacing = tuple(float(r) for r in rest)
            else:
                raise ValueError
        except ValueError:
            raise ComplexError(f"{hdr}:{lineno}: bad header line {line!r}") from None
    if dims is None:
        raise ComplexError(f"{hdr}: no 'dims' line")
    return dims, spacing


def load_volume(path, mmap: bool = False) -> DensityVolume:
    """Read a raw float32 volume.  ``mmap=True`` keeps it on disk."""
    path = Path(path)
    (nx, ny, nz), spacing = _read_header(path)
    if nx <= 0 or ny <= 0 or nz <= 0:
        raise ComplexError(f"volume dims must be positive, got {(nx, ny, nz)}")
    expected = nx * ny * nz * 4
    if path.stat().st_size != expected:
        raise ComplexError(
            f"{path}: size {path.stat().st_size} bytes, header implies {expected}"
        )
    if mmap:
        values = np.memmap(path, dtype="<f4", mode="r", shape=(nz, ny, nx))
    else:
        values = np.fromfile(path, dtype="<f4").astype(np.float64).reshape(nz, ny, nx)
    return DensityVolume(values, spacing)


def load_points(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``p x y z density`` lines; returns ``(points (n,3), density (n,))``."""
    pts, dens = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "p" or len(parts) != 5:
            raise ComplexError(f"{path}:{lineno}: expected 'p x y z density'")
        try:
            x, y, z, d = (float(v) for v in parts[1:])
        except ValueError:
            raise ComplexError(f"{path}:{lineno}: non-numeric field") from None
        pts.append((x, y, z))
        dens.append(d)
    return np.array(pts, dtype=np.float64).reshape(-1, 3), np.array(dens, dtype=np.float64)


def rasterize_points(points, density, spacing=(1.0, 1.0, 1.0)) -> DensityVolume:
    """
    Max-combine a point cloud onto a grid.

    Each point goes to the nearest grid node ``round(p / spacing)``; the grid
    spans the bounding box of those nodes.  Empty voxels get 0.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    density = np.asarray(density, dtype=np.float64)
    if len(points) == 0:
        raise ComplexError("empty point cloud")
    idx = np.rint(points / np.asarray(spacing, dtype=np.float64)).astype(np.int64)
    lo = idx.min(axis=0)
    idx -= lo
    nx, ny, nz = idx.max(axis=0) + 1
    values = np.full((nz, ny, nx), -np.inf)
    np.maximum.at(values, (idx[:, 2], idx[:, 1], idx[:, 0]), density)
    values[np.isneginf(values)] = 0.0
    return DensityVolume(values, spacing, origin=tuple(int(v) for v in lo))


def gaussian_smooth(
    volume: DensityVolume,
    sigma: float = 1.0,
    radius: int = 2,
    *,
    physical: bool = False,
) -> DensityVolume:
    """
    Normalized Gaussian average over the clipped ``(2r+1)^3`` neighborhood.

    Weights are ``exp(-d^2 / 2 sigma^2)`` with ``d`` in voxel units (or in
    physical units when ``physical=True``), renormalized over the in-bounds
    samples so constant fields are fixed points.  The kernel is separable,
    so the sum and the normalizer are both computed axis by axis.
    """
    if sigma <= 0:
        raise ComplexError(f"sigma must be > 0, got {sigma}")
    if radius < 1:
        raise ComplexError(f"radius must be >= 1, got {radius}")
    out = np.asarray(volume.values, dtype=np.float64)
    norm = np.ones(1)
    offs = np.arange(-radius, radius + 1, dtype=np.float64)
    # array axes are (z, y, x); spacing is (x, y, z)
    for axis, step in zip((2, 1, 0), volume.spacing):
        d = offs * step if physical else offs
        w = np.exp(-(d**2) / (2.0 * sigma**2))
        out = ndimage.correlate1d(out, w, axis=axis, mode="constant", cval=0.0)
        n = out.shape[axis]
        ones = ndimage.correlate1d(np.ones(n), w, mode="constant", cval=0.0)
        shape = [1, 1, 1]
        shape[axis] = n
        norm = norm * ones.reshape(shape)
    return DensityVolume(out / norm, volume.spacing, volume.origin)


# -----------------------------------------------------------------------------
# Complex
# -----------------------------------------------------------------------------
def _csr(n_rows: int, rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(rows, kind="stable")
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return np.cumsum(indptr), cols[order].astype(np.int64)


@dataclass
class Complex2:
    """
    A simplicial 2-complex with a density per vertex.

    Edges and triangles are stored with ascending vertex indices and sorted
    lexicographically, so the index of a simplex is canonical.  Closure and
    uniqueness are checked on construction.

    ``grid_coords`` (optional) carries the integer voxel coordinates of each
    vertex for complexes cut from a grid; tiling uses them as global keys.
    """

    positions: np.ndarray
    density: np.ndarray
    edges: np.ndarray
    triangles: np.ndarray
    grid_coords: np.ndarray | None = None
    check: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.density = np.asarray(self.density, dtype=np.float64).reshape(-1)
        self.edges = np.sort(np.asarray(self.edges, dtype=np.int64).reshape(-1, 2), axis=1)
        self.triangles = np.sort(
            np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3), axis=1
        )
        if self.grid_coords is not None:
            self.grid_coords = np.asarray(self.grid_coords, dtype=np.int64).reshape(-1, 3)
        n = len(self.positions)
        if len(self.density) != n:
            raise ComplexError("density length differs from vertex count")
        if len(self.edges):
            self.edges = self.edges[np.lexsort(self.edges.T[::-1])]
        if len(self.triangles):
            self.triangles = self.triangles[np.lexsort(self.triangles.T[::-1])]
        if self.check:
            self._validate()

    def _validate(self) -> None:
        n = self.n_vertices
        for name, s in (("edge", self.edges), ("triangle", self.triangles)):
            if len(s) == 0:
                continue
            if s.min() < 0 or s.max() >= n:
                raise ComplexError(f"{name} references a vertex outside 0..{n - 1}")
            if np.any(s[:, 1:] == s[:, :-1]):
                raise ComplexError(f"degenerate {name} with repeated vertex")
            if np.any(np.all(s[1:] == s[:-1], axis=1)):
                dup = s[1:][np.all(s[1:] == s[:-1], axis=1)][0]
                raise ComplexError(f"duplicate {name} {tuple(int(v) for v in dup)}")
        if len(self.triangles):
            missing = self._find_edges(self.triangles[:, [0, 1, 0, 2, 1, 2]].reshape(-1, 2))
            if np.any(missing < 0):
                k = int(np.flatnonzero(missing < 0)[0])
                bad = self.triangles[k // 3]
                pair = self.triangles[:, [0, 1, 0, 2, 1, 2]].reshape(-1, 2)[k]
                raise ComplexError(
                    f"triangle {tuple(int(v) for v in bad)} is missing boundary edge "
                    f"{tuple(int(v) for v in pair)}"
                )

    # ---- sizes -------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_simplices(self) -> int:
        return self.n_vertices + self.n_edges + self.n_triangles

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    # ---- lookups -----------------------------------------------------------
    @cached_property
    def _edge_keys(self) -> np.ndarray:
        return self.edges[:, 0] * self.n_vertices + self.edges[:, 1]

    def _find_edges(self, pairs: np.ndarray) -> np.ndarray:
        """Edge index for each sorted vertex pair, -1 if absent."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        keys = self._edge_keys
        if len(keys) == 0:
            return np.full(len(pairs), -1, dtype=np.int64)
        q = pairs[:, 0] * self.n_vertices + pairs[:, 1]
        pos = np.searchsorted(keys, q)
        pos_c = np.minimum(pos, len(keys) - 1)
        return np.where(keys[pos_c] == q, pos_c, -1)

    def edge_index(self, u: int, v: int) -> int:
        a, b = (u, v) if u < v else (v, u)
        return int(self._find_edges(np.array([[a, b]]))[0])

    @cached_property
    def triangle_edges(self) -> np.ndarray:
        """(t, 3) edge indices of each triangle: (01, 02, 12)."""
        if self.n_triangles == 0:
            return np.zeros((0, 3), dtype=np.int64)
        pairs = self.triangles[:, [0, 1, 0, 2, 1, 2]].reshape(-1, 2)
        return self._find_edges(pairs).reshape(-1, 3)

    @cached_property
    def vertex_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR ``(indptr, edge ids)`` of edges incident to each vertex."""
        m = self.n_edges
        rows = self.edges.reshape(-1)
        cols = np.repeat(np.arange(m, dtype=np.int64), 2)
        return _csr(self.n_vertices, rows, cols)

    @cached_property
    def edge_triangles(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR ``(indptr, triangle ids)`` of triangles incident to each edge."""
        t = self.n_triangles
        rows = self.triangle_edges.reshape(-1)
        cols = np.repeat(np.arange(t, dtype=np.int64), 3)
        return _csr(self.n_edges, rows, cols)

    def subcomplex_above(self, threshold: float) -> "Complex2":
        """Full subcomplex spanned by vertices with density > threshold."""
        keep = self.density > threshold
        new_id = np.cumsum(keep) - 1
        e = self.edges[np.all(keep[self.edges], axis=1)] if self.n_edges else self.edges
        t = (
            self.triangles[np.all(keep[self.triangles], axis=1)]
            if self.n_triangles
            else self.triangles
        )
        gc = None if self.grid_coords is None else self.grid_coords[keep]
        return Complex2(
            self.positions[keep], self.density[keep], new_id[e], new_id[t], gc, check=False
        )


def build_grid_complex(volume: DensityVolume, threshold: float = 0.0) -> Complex2:
    """
    Triangulate the grid points whose density is strictly above ``threshold``.

    Every edge and triangle of the fixed cube template whose vertices all
    survive is emitted.  Positions are ``(origin + index) * spacing``.
    Returns an empty complex when nothing passes the threshold.
    """
    vals = volume.values
    nz, ny, nx = vals.shape
    mask = np.asarray(vals > threshold)
    flat = np.flatnonzero(mask)
    z, rem = np.divmod(flat, nx * ny)
    y, x = np.divmod(rem, nx)
    coords = np.stack([x, y, z], axis=1)
    mflat = mask.reshape(-1)
    strides = np.array([1, nx, nx * ny], dtype=np.int64)
    dims = np.array([nx, ny, nz], dtype=np.int64)

    def neighbours(off: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # (source rows that have a surviving neighbour at +off, its vertex id)
        inb = np.all(coords + off < dims, axis=1)
        src = np.flatnonzero(inb)
        tgt = flat[src] + int(off @ strides)
        ok = mflat[tgt]
        return src[ok], np.searchsorted(flat, tgt[ok])

    edges = []
    for off in EDGE_OFFSETS:
        src, tgt = neighbours(off)
        edges.append(np.stack([src, tgt], axis=1))
    tris = []
    for a, b in TRIANGLE_OFFSETS:
        sa, ta = neighbours(a)
        sb, tb = neighbours(b)
        ida = np.full(len(flat), -1, dtype=np.int64)
        ida[sa] = ta
        idb = np.full(len(flat), -1, dtype=np.int64)
        idb[sb] = tb
        ok = (ida >= 0) & (idb >= 0)
        src = np.flatnonzero(ok)
        tris.append(np.stack([src, ida[src], idb[src]], axis=1))
    gc = coords + np.asarray(volume.origin, dtype=np.int64)
    pos = gc * np.asarray(volume.spacing, dtype=np.float64)
    return Complex2(
        pos,
        np.asarray(vals, dtype=np.float64).reshape(-1)[flat],
        np.concatenate(edges) if edges else np.zeros((0, 2), np.int64),
        np.concatenate(tris) if tris else np.zeros((0, 3), np.int64),
        grid_coords=gc,
        check=False,
    )


# -----------------------------------------------------------------------------
# Complex files
# -----------------------------------------------------------------------------
def _parse_complex_lines(lines: Iterable[str], source: str) -> Complex2:
    verts, dens, edges, tris = [], [], [], []
    seen_e, seen_t = {}, {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v" and len(parts) == 5:
                x, y, zz, d = (float(p) for p in parts[1:])
                verts.append((x, y, zz))
                dens.append(d)
                continue
            if tag == "e" and len(parts) == 3:
                simplex = tuple(sorted(int(p) for p in parts[1:]))
                store, seen = edges, seen_e
            elif tag == "t" and len(parts) == 4:
                simplex = tuple(sorted(int(p) for p in parts[1:]))
                store, seen = tris, seen_t
            else:
                raise ValueError
        except ValueError:
            raise ComplexError(f"{source}:{lineno}: malformed line {line!r}") from None
        if len(set(simplex)) != len(simplex):
            raise ComplexError(f"{source}:{lineno}: repeated vertex in {simplex}")
        for v in simplex:
            if v < 0 or v >= len(verts):
                raise ComplexError(
                    f"{source}:{lineno}: vertex {v} not defined (have {len(verts)})"
                )
        if simplex in seen:
            raise ComplexError(
                f"{source}:{lineno}: duplicate simplex {simplex} (first on line {seen[simplex]})"
            )
        seen[simplex] = lineno
        store.append(simplex)
    for tri, lineno in seen_t.items():
        for face in ((tri[0], tri[1]), (tri[0], tri[2]), (tri[1], tri[2])):
            if face not in seen_e:
                raise ComplexError(
                    f"{source}:{lineno}: triangle {tri} is missing boundary edge {face}"
                )
    return Complex2(
        np.array(verts, dtype=np.float64).reshape(-1, 3),
        np.array(dens, dtype=np.float64),
        np.array(edges, dtype=np.int64).reshape(-1, 2),
        np.array(tris, dtype=np.int64).reshape(-1, 3),
    )


def load_complex(path) -> Complex2:
    """
    Parse a complex file (``v x y z density`` / ``e i j`` / ``t i j k``).

    Vertex indices are 0-based in file order; simplices must reference
    vertices and edges listed earlier.  Errors carry the line number.
    """
    path = Path(path)
    return _parse_complex_lines(path.read_text().splitlines(), str(path))


def format_complex(cx: Complex2) -> str:
    out = []
    for (x, y, z), d in zip(cx.positions.tolist(), cx.density.tolist()):
        out.append(f"v {x!r} {y!r} {z!r} {d!r}")
    out.extend(f"e {a} {b}" for a, b in cx.edges.tolist())
    out.extend(f"t {a} {b} {c}" for a, b, c in cx.triangles.tolist())
    return "\n".join(out) + "\n" if out else ""


def save_complex(cx: Complex2, path) -> None:
    """Canonical serialization: vertices, then sorted edges, then sorted triangles."""
    Path(path).write_text(format_complex(cx))
