"""
Out-of-core skeletonization on overlapping xy tiles.

Each tile is smoothed (with a halo, so values match a global smoothing
exactly), triangulated and skeletonized on its own.  The per-tile
skeletons are then stitched: skeleton vertices lying in overlap bands get
a small triangulated cube around them, the density of those band vertices
is spread by a Gaussian kernel over the stitched complex, and the ridge
extraction is rerun on every stitched component that touches a band.
Components that never reach a band are passed through unchanged.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .complex import (
    EDGE_OFFSETS,
    TRIANGLE_OFFSETS,
    Complex2,
    DensityVolume,
    build_grid_complex,
    gaussian_smooth,
)
from .morse import SkeletonGraph, dimorsc

logger = logging.getLogger(__name__)

__all__ = [
    "TileLayout",
    "Tile",
    "MergeComplex",
    "TileError",
    "partition",
    "smooth_region",
    "grid_keys",
    "keyed_skeleton",
    "skeletonize_tiles",
    "boundary_vertices",
    "build_merge_complex",
    "diffuse_density",
    "merge",
    "skeletonize_tiled",
]


class TileError(RuntimeError):
    pass


@dataclass(frozen=True)
class TileLayout:
    """xy tile size and overlap in voxels; z is never split."""

    tile_size: tuple[int, int] = (512, 512)
    overlap: int = 5

    def __post_init__(self) -> None:
        if len(self.tile_size) != 2 or min(self.tile_size) <= 0:
            raise ValueError(f"tile size must be two positive ints, got {self.tile_size}")
        if self.overlap < 0:
            raise ValueError("overlap must be >= 0")
        if min(self.tile_size) <= 2 * self.overlap:
            # otherwise one voxel can sit in three tiles along an axis
            raise ValueError(f"tile size {self.tile_size} must exceed twice the overlap {self.overlap}")

    def ranges(self, n: int, axis: int) -> list[tuple[int, int]]:
        """Half-open ``[start, stop)`` tile extents along x (axis 0) or y (axis 1)."""
        t, o = self.tile_size[axis], self.overlap
        if n <= t:
            return [(0, n)]
        k = math.ceil((n - o) / (t - o))
        return [(i * (t - o), min(i * (t - o) + t, n)) for i in range(k)]

    def bands(self, n: int, axis: int) -> list[tuple[int, int]]:
        """Shared column ranges between neighbouring tiles along one axis."""
        r = self.ranges(n, axis)
        return [(r[i + 1][0], r[i][1]) for i in range(len(r) - 1)]


@dataclass
class Tile:
    id: int
    lo: tuple[int, int, int]  # global voxel offset (x, y, z)
    hi: tuple[int, int, int]  # exclusive

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))


def partition(volume: DensityVolume, layout: TileLayout) -> list[Tile]:
    """Tiles in row-major (y, then x) order with their global extents."""
    nx, ny, nz = volume.dims
    out = []
    for y0, y1 in layout.ranges(ny, 1):
        for x0, x1 in layout.ranges(nx, 0):
            out.append(Tile(len(out), (x0, y0, 0), (x1, y1, nz)))
    return out


def smooth_region(volume: DensityVolume, lo, hi, sigma: float, radius: int) -> DensityVolume:
    """
    Smoothed values of the box ``[lo, hi)`` (voxel coords, x y z).  A halo
    of ``radius`` voxels is read around the box, so the result equals the
    same box cut out of a global smoothing.  ``sigma <= 0`` skips smoothing.
    """
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    dims = np.asarray(volume.dims)
    if sigma <= 0:
        v = volume.values[lo[2] : hi[2], lo[1] : hi[1], lo[0] : hi[0]]
        return DensityVolume(np.asarray(v, dtype=np.float64), volume.spacing, tuple(lo + volume.origin))
    hlo = np.maximum(lo - radius, 0)
    hhi = np.minimum(hi + radius, dims)
    block = DensityVolume(
        np.asarray(volume.values[hlo[2] : hhi[2], hlo[1] : hhi[1], hlo[0] : hhi[0]], dtype=np.float64),
        volume.spacing,
    )
    sm = gaussian_smooth(block, sigma, radius).values
    a = lo - hlo
    b = a + (hi - lo)
    return DensityVolume(
        np.ascontiguousarray(sm[a[2] : b[2], a[1] : b[1], a[0] : b[0]]),
        volume.spacing,
        tuple(lo + np.asarray(volume.origin)),
    )


def grid_keys(coords: np.ndarray, dims) -> np.ndarray:
    """Row-major global key of grid coords (x, y, z)."""
    nx, ny, _ = dims
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    return c[:, 0] + nx * (c[:, 1] + ny * c[:, 2])


def _coords_of(keys: np.ndarray, dims) -> np.ndarray:
    nx, ny, _ = dims
    z, rem = np.divmod(np.asarray(keys, dtype=np.int64), nx * ny)
    y, x = np.divmod(rem, nx)
    return np.stack([x, y, z], axis=1)


def keyed_skeleton(g: SkeletonGraph, dims, origin=(0, 0, 0)) -> SkeletonGraph:
    """
    Replace complex-local node ids by grid keys of ``grid_coords - origin``
    in a ``dims`` grid (node order stays sorted by id).
    """
    if g.n_nodes == 0:
        return g
    if g.grid_coords is None:
        raise ValueError("skeleton has no grid coordinates")
    keys = grid_keys(g.grid_coords - np.asarray(origin, dtype=np.int64), dims)
    perm = np.argsort(keys, kind="stable")
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return SkeletonGraph(
        keys[perm],
        g.positions[perm],
        g.density[perm],
        np.sort(inv[g.edges], axis=1),
        g.critical[perm],
        inv[g.saddles] if len(g.saddles) else g.saddles,
        g.grid_coords[perm],
        dict(g.stats),
    )


# -----------------------------------------------------------------------------
# Per-tile work
# -----------------------------------------------------------------------------
@dataclass
class _TileJob:
    tile: Tile
    values: np.ndarray  # tile plus halo, raw
    halo_lo: tuple[int, int, int]
    spacing: tuple[float, float, float]
    dims: tuple[int, int, int]
    origin: tuple[int, int, int]
    sigma: float
    radius: int
    threshold: float
    tau: float


def _run_tile(job: _TileJob) -> SkeletonGraph:
    try:
        t = job.tile
        halo = DensityVolume(job.values, job.spacing, tuple(np.add(job.halo_lo, job.origin)))
        lo = np.asarray(t.lo) - np.asarray(job.halo_lo)
        hi = lo + np.asarray(t.shape)
        sm = smooth_region(halo, lo, hi, job.sigma, job.radius)
        cx = build_grid_complex(sm, job.threshold)
        g = dimorsc(cx, tau=job.tau)
        out = keyed_skeleton(g, job.dims, job.origin)
        out.stats["tile"] = t.id
        return out
    except Exception as exc:  # noqa: BLE001 - re-raised with the tile id
        raise TileError(f"tile {job.tile.id} failed: {exc}") from exc


def _tile_job(volume, tile, sigma, radius, threshold, tau) -> _TileJob:
    dims = np.asarray(volume.dims)
    r = radius if sigma > 0 else 0
    hlo = np.maximum(np.asarray(tile.lo) - r, 0)
    hhi = np.minimum(np.asarray(tile.hi) + r, dims)
    vals = np.array(volume.values[hlo[2] : hhi[2], hlo[1] : hhi[1], hlo[0] : hhi[0]], dtype=np.float64)
    return _TileJob(
        tile, vals, tuple(int(v) for v in hlo), volume.spacing, volume.dims, volume.origin, sigma, radius, threshold, tau
    )


def _cache_path(cache_dir, tile: Tile) -> Path:
    return Path(cache_dir) / f"tile_{tile.id:05d}.skel"


def _load_cached(path: Path, dims, origin) -> SkeletonGraph:
    g = SkeletonGraph.from_text(path.read_text())
    g.grid_coords = _coords_of(g.node_ids, dims) + np.asarray(origin, dtype=np.int64)
    return g


def default_workers() -> int:
    env = os.environ.get("MORSESKEL_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def skeletonize_tiles(
    volume: DensityVolume,
    tiles: list[Tile],
    tau: float = 0.0,
    *,
    sigma: float = 1.0,
    radius: int = 2,
    threshold: float = 0.0,
    workers: int | None = None,
    cache_dir=None,
) -> list[SkeletonGraph]:
    """
    Skeletonize every tile independently; results keyed by global grid
    index and returned in tile order.  With ``cache_dir`` each finished
    tile is written there and reused on the next call.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    out: list[SkeletonGraph | None] = [None] * len(tiles)
    todo = []
    for i, t in enumerate(tiles):
        if cache_dir is not None and _cache_path(cache_dir, t).exists():
            out[i] = _load_cached(_cache_path(cache_dir, t), volume.dims, volume.origin)
            logger.info("tile %d: loaded from cache", t.id)
        else:
            todo.append(i)

    def finish(i, g):
        out[i] = g
        if cache_dir is not None:
            Path(cache_dir).mkdir(parents=True, exist_ok=True)
            _cache_path(cache_dir, tiles[i]).write_text(g.to_text())
        logger.info("tile %d: %d nodes, %d edges", tiles[i].id, g.n_nodes, g.n_edges)

    if workers == 1 or len(todo) <= 1:
        for i in todo:
            finish(i, _run_tile(_tile_job(volume, tiles[i], sigma, radius, threshold, tau)))
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(todo))) as pool:
            futs = {
                i: pool.submit(_run_tile, _tile_job(volume, tiles[i], sigma, radius, threshold, tau))
                for i in todo
            }
            for i in todo:
                finish(i, futs[i].result())
    return out


# -----------------------------------------------------------------------------
# Merge
# -----------------------------------------------------------------------------
@dataclass
class MergeComplex:
    """
    Stitching complex.  Vertex ``k`` of ``complex`` is the grid point with
    key ``keys[k]``; ``density`` is the diffused density once
    :func:`diffuse_density` ran (the plain smoothed density before).
    """

    complex: Complex2
    keys: np.ndarray
    boundary: np.ndarray  # vertex indices of the band skeleton vertices
    skeleton_edges: np.ndarray  # edge indices that came from tile skeletons
    dims: tuple[int, int, int]
    density: np.ndarray
    counters: dict = field(default_factory=dict)


def boundary_vertices(skeletons: list[SkeletonGraph], layout: TileLayout, dims) -> np.ndarray:
    """Sorted keys of skeleton vertices that fall in an overlap band."""
    keys = [g.node_ids for g in skeletons if g.n_nodes]
    if not keys:
        return np.zeros(0, dtype=np.int64)
    keys = np.unique(np.concatenate(keys))
    c = _coords_of(keys, dims)
    inband = np.zeros(len(keys), dtype=bool)
    for axis in (0, 1):
        for b0, b1 in layout.bands(dims[axis], axis):
            inband |= (c[:, axis] >= b0) & (c[:, axis] < b1)
    return keys[inband]


def _union_skeleton(skeletons: list[SkeletonGraph]):
    keys, dens, pairs = [], [], []
    for g in skeletons:
        if g.n_nodes == 0:
            continue
        keys.append(g.node_ids)
        dens.append(g.density)
        pairs.append(g.node_ids[g.edges])
    if not keys:
        z = np.zeros(0, dtype=np.int64)
        return z, np.zeros(0), np.zeros((0, 2), np.int64)
    k = np.concatenate(keys)
    d = np.concatenate(dens)
    uk, first = np.unique(k, return_index=True)
    # duplicates across tiles carry identical smoothed values; keep the max anyway
    ud = np.full(len(uk), -np.inf)
    np.maximum.at(ud, np.searchsorted(uk, k), d)
    e = np.unique(np.sort(np.concatenate(pairs), axis=1), axis=0)
    return uk, ud, e


def _cube_simplices(centres: np.ndarray, r: int, dims):
    """Edge and triangle key tuples of the clipped ``(2r+1)^3`` grid blocks around ``centres``."""
    dims = np.asarray(dims)
    o = np.arange(-r, r + 1)
    block = np.stack(np.meshgrid(o, o, o, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = centres[:, None, :] + block[None, :, :]  # (B, m, 3)
    inb = np.all((pts >= 0) & (pts < dims), axis=2)
    verts = pts[inb]
    edges, tris = [], []
    for d in EDGE_OFFSETS:
        ok = inb & np.all(np.abs(block + d) <= r, axis=1)[None, :]
        q = pts + d
        ok &= np.all(q < dims, axis=2)
        edges.append(np.stack([pts[ok], q[ok]], axis=1))
    for a, b in TRIANGLE_OFFSETS:
        ok = inb & np.all(np.abs(block + b) <= r, axis=1)[None, :]  # b dominates a
        qb = pts + b
        ok &= np.all(qb < dims, axis=2)
        qa = pts + a
        tris.append(np.stack([pts[ok], qa[ok], qb[ok]], axis=1))
    return verts, np.concatenate(edges), np.concatenate(tris)


def build_merge_complex(
    skeletons: list[SkeletonGraph],
    boundary: np.ndarray,
    volume: DensityVolume,
    neighborhood_radius: int = 2,
    *,
    sigma: float = 1.0,
    radius: int = 2,
    threshold: float = 0.0,
) -> MergeComplex:
    """
    Union of all tile skeletons and the thresholded cube neighbourhoods of
    the ``boundary`` vertex keys.  Neighbourhood densities are smoothed the
    same way the tiles were, so every simplex belongs to the global complex.
    """
    dims = volume.dims
    sk_keys, sk_dens, sk_edges = _union_skeleton(skeletons)
    n_sk_simplices = len(sk_keys) + len(sk_edges)

    boundary = np.asarray(boundary, dtype=np.int64)
    if len(boundary):
        centres = _coords_of(boundary, dims)
        cv, ce, ct = _cube_simplices(centres, int(neighborhood_radius), dims)
        n_c_simplices = len(cv) + len(ce) + len(ct)
        cv_keys = np.unique(grid_keys(cv, dims))
        # density of the neighbourhood points, smoothed over their bounding box
        cc = _coords_of(cv_keys, dims)
        lo, hi = cc.min(axis=0), cc.max(axis=0) + 1
        sm = smooth_region(volume, lo, hi, sigma, radius).values
        rel = cc - lo
        cv_dens = sm[rel[:, 2], rel[:, 1], rel[:, 0]]
        alive = cv_dens > threshold
        alive_keys = cv_keys[alive]
        ce_k = np.sort(grid_keys(ce.reshape(-1, 3), dims).reshape(-1, 2), axis=1)
        ct_k = np.sort(grid_keys(ct.reshape(-1, 3), dims).reshape(-1, 3), axis=1)
        ce_k = ce_k[np.all(np.isin(ce_k, alive_keys), axis=1)]
        ct_k = ct_k[np.all(np.isin(ct_k, alive_keys), axis=1)]
    else:
        n_c_simplices = 0
        alive_keys = np.zeros(0, np.int64)
        cv_keys, cv_dens, alive = alive_keys, np.zeros(0), np.zeros(0, bool)
        ce_k = np.zeros((0, 2), np.int64)
        ct_k = np.zeros((0, 3), np.int64)

    keys = np.union1d(sk_keys, alive_keys)
    dens = np.zeros(len(keys))
    dens[np.searchsorted(keys, cv_keys[alive])] = cv_dens[alive]
    dens[np.searchsorted(keys, sk_keys)] = sk_dens
    all_edges = np.unique(np.concatenate([sk_edges, ce_k]), axis=0) if len(sk_edges) + len(ce_k) else np.zeros((0, 2), np.int64)
    tris = np.unique(ct_k, axis=0) if len(ct_k) else np.zeros((0, 3), np.int64)
    coords = _coords_of(keys, dims)
    pos = (coords + np.asarray(volume.origin)) * np.asarray(volume.spacing)
    cx = Complex2(
        pos,
        dens,
        np.searchsorted(keys, all_edges),
        np.searchsorted(keys, tris),
        grid_coords=coords + np.asarray(volume.origin),
        check=False,
    )
    sk_edge_ids = cx._find_edges(np.searchsorted(keys, sk_edges)) if len(sk_edges) else np.zeros(0, np.int64)
    counters = {
        "skeleton_simplices": int(n_sk_simplices),
        "neighborhood_simplices": int(n_c_simplices),
        "merge_simplices": int(cx.n_simplices),
    }
    return MergeComplex(
        cx,
        keys,
        np.searchsorted(keys, boundary),
        np.asarray(sk_edge_ids, dtype=np.int64),
        dims,
        dens.copy(),
        counters,
    )


def diffuse_density(mc: MergeComplex, sigma: float = 5.0, cutoff: float = 3.0) -> np.ndarray:
    """
    ``rho'(u) = sum_v exp(-|v - u|^2 / 2 sigma^2) rho(v)`` over boundary
    vertices ``v`` within ``cutoff * sigma`` (grid units).  Each vertex keeps
    the larger of its own density and ``rho'``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    cx = mc.complex
    rho = cx.density
    out = rho.copy()
    if len(mc.boundary) == 0 or cx.n_vertices == 0:
        mc.density = out
        return out
    pts = cx.grid_coords.astype(np.float64)
    src = pts[mc.boundary]
    tree_u = cKDTree(pts)
    tree_v = cKDTree(src)
    sdm = tree_u.sparse_distance_matrix(tree_v, cutoff * sigma, output_type="coo_matrix")
    w = np.exp(-(sdm.data**2) / (2.0 * sigma**2)) * rho[mc.boundary][sdm.col]
    diffused = np.bincount(sdm.row, weights=w, minlength=cx.n_vertices)
    np.maximum(out, diffused, out=out)
    mc.density = out
    return out


def merge(mc: MergeComplex, tau: float = 0.0) -> SkeletonGraph:
    """
    Rerun the ridge extraction with the diffused density on every stitched
    component containing a boundary vertex; other components keep their
    tile skeleton edges as they are.
    """
    cx = mc.complex
    n = cx.n_vertices
    if n == 0:
        return SkeletonGraph.empty()
    adj = coo_matrix((np.ones(cx.n_edges), (cx.edges[:, 0], cx.edges[:, 1])), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    touched = np.zeros(labels.max() + 1, dtype=bool)
    touched[labels[mc.boundary]] = True
    vmask = touched[labels]

    keep_edges = mc.skeleton_edges[~vmask[cx.edges[mc.skeleton_edges, 0]]]
    if vmask.any():
        sub_v = np.flatnonzero(vmask)
        local = np.full(n, -1, dtype=np.int64)
        local[sub_v] = np.arange(len(sub_v))
        emask = vmask[cx.edges[:, 0]]
        tmask = vmask[cx.triangles[:, 0]] if cx.n_triangles else np.zeros(0, bool)
        sub = Complex2(
            cx.positions[sub_v],
            mc.density[sub_v],
            local[cx.edges[emask]],
            local[cx.triangles[tmask]],
            grid_coords=cx.grid_coords[sub_v],
            check=False,
        )
        g = dimorsc(sub, tau=tau)
        merged_edges = cx._find_edges(sub_v[g.node_ids[g.edges]]) if g.n_edges else np.zeros(0, np.int64)
        crit_sub = np.zeros(n, dtype=bool)
        crit_sub[sub_v[g.node_ids]] = g.critical
        stats = dict(g.stats)
    else:
        merged_edges = np.zeros(0, np.int64)
        crit_sub = np.zeros(n, dtype=bool)
        stats = {}
    edge_ids = np.unique(np.concatenate([keep_edges, merged_edges]).astype(np.int64))
    if len(edge_ids) == 0:
        return SkeletonGraph.empty()
    ev = cx.edges[edge_ids]
    nodes = np.unique(ev)
    out = SkeletonGraph(
        node_ids=mc.keys[nodes],
        positions=cx.positions[nodes],
        density=cx.density[nodes],
        edges=np.searchsorted(nodes, ev),
        critical=crit_sub[nodes],
        grid_coords=cx.grid_coords[nodes],
    )
    out.stats = {"merge": stats, **mc.counters, "merge_components_rerun": int(touched.sum())}
    return out


def skeletonize_tiled(
    volume: DensityVolume,
    layout: TileLayout = TileLayout(),
    tau: float = 0.0,
    *,
    merge_tau: float | None = None,
    sigma: float = 1.0,
    radius: int = 2,
    threshold: float = 0.0,
    neighborhood_radius: int = 2,
    diffuse_sigma: float = 5.0,
    workers: int | None = None,
    cache_dir=None,
) -> SkeletonGraph:
    """Partition, skeletonize every tile, and stitch into one global skeleton."""
    tiles = partition(volume, layout)
    skels = skeletonize_tiles(
        volume, tiles, tau, sigma=sigma, radius=radius, threshold=threshold, workers=workers, cache_dir=cache_dir
    )
    bnd = boundary_vertices(skels, layout, volume.dims)
    mc = build_merge_complex(
        skels, bnd, volume, neighborhood_radius, sigma=sigma, radius=radius, threshold=threshold
    )
    diffuse_density(mc, diffuse_sigma)
    out = merge(mc, tau if merge_tau is None else merge_tau)
    out.stats["tiles"] = len(tiles)
    out.stats["boundary_vertices"] = int(len(bnd))
    out.stats["tile_critical_initial"] = [list(s.stats.get("critical_initial", (0, 0, 0))) for s in skels]
    return out
