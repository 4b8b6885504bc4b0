"""
Persistence pairing of the lower-star filtration of a 2-complex.

Vertex values are made generic by breaking ties on vertex index, which
gives every vertex a unique rank.  A simplex enters the filtration with its
highest-ranked vertex; within one lower star, lower dimensions come first,
then the remaining vertex ranks decide.

Dimension 0 is paired by union-find (elder rule), dimension 1 by column
reduction of the triangle boundaries.  Rows of edges that already killed a
component are dropped before reducing; such edges can never be the pivot
of a triangle column, so the pairing is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .complex import Complex2

__all__ = [
    "FiltrationOrder",
    "PersistencePairing",
    "lower_star_order",
    "compute_pairing",
    "vertex_ranks",
]


def vertex_ranks(f: np.ndarray) -> np.ndarray:
    """Rank of each vertex in the order (value, index)."""
    f = np.asarray(f, dtype=np.float64)
    order = np.lexsort((np.arange(len(f)), f))
    rank = np.empty(len(f), dtype=np.int64)
    rank[order] = np.arange(len(f), dtype=np.int64)
    return rank


@dataclass
class FiltrationOrder:
    """
    Total order of all simplices.

    Simplices are numbered globally: vertices ``0..n-1``, then edges, then
    triangles.  ``order[k]`` is the global id at filtration position ``k``;
    ``position`` is its inverse.  ``values`` holds the filtration value of
    every simplex by global id.
    """

    f: np.ndarray
    rank: np.ndarray
    order: np.ndarray
    position: np.ndarray
    values: np.ndarray
    n_vertices: int
    n_edges: int
    n_triangles: int

    def dim_of(self, sid):
        sid = np.asarray(sid)
        return (sid >= self.n_vertices).astype(np.int64) + (
            sid >= self.n_vertices + self.n_edges
        ).astype(np.int64)

    def local_id(self, sid):
        """Index of a global simplex id within its own dimension."""
        sid = np.asarray(sid)
        d = self.dim_of(sid)
        return sid - np.where(d == 0, 0, np.where(d == 1, self.n_vertices, self.n_vertices + self.n_edges))


def lower_star_order(cx: Complex2, f) -> FiltrationOrder:
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    if len(f) != cx.n_vertices:
        raise ValueError(f"f has {len(f)} values for {cx.n_vertices} vertices")
    n, m, t = cx.n_vertices, cx.n_edges, cx.n_triangles
    r = vertex_ranks(f)
    kmax = np.empty(n + m + t, dtype=np.int64)
    k2 = np.full(n + m + t, -1, dtype=np.int64)
    k3 = np.full(n + m + t, -1, dtype=np.int64)
    dim = np.zeros(n + m + t, dtype=np.int64)
    kmax[:n] = r
    if m:
        re = np.sort(r[cx.edges], axis=1)
        kmax[n : n + m] = re[:, 1]
        k2[n : n + m] = re[:, 0]
        dim[n : n + m] = 1
    if t:
        rt = np.sort(r[cx.triangles], axis=1)
        kmax[n + m :] = rt[:, 2]
        k2[n + m :] = rt[:, 1]
        k3[n + m :] = rt[:, 0]
        dim[n + m :] = 2
    order = np.lexsort((k3, k2, dim, kmax))
    position = np.empty_like(order)
    position[order] = np.arange(len(order), dtype=np.int64)
    inv_rank = np.empty(n, dtype=np.int64)
    inv_rank[r] = np.arange(n, dtype=np.int64)
    values = f[inv_rank[kmax]] if n else np.zeros(0)
    return FiltrationOrder(f, r, order, position, values, n, m, t)


@dataclass
class PersistencePairing:
    """
    Birth/death pairs by dimension plus the unpaired (essential) simplices.

    All simplex ids are local to their dimension (vertex, edge or triangle
    index into the complex).  ``persistence = value(death) - value(birth)``.
    """

    vertex_edge: np.ndarray  # (k, 2) vertex, edge
    vertex_edge_persistence: np.ndarray
    edge_triangle: np.ndarray  # (k, 2) edge, triangle
    edge_triangle_persistence: np.ndarray
    essential_vertices: np.ndarray
    essential_edges: np.ndarray
    essential_triangles: np.ndarray
    n_edges: int

    @property
    def n_pairs(self) -> int:
        return len(self.vertex_edge) + len(self.edge_triangle)

    @property
    def n_essential(self) -> int:
        return len(self.essential_vertices) + len(self.essential_edges) + len(self.essential_triangles)

    def edge_persistence(self) -> np.ndarray:
        """Persistence of the pair each edge belongs to (``inf`` if essential)."""
        per = np.full(self.n_edges, np.inf)
        if len(self.vertex_edge):
            per[self.vertex_edge[:, 1]] = self.vertex_edge_persistence
        if len(self.edge_triangle):
            per[self.edge_triangle[:, 0]] = self.edge_triangle_persistence
        return per

    def as_sets(self) -> tuple[set, set, set]:
        """``({(v, e)}, {(e, t)}, {(dim, id)})`` for comparisons."""
        ve = {(int(a), int(b)) for a, b in self.vertex_edge}
        et = {(int(a), int(b)) for a, b in self.edge_triangle}
        ess = (
            {(0, int(v)) for v in self.essential_vertices}
            | {(1, int(e)) for e in self.essential_edges}
            | {(2, int(t)) for t in self.essential_triangles}
        )
        return ve, et, ess


# -----------------------------------------------------------------------------
# kernels
# -----------------------------------------------------------------------------
@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def _zero_dim(n, edge_seq, ev, vpos):
    """Elder-rule union-find; returns the killed vertex per edge (or -1)."""
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    oldest = np.arange(n)
    killed = np.full(len(edge_seq), -1, dtype=np.int64)
    for k in range(len(edge_seq)):
        e = edge_seq[k]
        a = _find(parent, ev[e, 0])
        b = _find(parent, ev[e, 1])
        if a == b:
            continue
        oa = oldest[a]
        ob = oldest[b]
        if vpos[oa] < vpos[ob]:
            elder, young = oa, ob
        else:
            elder, young = ob, oa
        killed[k] = young
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
        oldest[a] = elder
    return killed


@njit(cache=True)
def _symdiff(a, na, b, nb, out):
    """Symmetric difference of two sorted int arrays into ``out``; returns length."""
    i = 0
    j = 0
    k = 0
    while i < na and j < nb:
        if a[i] < b[j]:
            out[k] = a[i]
            i += 1
            k += 1
        elif a[i] > b[j]:
            out[k] = b[j]
            j += 1
            k += 1
        else:
            i += 1
            j += 1
    while i < na:
        out[k] = a[i]
        i += 1
        k += 1
    while j < nb:
        out[k] = b[j]
        j += 1
        k += 1
    return k


@njit(cache=True)
def _reduce_columns(bnd, alive, n_rows):
    """
    Left-to-right Z/2 reduction of 3-entry columns.

    ``bnd[j]`` are the row indices of column ``j`` (columns already in
    filtration order); rows with ``alive[row] == False`` are dropped.
    Returns the pivot row of every reduced column, -1 for zero columns.
    """
    n_cols = bnd.shape[0]
    pivot_col = np.full(n_rows, -1, dtype=np.int64)
    low = np.full(n_cols, -1, dtype=np.int64)
    start = np.zeros(n_cols, dtype=np.int64)
    length = np.zeros(n_cols, dtype=np.int64)
    pool = np.empty(max(16, 4 * n_cols), dtype=np.int64)
    used = 0
    work = np.empty(64, dtype=np.int64)
    tmp = np.empty(64, dtype=np.int64)
    for j in range(n_cols):
        nw = 0
        for q in range(bnd.shape[1]):
            r = bnd[j, q]
            if alive[r]:
                work[nw] = r
                nw += 1
        work[:nw].sort()
        while nw > 0:
            p = work[nw - 1]
            c = pivot_col[p]
            if c < 0:
                break
            nc = length[c]
            if nw + nc > len(tmp):
                cap = 2 * (nw + nc)
                tmp = np.empty(cap, dtype=np.int64)
                grown = np.empty(cap, dtype=np.int64)
                grown[:nw] = work[:nw]
                work = grown
            nw = _symdiff(work, nw, pool[start[c] : start[c] + nc], nc, tmp)
            work, tmp = tmp, work
        if nw == 0:
            continue
        p = work[nw - 1]
        pivot_col[p] = j
        low[j] = p
        if used + nw > len(pool):
            grown = np.empty(2 * (used + nw), dtype=np.int64)
            grown[:used] = pool[:used]
            pool = grown
        pool[used : used + nw] = work[:nw]
        start[j] = used
        length[j] = nw
        used += nw
    return low


# -----------------------------------------------------------------------------
# public
# -----------------------------------------------------------------------------
def compute_pairing(cx: Complex2, order: FiltrationOrder) -> PersistencePairing:
    n, m, t = cx.n_vertices, cx.n_edges, cx.n_triangles
    pos = order.position
    vals = order.values

    # dimension 0
    edge_seq = np.argsort(pos[n : n + m], kind="stable")
    edge_rank = np.empty(m, dtype=np.int64)
    edge_rank[edge_seq] = np.arange(m, dtype=np.int64)
    if m:
        killed = _zero_dim(n, edge_seq, cx.edges, pos[:n].copy())
    else:
        killed = np.zeros(0, dtype=np.int64)
    neg = killed >= 0
    ve = np.stack([killed[neg], edge_seq[neg]], axis=1).reshape(-1, 2)
    ve_per = vals[n + ve[:, 1]] - vals[ve[:, 0]]
    vpaired = np.zeros(n, dtype=bool)
    vpaired[ve[:, 0]] = True

    # dimension 1
    tri_seq = np.argsort(pos[n + m :], kind="stable")
    if t:
        bnd = np.sort(edge_rank[cx.triangle_edges[tri_seq]], axis=1)
        alive = np.ones(m, dtype=bool)
        alive[neg] = False  # indexed by edge rank: neg is in rank order
        low = _reduce_columns(bnd, alive, m)
    else:
        low = np.zeros(0, dtype=np.int64)
    paired_cols = low >= 0
    et = np.stack([edge_seq[low[paired_cols]], tri_seq[paired_cols]], axis=1).reshape(-1, 2)
    et_per = vals[n + m + et[:, 1]] - vals[n + et[:, 0]]

    epaired = np.zeros(m, dtype=bool)
    epaired[ve[:, 1]] = True
    epaired[et[:, 0]] = True
    tpaired = np.zeros(t, dtype=bool)
    tpaired[et[:, 1]] = True
    return PersistencePairing(
        vertex_edge=ve,
        vertex_edge_persistence=ve_per,
        edge_triangle=et,
        edge_triangle_persistence=et_per,
        essential_vertices=np.flatnonzero(~vpaired),
        essential_edges=np.flatnonzero(~epaired),
        essential_triangles=np.flatnonzero(~tpaired),
        n_edges=m,
    )
