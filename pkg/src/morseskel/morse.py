"""
Discrete gradient fields and 1-unstable manifolds (the skeleton step).

:func:`dimorsc` negates the density, pairs simplices by persistence, builds
the lower-star gradient, cancels low-persistence vertex-edge pairs and
returns the union of the 1-unstable manifolds of the surviving critical
edges.  On the negated field those manifolds follow density ridges.

A vertex is paired with at most one incident edge, so the V-path leaving a
vertex is unique: follow ``vertex_pair`` to the edge, step to its other
endpoint, repeat until a critical vertex is reached.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .complex import Complex2
from .persistence import FiltrationOrder, compute_pairing, lower_star_order

logger = logging.getLogger(__name__)

__all__ = [
    "GradientField",
    "SkeletonGraph",
    "init_field",
    "cancel",
    "extract_unstable_1manifold",
    "simplify_field",
    "dimorsc",
]


# -----------------------------------------------------------------------------
# Gradient field
# -----------------------------------------------------------------------------
@dataclass
class GradientField:
    """
    Acyclic matching on a :class:`Complex2`.

    ``vertex_pair[v]`` is the edge paired with ``v`` (or -1), ``edge_vertex[e]``
    the reverse link; ``edge_pair[e]`` is the triangle paired with ``e`` (or
    -1), ``triangle_pair[t]`` the reverse link.
    """

    complex: Complex2
    vertex_pair: np.ndarray
    edge_vertex: np.ndarray
    edge_pair: np.ndarray
    triangle_pair: np.ndarray

    def copy(self) -> "GradientField":
        return GradientField(
            self.complex,
            self.vertex_pair.copy(),
            self.edge_vertex.copy(),
            self.edge_pair.copy(),
            self.triangle_pair.copy(),
        )

    @property
    def critical_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.vertex_pair < 0)

    @property
    def critical_edges(self) -> np.ndarray:
        return np.flatnonzero((self.edge_vertex < 0) & (self.edge_pair < 0))

    @property
    def critical_triangles(self) -> np.ndarray:
        return np.flatnonzero(self.triangle_pair < 0)

    def critical_counts(self) -> tuple[int, int, int]:
        return (
            len(self.critical_vertices),
            len(self.critical_edges),
            len(self.critical_triangles),
        )

    def morse_euler(self) -> int:
        c0, c1, c2 = self.critical_counts()
        return c0 - c1 + c2

    def descend(self, v: int) -> list[int]:
        """Vertices on the V-path from ``v`` down to a critical vertex."""
        edges = self.complex.edges
        path = [int(v)]
        while self.vertex_pair[path[-1]] >= 0:
            a, b = edges[self.vertex_pair[path[-1]]]
            path.append(int(b if a == path[-1] else a))
            if len(path) > self.complex.n_vertices:
                raise RuntimeError("V-path cycle: gradient field is not acyclic")
        return path

    def validate(self) -> None:
        """Raise if the matching or acyclicity invariant is broken."""
        cx = self.complex
        for v, e in enumerate(self.vertex_pair):
            if e < 0:
                continue
            if v not in cx.edges[e] or self.edge_vertex[e] != v or self.edge_pair[e] >= 0:
                raise AssertionError(f"bad vertex-edge pair ({v}, {e})")
        for e, t in enumerate(self.edge_pair):
            if t < 0:
                continue
            if e not in cx.triangle_edges[t] or self.triangle_pair[t] != e:
                raise AssertionError(f"bad edge-triangle pair ({e}, {t})")
        if np.count_nonzero(self.edge_vertex >= 0) != np.count_nonzero(self.vertex_pair >= 0):
            raise AssertionError("vertex pairing is not symmetric")
        if np.count_nonzero(self.triangle_pair >= 0) != np.count_nonzero(self.edge_pair >= 0):
            raise AssertionError("edge pairing is not symmetric")
        if _has_vpath_cycle(self.vertex_pair, cx.edges):
            raise AssertionError("V-path cycle between vertices and edges")
        if _has_edge_triangle_cycle(self):
            raise AssertionError("V-path cycle between edges and triangles")


@njit(cache=True)
def _has_vpath_cycle(vertex_pair, edges):
    n = len(vertex_pair)
    state = np.zeros(n, dtype=np.int8)  # 0 new, 1 on stack, 2 done
    for s in range(n):
        if state[s]:
            continue
        u = s
        while True:
            if state[u] == 1:
                return True
            if state[u] == 2:
                break
            state[u] = 1
            e = vertex_pair[u]
            if e < 0:
                break
            u = edges[e, 0] + edges[e, 1] - u
        u = s
        while state[u] == 1:
            state[u] = 2
            e = vertex_pair[u]
            if e < 0:
                break
            u = edges[e, 0] + edges[e, 1] - u
    return False


def _has_edge_triangle_cycle(fld: GradientField) -> bool:
    # edge -> paired triangle -> its other (unpaired-with-it) edges
    cx = fld.complex
    te = cx.triangle_edges
    state = np.zeros(cx.n_edges, dtype=np.int8)
    for s in range(cx.n_edges):
        if state[s]:
            continue
        stack = [(s, 0)]
        while stack:
            e, k = stack.pop()
            if k == 0:
                if state[e] == 1:
                    return True
                if state[e] == 2:
                    continue
                state[e] = 1
                stack.append((e, 1))
                t = fld.edge_pair[e]
                if t >= 0:
                    for e2 in te[t]:
                        if e2 != e:
                            if state[e2] == 1:
                                return True
                            if state[e2] == 0:
                                stack.append((int(e2), 0))
            else:
                state[e] = 2
    return False


@njit(cache=True)
def _lower_star_field(rank, ve_ptr, ve_idx, edges, et_ptr, et_idx, triangles, tri_edges):
    n = len(rank)
    m = edges.shape[0]
    t = triangles.shape[0]
    vertex_pair = np.full(n, -1, dtype=np.int64)
    edge_vertex = np.full(m, -1, dtype=np.int64)
    edge_pair = np.full(m, -1, dtype=np.int64)
    triangle_pair = np.full(t, -1, dtype=np.int64)

    cap_e = 16
    cap_t = 64
    le = np.empty(cap_e, dtype=np.int64)
    lkey = np.empty(cap_e, dtype=np.int64)
    est = np.empty(cap_e, dtype=np.int8)  # 0 open, 1 paired, 2 critical
    ez = np.empty(cap_e, dtype=np.bool_)  # in PQzero
    lt = np.empty(cap_t, dtype=np.int64)
    tk2 = np.empty(cap_t, dtype=np.int64)
    tk3 = np.empty(cap_t, dtype=np.int64)
    tf1 = np.empty(cap_t, dtype=np.int64)
    tf2 = np.empty(cap_t, dtype=np.int64)
    tst = np.empty(cap_t, dtype=np.int8)
    tz = np.empty(cap_t, dtype=np.bool_)
    to = np.empty(cap_t, dtype=np.bool_)  # in PQone

    for x in range(n):
        rx = rank[x]
        # ---- lower star edges ------------------------------------------
        deg = ve_ptr[x + 1] - ve_ptr[x]
        if deg > cap_e:
            cap_e = 2 * deg
            le = np.empty(cap_e, dtype=np.int64)
            lkey = np.empty(cap_e, dtype=np.int64)
            est = np.empty(cap_e, dtype=np.int8)
            ez = np.empty(cap_e, dtype=np.bool_)
        ne = 0
        for k in range(ve_ptr[x], ve_ptr[x + 1]):
            e = ve_idx[k]
            y = edges[e, 0] + edges[e, 1] - x
            if rank[y] < rx:
                le[ne] = e
                lkey[ne] = rank[y]
                est[ne] = 0
                ez[ne] = False
                ne += 1
        if ne == 0:
            continue  # critical vertex
        # ---- lower star triangles (registered via their middle-rank face) --
        nt = 0
        for i in range(ne):
            e = le[i]
            ry = lkey[i]
            for k in range(et_ptr[e], et_ptr[e + 1]):
                tr = et_idx[k]
                z = triangles[tr, 0] + triangles[tr, 1] + triangles[tr, 2] - x
                z = z - (edges[e, 0] + edges[e, 1] - x)
                rz = rank[z]
                if rz < ry:
                    if nt >= cap_t:
                        cap_t = 2 * cap_t
                        lt2 = np.empty(cap_t, dtype=np.int64)
                        lt2[:nt] = lt[:nt]
                        lt = lt2
                        a2 = np.empty(cap_t, dtype=np.int64)
                        a2[:nt] = tk2[:nt]
                        tk2 = a2
                        a3 = np.empty(cap_t, dtype=np.int64)
                        a3[:nt] = tk3[:nt]
                        tk3 = a3
                        f1 = np.empty(cap_t, dtype=np.int64)
                        f1[:nt] = tf1[:nt]
                        tf1 = f1
                        f2 = np.empty(cap_t, dtype=np.int64)
                        f2[:nt] = tf2[:nt]
                        tf2 = f2
                        tst = np.empty(cap_t, dtype=np.int8)
                        tz = np.empty(cap_t, dtype=np.bool_)
                        to = np.empty(cap_t, dtype=np.bool_)
                    lt[nt] = tr
                    tk2[nt] = ry
                    tk3[nt] = rz
                    tf1[nt] = i
                    j2 = -1
                    for q in range(ne):
                        if lkey[q] == rz:
                            j2 = q
                            break
                    tf2[nt] = j2
                    nt += 1
        for j in range(nt):
            tst[j] = 0
            tz[j] = False
            to[j] = False

        # ---- pair x with its steepest edge --------------------------------
        d = 0
        for i in range(1, ne):
            if lkey[i] < lkey[d]:
                d = i
        est[d] = 1
        vertex_pair[x] = le[d]
        edge_vertex[le[d]] = x
        for i in range(ne):
            if i != d:
                ez[i] = True
        for j in range(nt):
            if tf1[j] == d or tf2[j] == d:
                cnt = (est[tf1[j]] == 0) + (est[tf2[j]] == 0)
                if cnt == 1:
                    to[j] = True

        while True:
            # drain PQone in key order
            while True:
                a = -1
                for j in range(nt):
                    if to[j] and (a < 0 or tk2[j] < tk2[a] or (tk2[j] == tk2[a] and tk3[j] < tk3[a])):
                        a = j
                if a < 0:
                    break
                to[a] = False
                if tst[a] != 0:
                    continue
                c1 = est[tf1[a]] == 0
                c2 = est[tf2[a]] == 0
                if not c1 and not c2:
                    tz[a] = True
                    continue
                face = tf1[a] if c1 else tf2[a]
                est[face] = 1
                ez[face] = False
                tst[a] = 1
                edge_pair[le[face]] = lt[a]
                triangle_pair[lt[a]] = le[face]
                for j in range(nt):
                    if tst[j] == 0 and not to[j] and (tf1[j] == face or tf2[j] == face):
                        cnt = (est[tf1[j]] == 0) + (est[tf2[j]] == 0)
                        if cnt == 1:
                            to[j] = True
            # pop PQzero: edges keyed (k, -1), triangles (k2, k3)
            best_is_tri = False
            b = -1
            bk2 = 0
            bk3 = 0
            for i in range(ne):
                if ez[i] and (b < 0 or lkey[i] < bk2 or (lkey[i] == bk2 and -1 < bk3)):
                    b = i
                    bk2 = lkey[i]
                    bk3 = -1
                    best_is_tri = False
            for j in range(nt):
                if tz[j] and (b < 0 or tk2[j] < bk2 or (tk2[j] == bk2 and tk3[j] < bk3)):
                    b = j
                    bk2 = tk2[j]
                    bk3 = tk3[j]
                    best_is_tri = True
            if b < 0:
                break
            if best_is_tri:
                tz[b] = False
                if tst[b] == 0:
                    tst[b] = 2
            else:
                ez[b] = False
                if est[b] == 0:
                    est[b] = 2
                    for j in range(nt):
                        if tst[j] == 0 and not to[j] and (tf1[j] == b or tf2[j] == b):
                            cnt = (est[tf1[j]] == 0) + (est[tf2[j]] == 0)
                            if cnt == 1:
                                to[j] = True
    return vertex_pair, edge_vertex, edge_pair, triangle_pair


def init_field(cx: Complex2, order: FiltrationOrder) -> GradientField:
    """Lower-star gradient of the vertex ranking stored in ``order``."""
    ve_ptr, ve_idx = cx.vertex_edges
    et_ptr, et_idx = cx.edge_triangles
    vp, ev, ep, tp = _lower_star_field(
        order.rank, ve_ptr, ve_idx, cx.edges, et_ptr, et_idx, cx.triangles, cx.triangle_edges
    )
    return GradientField(cx, vp, ev, ep, tp)


# -----------------------------------------------------------------------------
# Cancellation
# -----------------------------------------------------------------------------
@njit(cache=True)
def _descend_end(v, vertex_pair, edges):
    while vertex_pair[v] >= 0:
        e = vertex_pair[v]
        v = edges[e, 0] + edges[e, 1] - v
    return v


@njit(cache=True)
def _cancel_batch(pairs, vertex_pair, edge_vertex, edge_pair, edges):
    """
    Cancel ``(vertex, edge)`` pairs in the given order, in place.

    Status per pair: 0 cancelled (or already matched), 1 not critical,
    2 no V-path to the vertex, 3 two V-paths to the vertex.
    """
    status = np.zeros(len(pairs), dtype=np.int8)
    for k in range(len(pairs)):
        v = pairs[k, 0]
        e = pairs[k, 1]
        if vertex_pair[v] == e:
            continue  # already matched by the lower-star field
        if vertex_pair[v] >= 0 or edge_vertex[e] >= 0 or edge_pair[e] >= 0:
            status[k] = 1
            continue
        a = edges[e, 0]
        b = edges[e, 1]
        ca = _descend_end(a, vertex_pair, edges)
        cb = _descend_end(b, vertex_pair, edges)
        if ca == v and cb == v:
            status[k] = 3
            continue
        if ca == v:
            u = a
        elif cb == v:
            u = b
        else:
            status[k] = 2
            continue
        # reverse the path u -> ... -> v, starting with e
        incoming = e
        while True:
            out = vertex_pair[u]
            vertex_pair[u] = incoming
            edge_vertex[incoming] = u
            if out < 0:
                break
            u = edges[out, 0] + edges[out, 1] - u
            incoming = out
    return status


def cancel(fld: GradientField, v: int, e: int) -> GradientField:
    """
    Cancel critical vertex ``v`` against critical edge ``e``.

    Returns a new field with the unique V-path from ``e`` to ``v`` reversed.
    If either cell is not critical, or the number of V-paths from ``e`` to
    ``v`` is not exactly one, the field is returned unchanged and a warning
    is logged.
    """
    out = fld.copy()
    st = _cancel_batch(
        np.array([[v, e]], dtype=np.int64),
        out.vertex_pair,
        out.edge_vertex,
        out.edge_pair,
        fld.complex.edges,
    )[0]
    if st:
        logger.warning("cannot cancel (%d, %d): %s", v, e, _SKIP_REASON[int(st)])
        return fld
    return out


_SKIP_REASON = {
    1: "cell not critical",
    2: "no V-path from edge to vertex",
    3: "two V-paths from edge to vertex",
}


def extract_unstable_1manifold(fld: GradientField, e: int) -> tuple[list[int], list[int]]:
    """The two descending V-paths (vertex lists) from the endpoints of edge ``e``."""
    a, b = fld.complex.edges[e]
    return fld.descend(int(a)), fld.descend(int(b))


# -----------------------------------------------------------------------------
# Skeleton graph
# -----------------------------------------------------------------------------
@dataclass
class SkeletonGraph:
    """
    Geometric graph made of complex edges.

    ``node_ids`` are sorted node keys (complex vertex indices, or global grid
    keys for tiled runs); ``edges`` index into the node arrays.
    ``critical`` marks nodes that are critical vertices of the field (ridge
    peaks); ``saddles`` lists the edges the manifolds were grown from.
    """

    node_ids: np.ndarray
    positions: np.ndarray
    density: np.ndarray
    edges: np.ndarray
    critical: np.ndarray
    saddles: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))
    grid_coords: np.ndarray | None = None
    stats: dict = field(default_factory=dict, compare=False)

    @classmethod
    def empty(cls) -> "SkeletonGraph":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, np.zeros((0, 3)), np.zeros(0), np.zeros((0, 2), np.int64), np.zeros(0, bool))

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def is_empty(self) -> bool:
        return self.n_edges == 0

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n_nodes)

    def arcs(self) -> list[list[int]]:
        """
        Split the graph into polylines (node index lists) whose interior
        nodes have degree 2 and are not critical.  Isolated cycles come
        back as closed polylines starting at their lowest node.
        """
        deg = self.degrees()
        adj = [[] for _ in range(self.n_nodes)]
        for k, (a, b) in enumerate(self.edges.tolist()):
            adj[a].append((b, k))
            adj[b].append((a, k))
        stop = (deg != 2) | self.critical
        used = np.zeros(self.n_edges, dtype=bool)
        arcs = []
        for s in range(self.n_nodes):
            if not stop[s]:
                continue
            for nb, k in sorted(adj[s]):
                if used[k]:
                    continue
                used[k] = True
                path = [s, nb]
                while not stop[path[-1]]:
                    nxt = [(w, kk) for w, kk in adj[path[-1]] if not used[kk]]
                    if not nxt:
                        break
                    w, kk = nxt[0]
                    used[kk] = True
                    path.append(w)
                arcs.append(path)
        for k in np.flatnonzero(~used):
            if used[k]:
                continue
            a, b = self.edges[k]
            used[k] = True
            path = [int(a), int(b)]
            while path[-1] != path[0]:
                nxt = [(w, kk) for w, kk in adj[path[-1]] if not used[kk]]
                if not nxt:
                    break
                w, kk = nxt[0]
                used[kk] = True
                path.append(w)
            arcs.append(path)
        return arcs

    # ---- text format --------------------------------------------------------
    def to_text(self) -> str:
        lines = [
            f"n {int(i)} {x!r} {y!r} {z!r} {d!r}"
            for i, (x, y, z), d in zip(
                self.node_ids.tolist(), self.positions.tolist(), self.density.tolist()
            )
        ]
        ids = self.node_ids
        lines += [f"a {int(ids[a])} {int(ids[b])}" for a, b in self.edges.tolist()]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "SkeletonGraph":
        ids, pos, dens, arcs = [], [], [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            p = line.split()
            try:
                if p[0] == "n" and len(p) == 6:
                    ids.append(int(p[1]))
                    pos.append(tuple(float(v) for v in p[2:5]))
                    dens.append(float(p[5]))
                elif p[0] == "a" and len(p) == 3:
                    arcs.append((int(p[1]), int(p[2])))
                else:
                    raise ValueError
            except ValueError:
                raise ValueError(f"line {lineno}: malformed skeleton line {line!r}") from None
        ids = np.array(ids, dtype=np.int64)
        order = np.argsort(ids, kind="stable")
        ids = ids[order]
        lookup = {int(k): i for i, k in enumerate(ids.tolist())}
        try:
            e = np.array([sorted((lookup[a], lookup[b])) for a, b in arcs], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"arc references unknown node {exc.args[0]}") from None
        e = e.reshape(-1, 2)
        if len(e):
            e = e[np.lexsort(e.T[::-1])]
        return cls(
            ids,
            np.array(pos, dtype=np.float64).reshape(-1, 3)[order],
            np.array(dens, dtype=np.float64)[order],
            e,
            np.zeros(len(ids), dtype=bool),
        )


@njit(cache=True)
def _collect_manifolds(seeds, vertex_pair, edges, n):
    visited = np.zeros(n, dtype=np.bool_)
    out = np.empty(16 + 4 * len(seeds), dtype=np.int64)
    k = 0
    for s in range(len(seeds)):
        e = seeds[s]
        if k >= len(out):
            grown = np.empty(2 * len(out), dtype=np.int64)
            grown[:k] = out[:k]
            out = grown
        out[k] = e
        k += 1
        for side in range(2):
            u = edges[e, side]
            while not visited[u]:
                visited[u] = True
                pe = vertex_pair[u]
                if pe < 0:
                    break
                if k >= len(out):
                    grown = np.empty(2 * len(out), dtype=np.int64)
                    grown[:k] = out[:k]
                    out = grown
                out[k] = pe
                k += 1
                u = edges[pe, 0] + edges[pe, 1] - u
    return out[:k]


def _graph_from_edges(cx: Complex2, edge_ids: np.ndarray, critical_vertex: np.ndarray, seeds) -> SkeletonGraph:
    edge_ids = np.unique(edge_ids)
    if len(edge_ids) == 0:
        return SkeletonGraph.empty()
    ev = cx.edges[edge_ids]
    nodes = np.unique(ev)
    local = np.searchsorted(nodes, ev)
    return SkeletonGraph(
        node_ids=nodes,
        positions=cx.positions[nodes],
        density=cx.density[nodes],
        edges=local,
        critical=critical_vertex[nodes],
        saddles=np.searchsorted(nodes, cx.edges[np.asarray(seeds, dtype=np.int64)]).reshape(-1, 2),
        grid_coords=None if cx.grid_coords is None else cx.grid_coords[nodes],
    )


def simplify_field(cx: Complex2, f, tau: float = 0.0, batch: int | None = None, check=None):
    """
    Gradient field of ``-f`` with every vertex-edge pair of persistence
    <= ``tau`` cancelled in increasing persistence order (ties by pair
    index).  With ``batch`` the cancellations run in chunks of that size
    and ``check(field)`` is called after each chunk.

    Returns ``(field, pairing, stats)``.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    neg = -np.asarray(f, dtype=np.float64)
    order = lower_star_order(cx, neg)
    pairing = compute_pairing(cx, order)
    fld = init_field(cx, order)
    crit0 = fld.critical_counts()
    if check is not None:
        check(fld)

    per = pairing.vertex_edge_persistence
    sel = np.flatnonzero(per <= tau)
    sel = sel[np.argsort(per[sel], kind="stable")]
    step = len(sel) if not batch else int(batch)
    status = np.zeros(len(sel), dtype=np.int64)
    for s0 in range(0, len(sel), max(step, 1)):
        chunk = sel[s0 : s0 + step]
        status[s0 : s0 + len(chunk)] = _cancel_batch(
            pairing.vertex_edge[chunk], fld.vertex_pair, fld.edge_vertex, fld.edge_pair, cx.edges
        )
        if check is not None:
            check(fld)
    skipped = np.flatnonzero(status)
    for k in skipped:
        v, e = pairing.vertex_edge[sel[k]]
        logger.debug("skip cancel (%d, %d): %s", v, e, _SKIP_REASON[int(status[k])])
    if len(skipped):
        logger.warning("%d of %d cancellations skipped", len(skipped), len(sel))
    stats = {
        "n_vertices": cx.n_vertices,
        "n_edges": cx.n_edges,
        "n_triangles": cx.n_triangles,
        "critical_initial": crit0,
        "critical_final": fld.critical_counts(),
        "cancelled": int(len(sel) - len(skipped)),
        "skipped": int(len(skipped)),
    }
    return fld, pairing, stats


def dimorsc(cx: Complex2, f=None, tau: float = 0.0) -> SkeletonGraph:
    """
    Ridge skeleton of ``f`` (default: the complex density) on ``cx``.

    Vertex-edge pairs of ``-f`` with persistence <= ``tau`` are cancelled in
    increasing persistence order (ties by pair index); then the 1-unstable
    manifolds of all remaining critical edges whose persistence exceeds
    ``tau`` are merged into one graph.  Edges that carry a 1-cycle of the
    complex have infinite persistence and are always kept.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    f = cx.density if f is None else np.asarray(f, dtype=np.float64)
    if cx.n_vertices == 0:
        return SkeletonGraph.empty()
    fld, pairing, stats = simplify_field(cx, f, tau)
    edge_per = pairing.edge_persistence()
    crit_e = fld.critical_edges
    seeds = crit_e[edge_per[crit_e] > tau]
    manifold = _collect_manifolds(seeds, fld.vertex_pair, cx.edges, cx.n_vertices)
    g = _graph_from_edges(cx, manifold, fld.vertex_pair < 0, seeds)
    stats["saddles"] = int(len(seeds))
    g.stats = stats
    return g
