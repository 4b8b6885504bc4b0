"""
Rooted tree summaries of skeleton graphs and their persistence simplification.

The skeleton graph is first flattened into an :class:`AugmentedGraph` whose
edges are single complex edges.  Each connected component is turned into a
spanning tree (shortest-path tree from a root, or maximum spanning tree on
mean edge density), a root distance ``g`` is computed, and the tree is
peeled into branches: the root path to the farthest leaf first, then
recursively in the subtrees hanging off it.  A branch's persistence is
``g(leaf) - g(start)``; dropping low-persistence branches simplifies the
tree while keeping it connected.
"""

from __future__ import annotations

import heapq
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .morse import SkeletonGraph

logger = logging.getLogger(__name__)

__all__ = [
    "AugmentedGraph",
    "Branch",
    "SummaryTree",
    "augment",
    "select_root",
    "shortest_path_tree",
    "maximum_spanning_tree",
    "compute_g",
    "branch_decompose",
    "simplify_tree",
    "summarize",
    "write_swc",
    "read_swc",
    "format_swc",
]


# -----------------------------------------------------------------------------
# Augmented graph
# -----------------------------------------------------------------------------
@dataclass
class AugmentedGraph:
    """Skeleton graph with one node per polyline vertex and one edge per complex edge."""

    node_ids: np.ndarray
    positions: np.ndarray
    density: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray
    n_components: int

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per node, sorted ``(neighbour, edge index)`` pairs."""
        adj = [[] for _ in range(self.n_nodes)]
        for k, (a, b) in enumerate(self.edges.tolist()):
            adj[a].append((b, k))
            adj[b].append((a, k))
        for lst in adj:
            lst.sort()
        return adj

    def component(self, label: int) -> "AugmentedGraph":
        keep = np.flatnonzero(self.labels == label)
        local = np.full(self.n_nodes, -1, dtype=np.int64)
        local[keep] = np.arange(len(keep))
        emask = self.labels[self.edges[:, 0]] == label if len(self.edges) else np.zeros(0, bool)
        return AugmentedGraph(
            self.node_ids[keep],
            self.positions[keep],
            self.density[keep],
            local[self.edges[emask]],
            self.lengths[emask],
            np.zeros(len(keep), dtype=np.int64),
            1,
        )


def augment(g: SkeletonGraph) -> AugmentedGraph:
    """Merge all arc polylines into one node set keyed by vertex id."""
    ids, inv = np.unique(g.node_ids, return_inverse=True)
    pos = np.zeros((len(ids), 3))
    dens = np.zeros(len(ids))
    pos[inv] = g.positions
    dens[inv] = g.density
    e = np.sort(inv[g.edges].reshape(-1, 2), axis=1) if len(g.edges) else np.zeros((0, 2), np.int64)
    e = e[e[:, 0] != e[:, 1]]
    if len(e):
        e = np.unique(e, axis=0)
    lengths = np.linalg.norm(pos[e[:, 0]] - pos[e[:, 1]], axis=1) if len(e) else np.zeros(0)
    n = len(ids)
    if n:
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        k, labels = connected_components(adj, directed=False)
    else:
        k, labels = 0, np.zeros(0, dtype=np.int64)
    return AugmentedGraph(ids, pos, dens, e.astype(np.int64), lengths, labels.astype(np.int64), int(k))


def select_root(g: AugmentedGraph, hint=None) -> int:
    """Nearest node to ``hint``, else the densest node; ties go to the lower index."""
    if g.n_nodes == 0:
        raise ValueError("cannot root an empty graph")
    if hint is not None:
        d = np.linalg.norm(g.positions - np.asarray(hint, dtype=np.float64), axis=1)
        return int(np.argmin(d))
    return int(np.argmax(g.density))


# -----------------------------------------------------------------------------
# Summary tree
# -----------------------------------------------------------------------------
@dataclass
class Branch:
    nodes: list[int]  # start (junction or root) ... leaf
    persistence: float

    @property
    def start(self) -> int:
        return self.nodes[0]

    @property
    def leaf(self) -> int:
        return self.nodes[-1]


@dataclass
class SummaryTree:
    """
    Rooted spanning tree of one graph component.

    Node arrays are local (``0..n-1``); ``node_ids`` keeps the skeleton keys.
    ``parent[root] == -1``.  ``g`` and ``branches`` are filled by
    :func:`compute_g` and :func:`branch_decompose`.
    """

    node_ids: np.ndarray
    positions: np.ndarray
    density: np.ndarray
    parent: np.ndarray
    root: int
    weight_mode: str = "uniform"
    g: np.ndarray | None = None
    branches: list[Branch] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def edges(self) -> np.ndarray:
        child = np.flatnonzero(self.parent >= 0)
        return np.stack([self.parent[child], child], axis=1).reshape(-1, 2)

    def children(self) -> list[list[int]]:
        ch = [[] for _ in range(self.n_nodes)]
        for v, p in enumerate(self.parent.tolist()):
            if p >= 0:
                ch[p].append(v)
        return ch

    def bfs_order(self) -> list[int]:
        ch = self.children()
        out, q = [], deque([self.root])
        while q:
            v = q.popleft()
            out.append(v)
            q.extend(ch[v])
        return out

    def leaves(self) -> np.ndarray:
        """Degree-1 nodes other than the root."""
        deg = np.bincount(self.edges.reshape(-1), minlength=self.n_nodes)
        leaf = deg == 1
        leaf[self.root] = False
        return np.flatnonzero(leaf)

    def tips(self) -> np.ndarray:
        """All degree-1 nodes, the root included."""
        deg = np.bincount(self.edges.reshape(-1), minlength=self.n_nodes)
        return np.flatnonzero(deg == 1)

    def subtree(self, keep: np.ndarray) -> "SummaryTree":
        """Restrict to a node subset that contains the root and is parent-closed."""
        keep = np.asarray(sorted(set(int(k) for k in keep)), dtype=np.int64)
        local = np.full(self.n_nodes, -1, dtype=np.int64)
        local[keep] = np.arange(len(keep))
        par = self.parent[keep]
        par = np.where(par >= 0, local[np.maximum(par, 0)], -1)
        if np.any((par < 0) & (keep != self.root)):
            raise ValueError("subtree node set is not parent-closed")
        return SummaryTree(
            self.node_ids[keep],
            self.positions[keep],
            self.density[keep],
            par,
            int(local[self.root]),
            self.weight_mode,
            None if self.g is None else self.g[keep],
        )


def _tree_from_parent(g: AugmentedGraph, parent: np.ndarray, root: int) -> SummaryTree:
    return SummaryTree(g.node_ids, g.positions, g.density, parent.astype(np.int64), int(root))


def shortest_path_tree(g: AugmentedGraph, root: int, weight: str = "hops") -> SummaryTree:
    """
    Shortest-path tree of the component containing ``root``.

    ``weight="hops"`` counts edges (breadth-first); ``weight="inverse_density"``
    uses ``2 / (rho(u) + rho(v))`` per edge.  Among equally short routes a
    node takes the lowest-index parent.
    """
    comp = g.component(int(g.labels[root]))
    root = int(np.searchsorted(comp.node_ids, g.node_ids[root]))
    adj = comp.adjacency()
    n = comp.n_nodes
    if weight == "hops":
        dist = np.full(n, -1, dtype=np.int64)
        dist[root] = 0
        q = deque([root])
        while q:
            u = q.popleft()
            for w, _ in adj[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    q.append(w)
        parent = np.full(n, -1, dtype=np.int64)
        for v in range(n):
            if v == root:
                continue
            parent[v] = min(w for w, _ in adj[v] if dist[w] == dist[v] - 1)
        return _tree_from_parent(comp, parent, root)
    if weight != "inverse_density":
        raise ValueError(f"unknown SPT weight {weight!r}")
    rho = np.maximum(comp.density, 1e-12)
    w_e = 2.0 / (rho[comp.edges[:, 0]] + rho[comp.edges[:, 1]]) if len(comp.edges) else np.zeros(0)
    dist = np.full(n, np.inf)
    dist[root] = 0.0
    heap = [(0.0, root)]
    done = np.zeros(n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for w, k in adj[u]:
            nd = d + w_e[k]
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    parent = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        if v == root:
            continue
        cands = [w for w, k in adj[v] if np.isclose(dist[w] + w_e[k], dist[v], rtol=1e-12, atol=0.0) and dist[w] < dist[v]]
        parent[v] = min(cands)
    return _tree_from_parent(comp, parent, root)


def maximum_spanning_tree(g: AugmentedGraph, hint=None) -> list[SummaryTree]:
    """
    Maximum spanning forest on mean edge density (Kruskal; ties by lower
    edge index), one rooted tree per component.  Each tree is rooted by
    :func:`select_root` on its component.
    """
    e = g.edges
    w = 0.5 * (g.density[e[:, 0]] + g.density[e[:, 1]]) if len(e) else np.zeros(0)
    order = np.lexsort((np.arange(len(e)), -w))
    uf = np.arange(g.n_nodes)

    def find(x):
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        return x

    chosen = []
    for k in order:
        a, b = find(e[k, 0]), find(e[k, 1])
        if a != b:
            uf[a] = b
            chosen.append(k)
    chosen = np.sort(np.asarray(chosen, dtype=np.int64))
    forest = AugmentedGraph(
        g.node_ids, g.positions, g.density, e[chosen], g.lengths[chosen], g.labels, g.n_components
    )
    out = []
    for lab in range(g.n_components):
        comp = forest.component(lab)
        r = select_root(comp, hint)
        out.append(shortest_path_tree(comp, r))  # on a tree every node has one route
    return out


def compute_g(t: SummaryTree, weight_mode: str = "uniform") -> np.ndarray:
    """Weighted root distance ``g(v) = sum length(e) * weight(e)`` along the tree path."""
    if weight_mode not in ("uniform", "intensity"):
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    g = np.zeros(t.n_nodes)
    for v in t.bfs_order():
        p = t.parent[v]
        if p < 0:
            continue
        length = float(np.linalg.norm(t.positions[v] - t.positions[p]))
        w = 1.0 if weight_mode == "uniform" else 0.5 * (t.density[v] + t.density[p])
        g[v] = g[p] + length * w
    t.g = g
    t.weight_mode = weight_mode
    return g


def branch_decompose(t: SummaryTree) -> list[Branch]:
    """
    Peel the tree into leaf branches.

    The first branch runs from the root to the leaf of largest ``g`` (ties:
    lower index); removing it leaves subtrees rooted at junctions on it,
    which are peeled the same way.  Returned in decreasing persistence,
    a parent branch always before the branches hanging off it.
    """
    if t.g is None:
        compute_g(t)
    g = t.g
    ch = t.children()
    best = np.arange(t.n_nodes)
    for v in reversed(t.bfs_order()):
        for c in ch[v]:
            b = best[c]
            if best[v] == v or g[b] > g[best[v]] or (g[b] == g[best[v]] and b < best[v]):
                best[v] = b
    branches = []
    queue = deque((t.root, c) for c in ch[t.root] if best[c] == best[t.root])
    queue.extend((t.root, c) for c in ch[t.root] if best[c] != best[t.root])
    while queue:
        s, c = queue.popleft()
        path = [s, c]
        while ch[path[-1]]:
            u = path[-1]
            nxt = next(w for w in ch[u] if best[w] == best[u])
            queue.extend((u, w) for w in ch[u] if w != nxt)
            path.append(nxt)
        branches.append(Branch(path, float(g[path[-1]] - g[s])))
    order = sorted(range(len(branches)), key=lambda i: (-branches[i].persistence, i))
    t.branches = [branches[i] for i in order]
    return t.branches


def simplify_tree(t: SummaryTree, tau: float | None = None, keep_n: int | None = None) -> SummaryTree:
    """
    Keep branches with persistence > ``tau`` (or the ``keep_n`` most
    persistent ones).  The result is connected and contains the root.
    """
    if (tau is None) == (keep_n is None):
        raise ValueError("give exactly one of tau / keep_n")
    if not t.branches and t.n_nodes > 1:
        branch_decompose(t)
    if keep_n is not None:
        if keep_n < 0:
            raise ValueError("keep_n must be >= 0")
        kept = t.branches[:keep_n]
    else:
        kept = [b for b in t.branches if b.persistence > tau]
        if t.branches and not kept:
            logger.warning(
                "tau=%g >= top branch persistence %g: tree reduced to its root",
                tau,
                t.branches[0].persistence,
            )
    nodes = {t.root}
    for b in kept:
        nodes.update(b.nodes)
    out = t.subtree(np.fromiter(nodes, dtype=np.int64))
    compute_g(out, t.weight_mode)
    branch_decompose(out)
    return out


def summarize(
    skel: SkeletonGraph,
    *,
    root_hint=None,
    strategy: str | None = None,
    weight_mode: str = "uniform",
    spt_weight: str = "hops",
) -> list[SummaryTree]:
    """
    One decomposed tree per connected component, in component order.

    ``strategy`` defaults to ``"spt"`` when a root hint is given and
    ``"mst"`` otherwise.
    """
    ag = augment(skel)
    if ag.n_nodes == 0:
        return []
    if strategy is None:
        strategy = "spt" if root_hint is not None else "mst"
    if strategy == "spt":
        trees = []
        for lab in range(ag.n_components):
            comp = ag.component(lab)
            trees.append(shortest_path_tree(comp, select_root(comp, root_hint), spt_weight))
    elif strategy == "mst":
        trees = maximum_spanning_tree(ag, root_hint)
    else:
        raise ValueError(f"unknown tree strategy {strategy!r}")
    for t in trees:
        compute_g(t, weight_mode)
        branch_decompose(t)
    return trees


# -----------------------------------------------------------------------------
# SWC
# -----------------------------------------------------------------------------
def format_swc(t: SummaryTree, radius: str = "constant") -> str:
    """
    7-column SWC text.  Ids run from 1 in depth-first preorder (children
    visited by increasing node index); type 0; root parent -1.
    """
    ch = t.children()
    swc_id = {}
    lines = []
    stack = [t.root]
    while stack:
        v = stack.pop()
        swc_id[v] = len(swc_id) + 1
        stack.extend(sorted(ch[v], reverse=True))
        x, y, z = t.positions[v]
        r = 1.0 if radius == "constant" else float(np.sqrt(max(t.density[v], 0.0)))
        p = t.parent[v]
        pid = -1 if p < 0 else swc_id[p]
        lines.append(f"{swc_id[v]} 0 {x:.6f} {y:.6f} {z:.6f} {r:.6f} {pid}")
    return "\n".join(lines) + "\n"


def write_swc(t: SummaryTree, path, radius: str = "constant") -> None:
    Path(path).write_text(format_swc(t, radius))


@dataclass
class SWCTree:
    positions: np.ndarray
    parent: np.ndarray
    radius: np.ndarray


def read_swc(path) -> SWCTree:
    """Read any SWC file; ids are remapped to 0-based row order."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        p = line.split()
        if len(p) != 7:
            raise ValueError(f"{path}:{lineno}: expected 7 SWC columns")
        rows.append((int(p[0]), float(p[2]), float(p[3]), float(p[4]), float(p[5]), int(p[6])))
    index = {r[0]: i for i, r in enumerate(rows)}
    try:
        parent = np.array([-1 if r[5] < 0 else index[r[5]] for r in rows], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"{path}: parent id {exc.args[0]} not defined") from None
    pos = np.array([r[1:4] for r in rows], dtype=np.float64).reshape(-1, 3)
    return SWCTree(pos, parent, np.array([r[4] for r in rows]))
