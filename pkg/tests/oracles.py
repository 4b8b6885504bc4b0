"""Brute-force reference implementations used only by the tests."""

from __future__ import annotations

import itertools

import numpy as np


def naive_pairing(cx, order):
    """
    Dense Z/2 boundary matrix over all simplices in filtration order,
    reduced left to right with no shortcuts.
    """
    n, m = cx.n_vertices, cx.n_edges
    N = cx.n_simplices
    gid_faces = {}
    for e, (a, b) in enumerate(cx.edges.tolist()):
        gid_faces[n + e] = [a, b]
    edge_id = {tuple(e): i for i, e in enumerate(cx.edges.tolist())}
    for k, (a, b, c) in enumerate(cx.triangles.tolist()):
        gid_faces[n + m + k] = [n + edge_id[(a, b)], n + edge_id[(a, c)], n + edge_id[(b, c)]]
    pos = order.position
    D = np.zeros((N, N), dtype=np.uint8)
    for g, faces in gid_faces.items():
        for fg in faces:
            D[pos[fg], pos[g]] = 1

    def low(col):
        nz = np.flatnonzero(col)
        return nz[-1] if len(nz) else -1

    lows = {}
    pairs = []
    for j in range(N):
        while True:
            lj = low(D[:, j])
            if lj < 0 or lj not in lows:
                break
            D[:, j] ^= D[:, lows[lj]]
        if lj >= 0:
            lows[lj] = j
            pairs.append((int(order.order[lj]), int(order.order[j])))
    paired = {s for p in pairs for s in p}
    ve, et, ess = set(), set(), set()
    for b, d in pairs:
        if b < n:
            ve.add((b, d - n))
        else:
            et.add((b - n, d - n - m))
    for g in range(N):
        if g not in paired:
            if g < n:
                ess.add((0, g))
            elif g < n + m:
                ess.add((1, g - n))
            else:
                ess.add((2, g - n - m))
    return ve, et, ess


def count_components(n, edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
    return len({find(i) for i in range(n)})


def random_complex(rng, max_simplices=200, n_values=None):
    """Random 2-complex: random vertex set, edges, then triangles on closed edge triples."""
    from morseskel.complex import Complex2

    n = int(rng.integers(1, 25))
    pairs = list(itertools.combinations(range(n), 2))
    rng.shuffle(pairs)
    m = int(rng.integers(0, min(len(pairs), max_simplices - n) + 1)) if pairs else 0
    edges = sorted(pairs[:m])
    es = set(edges)
    cand = [
        t
        for t in itertools.combinations(range(n), 3)
        if (t[0], t[1]) in es and (t[0], t[2]) in es and (t[1], t[2]) in es
    ]
    rng.shuffle(cand)
    budget = max(0, max_simplices - n - m)
    k = int(rng.integers(0, min(len(cand), budget) + 1)) if cand else 0
    tris = sorted(cand[:k])
    if n_values is None:
        # small integer range forces many ties
        f = rng.integers(0, max(2, n // 3), size=n).astype(float)
    else:
        f = rng.choice(n_values, size=n).astype(float)
    return Complex2(rng.normal(size=(n, 3)), f, np.array(edges).reshape(-1, 2), np.array(tris).reshape(-1, 3)), f


def super_level_tree_pairs(parent, g):
    """
    0-dimensional persistence of the super-level set filtration of ``g`` on a
    tree, by union-find on nodes sorted by decreasing ``g`` (ties: lower index
    first).  The surviving class is paired with the root's value.
    Returns a sorted list of (birth node, death node, persistence).
    """
    n = len(g)
    adj = [[] for _ in range(n)]
    root = None
    for v, p in enumerate(parent):
        if p < 0:
            root = v
        else:
            adj[v].append(p)
            adj[p].append(v)
    order = sorted(range(n), key=lambda v: (-g[v], v))
    rank = {v: i for i, v in enumerate(order)}
    uf = list(range(n))
    born = list(range(n))  # oldest max of each component (root of uf)

    def find(x):
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        return x

    seen = [False] * n
    pairs = []
    for v in order:
        seen[v] = True
        roots = {find(u) for u in adj[v] if seen[u]}
        if not roots:
            continue
        comps = sorted(roots, key=lambda r: rank[born[r]])
        elder = comps[0]
        for r in comps[1:]:
            pairs.append((born[r], v, g[born[r]] - g[v]))
            uf[r] = elder
        # v itself joins the elder component; if v was never a birth it has no class
        uf[v] = elder
    top = find(order[0])
    pairs.append((born[top], root, g[born[top]] - g[root]))
    return sorted(pairs)
