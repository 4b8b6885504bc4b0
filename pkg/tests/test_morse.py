import logging

import numpy as np
import pytest

from morseskel.complex import Complex2, DensityVolume, build_grid_complex, gaussian_smooth
from morseskel.morse import (
    SkeletonGraph,
    cancel,
    dimorsc,
    extract_unstable_1manifold,
    init_field,
    simplify_field,
)
from morseskel.persistence import compute_pairing, lower_star_order
from morseskel.phantom import PhantomSpec, generate_phantom, make_tree, point_segment_distance
from oracles import random_complex


def cx_from(n, edges, tris=(), density=None):
    d = np.zeros(n) if density is None else np.asarray(density, dtype=float)
    return Complex2(np.zeros((n, 3)), d, np.array(edges).reshape(-1, 2), np.array(tris).reshape(-1, 3))


def field_of(cx, g):
    """Lower-star field of ``g`` itself (no negation)."""
    return init_field(cx, lower_star_order(cx, np.asarray(g, dtype=float)))


def euler(cx):
    return cx.n_vertices - cx.n_edges + cx.n_triangles


# -----------------------------------------------------------------------------
# init_field
# -----------------------------------------------------------------------------
def test_single_edge_field_on_negated_density():
    cx = cx_from(2, [[0, 1]])
    fld = field_of(cx, [-0.0, -1.0])
    assert fld.vertex_pair.tolist() == [0, -1]
    assert fld.critical_vertices.tolist() == [1]
    assert len(fld.critical_edges) == 0


def test_constant_path_has_one_critical_vertex():
    cx = cx_from(3, [[0, 1], [1, 2]])
    fld = field_of(cx, [0.0, 0.0, 0.0])
    assert fld.critical_counts() == (1, 0, 0)
    assert fld.critical_vertices.tolist() == [0]


def test_filled_triangle_field():
    cx = cx_from(3, [[0, 1], [0, 2], [1, 2]], [[0, 1, 2]])
    fld = field_of(cx, [0.0, 1.0, 2.0])
    assert fld.critical_counts() == (1, 0, 0)
    fld.validate()


def test_field_invariants_on_random_complexes(rng):
    for _ in range(200):
        cx, f = random_complex(rng)
        fld = field_of(cx, -f)
        fld.validate()
        assert fld.morse_euler() == euler(cx)
        # every lower-star critical cell is a birth or death in its own lower star,
        # so critical counts cannot be below the Betti numbers
        p = compute_pairing(cx, lower_star_order(cx, -f))
        c0, c1, c2 = fld.critical_counts()
        assert c0 >= len(p.essential_vertices)
        assert c1 >= len(p.essential_edges)


def test_field_critical_cells_are_zero_persistence_complement(rng):
    # critical cells of the lower-star field are exactly the cells in pairs of
    # positive persistence plus the essential ones
    for _ in range(100):
        cx, _ = random_complex(rng)
        g = rng.permutation(cx.n_vertices).astype(float)
        fld = field_of(cx, g)
        p = compute_pairing(cx, lower_star_order(cx, g))
        crit_v = {int(v) for (v, e), per in zip(p.vertex_edge, p.vertex_edge_persistence) if per > 0}
        crit_v |= set(p.essential_vertices.tolist())
        assert set(fld.critical_vertices.tolist()) == crit_v
        crit_e = {int(e) for (v, e), per in zip(p.vertex_edge, p.vertex_edge_persistence) if per > 0}
        crit_e |= {int(e) for (e, t), per in zip(p.edge_triangle, p.edge_triangle_persistence) if per > 0}
        crit_e |= set(p.essential_edges.tolist())
        assert set(fld.critical_edges.tolist()) == crit_e


def test_euler_relation_on_grid(rng):
    for _ in range(10):
        vol = DensityVolume(rng.random((3, 5, 5)))
        cx = build_grid_complex(vol, 0.3)
        fld = field_of(cx, -cx.density)
        fld.validate()
        assert fld.morse_euler() == euler(cx)


# -----------------------------------------------------------------------------
# cancel
# -----------------------------------------------------------------------------
def test_cancel_on_three_vertex_path():
    cx = cx_from(3, [[0, 1], [1, 2]])
    f = np.array([10.0, 5.0, 8.0])
    fld = field_of(cx, -f)
    assert fld.critical_counts() == (2, 1, 0)
    saddle = int(fld.critical_edges[0])
    out = cancel(fld, 2, saddle)  # v2 is the higher minimum of -f
    assert out.critical_counts() == (1, 0, 0)
    assert out.critical_vertices.tolist() == [0]
    assert out.morse_euler() == fld.morse_euler()
    out.validate()
    # the original is left untouched
    assert fld.critical_counts() == (2, 1, 0)


def test_cancel_removes_exactly_two_critical_cells(rng):
    for _ in range(100):
        cx, f = random_complex(rng)
        fld, pairing, _ = simplify_field(cx, f, 0.0)
        before = sum(fld.critical_counts())
        for (v, e), per in zip(pairing.vertex_edge, pairing.vertex_edge_persistence):
            if fld.vertex_pair[v] < 0 and fld.edge_vertex[e] < 0 and fld.edge_pair[e] < 0:
                out = cancel(fld, int(v), int(e))
                if out is not fld:
                    assert sum(out.critical_counts()) == before - 2
                    out.validate()
                break


def test_cancel_with_two_vpaths_is_skipped(caplog):
    # hollow triangle: v1 and v2 both flow into v0, so the saddle e12 has two
    # V-paths to v0
    cx = cx_from(3, [[0, 1], [0, 2], [1, 2]])
    fld = field_of(cx, [0.0, 1.0, 2.0])
    assert fld.critical_vertices.tolist() == [0]
    assert fld.critical_edges.tolist() == [2]
    with caplog.at_level(logging.WARNING, logger="morseskel.morse"):
        out = cancel(fld, 0, 2)
    assert out is fld
    assert fld.critical_counts() == (1, 1, 0)
    assert "two V-paths" in caplog.text


def test_cancel_non_critical_is_skipped(caplog):
    cx = cx_from(3, [[0, 1], [1, 2]])
    fld = field_of(cx, [-10.0, -5.0, -8.0])
    with caplog.at_level(logging.WARNING, logger="morseskel.morse"):
        out = cancel(fld, 1, 1)  # v1 is already matched with e01
    assert out is fld
    assert "not critical" in caplog.text


# -----------------------------------------------------------------------------
# 1-unstable manifolds
# -----------------------------------------------------------------------------
def test_manifold_of_all_critical_edge():
    cx = cx_from(2, [[0, 1]])
    fld = field_of(cx, [0.0, 0.0])
    fld.vertex_pair[:] = -1
    fld.edge_vertex[:] = -1
    assert extract_unstable_1manifold(fld, 0) == ([0], [1])


def test_manifold_on_five_vertex_path():
    cx = cx_from(5, [[0, 1], [1, 2], [2, 3], [3, 4]])
    f = np.array([9.0, 7.0, 5.0, 6.0, 8.0])
    fld = field_of(cx, -f)
    assert fld.critical_vertices.tolist() == [0, 4]
    (e,) = fld.critical_edges.tolist()
    assert e in (1, 2)
    left, right = extract_unstable_1manifold(fld, e)
    ends = {left[-1], right[-1]}
    assert ends == {0, 4}
    covered = set()
    for path in (left, right):
        for a, b in zip(path, path[1:]):
            covered.add(tuple(sorted((a, b))))
    covered.add(tuple(cx.edges[e]))
    assert covered == {tuple(x) for x in cx.edges.tolist()}


def test_y_graph_manifolds_share_one_minimum():
    # centre 0; arms 0-1-2, 0-3-4, 0-5-6; density rises toward the tips
    cx = cx_from(7, [[0, 1], [1, 2], [0, 3], [3, 4], [0, 5], [5, 6]])
    f = np.array([1.0, 2.0, 10.0, 2.0, 9.0, 2.0, 8.0])
    fld = field_of(cx, -f)
    assert sorted(fld.critical_vertices.tolist()) == [2, 4, 6]
    saddles = fld.critical_edges.tolist()
    assert len(saddles) == 2
    ends = [{p[-1] for p in extract_unstable_1manifold(fld, e)} for e in saddles]
    shared = ends[0] & ends[1]
    assert len(shared) == 1
    # the shared minimum is where the centre's own V-path leads
    assert shared == {fld.descend(0)[-1]}


# -----------------------------------------------------------------------------
# dimorsc
# -----------------------------------------------------------------------------
def two_bumps():
    ny, nx = 11, 21
    y, x = np.mgrid[0:ny, 0:nx].astype(float)
    b1 = 10 * np.exp(-((x - 5) ** 2 + (y - 5) ** 2) / (2 * 1.5**2))
    b2 = 8 * np.exp(-((x - 15) ** 2 + (y - 5) ** 2) / (2 * 1.5**2))
    ridge = np.where((x >= 5) & (x <= 15), 5 * np.exp(-((y - 5) ** 2) / 2.0), 0.0)
    return DensityVolume(np.maximum(np.maximum(b1, b2), ridge)[None])


def test_single_bump_is_empty():
    y, x = np.mgrid[0:15, 0:15].astype(float)
    rng = np.random.default_rng(3)
    vol = DensityVolume((np.exp(-((x - 7) ** 2 + (y - 7) ** 2) / 8.0) + 0.01 * rng.random((15, 15)))[None])
    cx = build_grid_complex(vol, -1.0)
    assert dimorsc(cx, tau=0.05).is_empty()
    assert not dimorsc(cx, tau=0.0).is_empty()


def test_two_bumps_joined_by_ridge():
    cx = build_grid_complex(two_bumps(), -1.0)
    g = dimorsc(cx, tau=1.0)
    assert not g.is_empty()
    # one arc between the peaks along y = 5
    assert g.n_edges == g.n_nodes - 1
    deg = g.degrees()
    ends = g.positions[deg == 1]
    assert sorted(ends[:, 0].tolist()) == [5.0, 15.0]
    assert np.all(np.abs(g.positions[:, 1] - 5.0) <= 1.0)
    assert np.all(deg <= 2)
    assert g.stats["saddles"] == 1


def test_two_bumps_vanish_at_large_tau():
    cx = build_grid_complex(two_bumps(), -1.0)
    assert dimorsc(cx, tau=20.0).is_empty()


def test_negative_tau_rejected():
    with pytest.raises(ValueError):
        dimorsc(cx_from(1, []), tau=-1.0)


def test_empty_complex():
    assert dimorsc(cx_from(0, [])).is_empty()


def test_skeleton_is_subcomplex_and_deterministic(rng):
    for _ in range(50):
        cx, f = random_complex(rng)
        g = dimorsc(cx, f, tau=float(rng.integers(0, 3)))
        cx_edges = {tuple(e) for e in cx.edges.tolist()}
        for a, b in g.edges.tolist():
            assert tuple(sorted((int(g.node_ids[a]), int(g.node_ids[b])))) in cx_edges
        assert dimorsc(cx, f, tau=0.0).to_text() == dimorsc(cx, f.copy(), tau=0.0).to_text()


def test_monotone_simplification(rng):
    for _ in range(100):
        cx, f = random_complex(rng)
        sets = []
        for tau in (0.0, 1.0, 2.0, 5.0):
            fld, _, _ = simplify_field(cx, f, tau)
            sets.append((set(fld.critical_vertices.tolist()), set(fld.critical_edges.tolist())))
        for (v1, e1), (v2, e2) in zip(sets, sets[1:]):
            assert v2 <= v1 and e2 <= e1


def test_euler_preserved_after_every_batch(rng):
    for _ in range(50):
        cx, f = random_complex(rng)
        calls = []

        def check(fld):
            fld.validate()
            assert fld.morse_euler() == euler(cx)
            calls.append(1)

        _, pairing, stats = simplify_field(cx, f, 10.0, batch=1, check=check)
        assert len(calls) == 1 + stats["cancelled"] + stats["skipped"]


def test_empty_at_infinity_on_contractible_grid(rng):
    for _ in range(10):
        vol = DensityVolume(rng.random((2, 6, 6)))
        cx = build_grid_complex(vol, -1.0)
        p = compute_pairing(cx, lower_star_order(cx, -cx.density))
        finite = np.concatenate([p.vertex_edge_persistence, p.edge_triangle_persistence])
        assert dimorsc(cx, tau=float(finite.max()) + 1).is_empty()


def test_loop_survives_any_tau():
    # hollow square ring: one essential 1-cycle
    vol = np.zeros((1, 9, 9))
    vol[0, 2, 2:7] = vol[0, 6, 2:7] = vol[0, 2:7, 2] = vol[0, 2:7, 6] = 1.0
    vol[0, 2, 4] = 2.0
    cx = build_grid_complex(DensityVolume(vol), 0.5)
    g = dimorsc(cx, tau=1e9)
    # the Freudenthal diagonals fill two corners, which shortcut the ring
    assert g.n_edges == g.n_nodes >= 12
    assert np.all(g.degrees() == 2)


def test_ridge_fidelity_on_phantom():
    shape = (48, 48, 12)
    tree = make_tree("Y", shape, seed=4)
    ph = generate_phantom(PhantomSpec(shape, tree=tree, noise=0.1, seed=4))
    vol = gaussian_smooth(ph.volume, 1.0, 2)
    g = dimorsc(build_grid_complex(vol, 0.2), tau=0.0)
    d = point_segment_distance(g.positions, *np.moveaxis(tree.segments, 1, 0)).min(axis=1)
    # the skeleton may wander onto short noise spurs; most of it rides the tubes
    assert np.mean(d <= 1.5) >= 0.8


def test_skeleton_text_round_trip(rng):
    cx = build_grid_complex(two_bumps(), -1.0)
    g = dimorsc(cx, tau=1.0)
    h = SkeletonGraph.from_text(g.to_text())
    np.testing.assert_array_equal(h.node_ids, g.node_ids)
    np.testing.assert_array_equal(h.edges, g.edges)
    np.testing.assert_array_equal(h.positions, g.positions)
    assert h.to_text() == g.to_text()
    with pytest.raises(ValueError, match="line 1"):
        SkeletonGraph.from_text("q 1 2\n")
    with pytest.raises(ValueError, match="unknown node"):
        SkeletonGraph.from_text("n 0 0 0 0 1\na 0 5\n")


def test_arcs_split_at_branch_points():
    from helpers import make_skeleton

    g = make_skeleton([[0, 0, 0], [1, 0, 0], [2, 0, 0], [1, 1, 0], [1, 2, 0]], [[0, 1], [1, 2], [1, 3], [3, 4]])
    arcs = sorted(map(sorted, g.arcs()))
    assert arcs == [[0, 1], [1, 2], [1, 3, 4]]
    ring = make_skeleton(np.zeros((4, 3)), [[0, 1], [1, 2], [2, 3], [0, 3]])
    (arc,) = ring.arcs()
    assert arc[0] == arc[-1] and len(arc) == 5
