import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morseskel.phantom import (
    PhantomSpec,
    TruthTree,
    generate_phantom,
    load_spec,
    make_tree,
    point_segment_distance,
    render_tubes,
    score,
)


def test_point_segment_distance():
    d = point_segment_distance([[0, 1, 0], [-2, 0, 0], [5, 0, 0]], [[0, 0, 0]], [[3, 0, 0]])
    np.testing.assert_allclose(d[:, 0], [1.0, 2.0, 2.0])
    # degenerate segment is a point
    assert point_segment_distance([[3, 4, 0]], [[0, 0, 0]], [[0, 0, 0]])[0, 0] == pytest.approx(5.0)


def test_straight_tube_peaks_on_axis():
    shape = (40, 21, 11)
    tree = TruthTree([[5, 10, 5], [34, 10, 5]], [-1, 0])
    ph = generate_phantom(PhantomSpec(shape, tree=tree))
    v = ph.volume.values
    for x in range(8, 32):
        sec = v[:, :, x]
        z, y = np.unravel_index(np.argmax(sec), sec.shape)
        assert (y, z) == (10, 5)
        assert sec[z, y] == pytest.approx(1.0)


def test_tube_profile_is_gaussian():
    v = render_tubes((20, 20, 20), [[[2, 10, 10], [17, 10, 10]]], amplitude=2.0, sigma=1.5)
    assert v[10, 13, 10] == pytest.approx(2.0 * np.exp(-9 / (2 * 1.5**2)))
    assert v[10, 10, 0] == pytest.approx(2.0 * np.exp(-4 / (2 * 1.5**2)))  # 2 past the end cap


@pytest.mark.parametrize("kind,tips,junctions", [("Y", 3, 1), ("H", 4, 2), ("straight", 2, 0)])
def test_tree_shapes(kind, tips, junctions):
    for seed in range(10):
        t = make_tree(kind, (128, 128, 32), seed)
        assert t.n_tips() == tips
        assert len(t.junctions()) == junctions
        assert np.all(t.positions >= 0) and np.all(t.positions <= np.array([127, 127, 31]))


def test_random_tree_is_a_tree():
    for seed in range(20):
        t = make_tree("random", (96, 96, 24), seed)
        assert np.sum(t.parent < 0) == 1
        assert np.all(t.parent[1:] < np.arange(1, len(t.parent)))
        assert t.n_tips() >= 3
        lengths = np.linalg.norm(t.segments[:, 1] - t.segments[:, 0], axis=1)
        assert lengths.min() >= 4


def test_straight_angle_option():
    t = make_tree("straight", (64, 64, 16), angle=90, center=(32, 32, 8), length=20)
    np.testing.assert_allclose(t.positions, [[32, 22, 8], [32, 42, 8]], atol=1e-12)


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_tree("zigzag", (10, 10, 10))


def test_generation_is_deterministic():
    spec = PhantomSpec((48, 40, 12), kind="Y", noise=0.3, seed=7)
    a = generate_phantom(spec).volume.values
    b = generate_phantom(spec).volume.values
    assert a.tobytes() == b.tobytes()
    c = generate_phantom(PhantomSpec((48, 40, 12), kind="Y", noise=0.3, seed=8)).volume.values
    assert a.tobytes() != c.tobytes()


def test_noise_is_bounded_and_clipped():
    spec = PhantomSpec((30, 30, 8), kind="Y", noise=0.25, amplitude=2.0, seed=1)
    ph = generate_phantom(spec)
    clean = generate_phantom(PhantomSpec((30, 30, 8), kind="Y", amplitude=2.0, seed=1)).volume.values
    diff = ph.volume.values - clean
    assert np.all(ph.volume.values >= 0)
    assert np.all(diff <= 0.5 + 1e-12) and np.all(diff >= -0.5 - 1e-12)
    assert np.any(ph.volume.values == 0)


def test_truth_outside_volume_rejected():
    tree = TruthTree([[0, 0, 0], [50, 0, 0]], [-1, 0])
    with pytest.raises(ValueError, match="outside"):
        generate_phantom(PhantomSpec((20, 20, 5), tree=tree))


def test_gap_suppresses_signal():
    tree = TruthTree([[2, 10, 5], [37, 10, 5]], [-1, 0])
    ph = generate_phantom(PhantomSpec((40, 21, 11), tree=tree, gaps=[(0, 15, 4)]))
    v = ph.volume.values[5, 10]
    assert v[10] == pytest.approx(1.0)
    assert v[27] == pytest.approx(1.0)
    # centre of the gap is 2 voxels from both ends
    assert v[19] == pytest.approx(np.exp(-4 / (2 * 1.5**2)))
    assert v[19] < 0.5


def test_load_spec(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"shape": [32, 32, 8], "kind": "H", "noise": 0.1, "seed": 3, "gaps": [[1, 2, 3]]}))
    s = load_spec(p)
    assert s.shape == (32, 32, 8) and s.kind == "H" and s.noise == 0.1 and s.gaps == [(1, 2, 3)]
    p.write_text(json.dumps({"shape": [20, 20, 6], "nodes": [[3, 3, 3], [15, 3, 3]], "parent": [-1, 0]}))
    s = load_spec(p)
    assert s.tree.positions.shape == (2, 3)
    assert generate_phantom(s).volume.dims == (20, 20, 6)


# -----------------------------------------------------------------------------
# score
# -----------------------------------------------------------------------------
def line(n=11, y=0.0):
    return TruthTree([[i, y, 0] for i in range(n)], [-1] + list(range(n - 1)))


def test_score_identical():
    t = make_tree("Y", (64, 64, 16), 2)
    s = score(t, t, 2.0)
    assert (s.precision, s.recall, s.leaf_delta, s.connected, s.empty) == (1.0, 1.0, 0, True, False)


def test_score_spurious_branch():
    truth = line(11)
    pos = np.vstack([truth.positions, [[5, 20 + k, 0] for k in range(4)]])
    par = np.r_[truth.parent, [5, 11, 12, 13]]
    s = score(TruthTree(pos, par), truth, 1.0)
    assert s.recall == 1.0
    assert s.precision == pytest.approx(11 / 15)
    assert s.leaf_delta == 1


def test_score_shift_by_two_epsilon():
    s = score(line(11, y=4.0), line(11), 2.0)
    assert s.precision == 0.0 and s.recall == 0.0


def test_score_empty_and_components():
    truth = make_tree("Y", (64, 64, 16), 1)
    s = score(TruthTree(np.zeros((0, 3)), np.zeros(0)), truth, 2.0)
    assert s.empty and not s.connected and s.recall == 0 and s.leaf_delta == -3
    two = TruthTree([[0, 0, 0], [1, 0, 0], [5, 0, 0], [6, 0, 0]], [-1, 0, -1, 2])
    assert not score(two, line(), 1.0).connected
    with pytest.raises(ValueError):
        score(truth, truth, 0.0)
    assert score(truth, truth, 2.0).tsv() == "1.000000\t1.000000\t0\t1\t0"


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_score_self_is_perfect(seed, eps):
    t = make_tree("random", (80, 80, 20), seed)
    s = score(t, t, eps)
    assert s.precision == 1.0 and s.recall == 1.0 and s.leaf_delta == 0
