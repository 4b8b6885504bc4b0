import json

import numpy as np
import pytest

from morseskel.complex import build_grid_complex, save_complex, save_volume
from morseskel.phantom import PhantomSpec, generate_phantom
from morseskel.pipeline import PipelineConfig, PipelineError, read_config, run_pipeline
from morseskel.treeify import read_swc
from test_morse import two_bumps


@pytest.fixture
def y_phantom(tmp_path):
    shape = (64, 64, 16)
    ph = generate_phantom(PhantomSpec(shape, kind="Y", noise=0.15, seed=3))
    path = tmp_path / "y.raw"
    save_volume(ph.volume, path)
    return ph, path


def test_two_bumps_give_one_path(tmp_path):
    save_volume(two_bumps(), tmp_path / "b.raw")
    cfg = PipelineConfig(
        input=str(tmp_path / "b.raw"), smooth_sigma=0, threshold=0.0, skeleton_tau=1.0, output_dir=str(tmp_path / "out")
    )
    res = run_pipeline(cfg)
    assert len(res.swc_paths) == 1
    swc = read_swc(res.swc_paths[0])
    deg = np.bincount(np.r_[np.flatnonzero(swc.parent >= 0), swc.parent[swc.parent >= 0]], minlength=len(swc.parent))
    assert np.all(deg <= 2) and np.sum(deg == 1) == 2
    assert res.report["status"] == "ok"


def test_keep_n_on_y_phantom(y_phantom, tmp_path):
    ph, path = y_phantom
    root = tuple(ph.truth.positions[0])
    cfg = PipelineConfig(input=str(path), threshold=0.2, root=root, keep_n=3, output_dir=str(tmp_path / "o"))
    res = run_pipeline(cfg)
    assert len(res.trees) >= 1
    main = max(res.trees, key=lambda t: t.n_nodes)
    assert len(main.leaves()) == 3


def test_huge_skeleton_tau_writes_nothing(y_phantom, tmp_path):
    _, path = y_phantom
    cfg = PipelineConfig(input=str(path), threshold=0.2, skeleton_tau=1e9, output_dir=str(tmp_path / "o"), report=str(tmp_path / "r.json"))
    res = run_pipeline(cfg)
    assert res.empty and res.swc_paths == []
    assert list((tmp_path / "o").glob("*.swc")) == []
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["status"] == "empty" and rep["components"] == 0


def test_report_timings_cover_wall_time(y_phantom, tmp_path):
    _, path = y_phantom
    for tiled in (False, True):
        cfg = PipelineConfig(input=str(path), threshold=0.2, tiled=tiled, tile=(40, 40), overlap=5, output_dir=str(tmp_path / "o"))
        rep = run_pipeline(cfg).report
        total = sum(rep["steps"].values())
        assert total <= rep["wall_seconds"]
        assert total >= 0.95 * rep["wall_seconds"]
        assert ("skeleton_tiled" in rep["steps"]) == tiled
        assert "critical_initial" in json.dumps(rep["skeleton_stats"]) or tiled


def test_outputs_are_deterministic(y_phantom, tmp_path):
    _, path = y_phantom
    outs = []
    for k, (tiled, workers) in enumerate([(False, 1), (False, 1), (True, 1), (True, 2)]):
        d = tmp_path / f"o{k}"
        run_pipeline(PipelineConfig(input=str(path), threshold=0.2, tiled=tiled, tile=(40, 40), workers=workers, output_dir=str(d)))
        outs.append({p.name: p.read_bytes() for p in sorted(d.glob("*.swc"))})
    assert outs[0] == outs[1]
    assert outs[2] == outs[3]
    assert outs[0]


def test_points_and_complex_inputs(tmp_path):
    pts = tmp_path / "c.pts"
    vol = two_bumps()
    lines = [
        f"p {x + 10} {y - 3} {0} {float(vol.values[0, y, x])!r}" for y in range(vol.values.shape[1]) for x in range(vol.values.shape[2])
    ]
    pts.write_text("\n".join(lines) + "\n")
    res = run_pipeline(PipelineConfig(input=str(pts), smooth_sigma=0, threshold=0.0, skeleton_tau=1.0, output_dir=str(tmp_path / "p")))
    (t,) = res.trees
    assert sorted(t.positions[t.tips(), 0].tolist()) == [15.0, 25.0]
    np.testing.assert_allclose(t.positions[:, 1], 2.0, atol=1.0)

    cxp = tmp_path / "b.cx"
    save_complex(build_grid_complex(vol, -1.0), cxp)
    res = run_pipeline(PipelineConfig(input=str(cxp), skeleton_tau=1.0, output_dir=str(tmp_path / "c")))
    assert len(res.trees) == 1 and len(res.trees[0].tips()) == 2


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(input="x", tree_tau=1.0, keep_n=2).validate()
    with pytest.raises(ValueError):
        PipelineConfig(input="x", threshold=-1).validate()
    with pytest.raises(ValueError):
        PipelineConfig(input="x.cx", tiled=True).validate()
    with pytest.raises(ValueError):
        PipelineConfig(input="x", strategy="bfs").validate()
    cfg = PipelineConfig(input="x")
    cfg.validate()
    assert cfg.tree_tau == 0.0


def test_read_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\ninput = a.raw\nkeep-n = 3\nroot = 1,2,3\ntiled = yes\ntile = 64,32\nthreshold=0.5\n")
    c = read_config(p)
    assert c == {"input": "a.raw", "keep_n": 3, "root": (1.0, 2.0, 3.0), "tiled": True, "tile": (64, 32), "threshold": 0.5}
    p.write_text("bogus = 1\n")
    with pytest.raises(ValueError, match="unknown key"):
        read_config(p)
    p.write_text("novalue\n")
    with pytest.raises(ValueError, match="key = value"):
        read_config(p)


def test_errors_name_the_step(tmp_path):
    with pytest.raises(PipelineError) as ei:
        run_pipeline(PipelineConfig(input=str(tmp_path / "missing.raw")))
    assert ei.value.step == "load"
