"""End-to-end driver: volume -> smoothed density -> complex -> skeleton -> summary trees -> SWC."""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .complex import (
    Complex2,
    DensityVolume,
    build_grid_complex,
    gaussian_smooth,
    load_complex,
    load_points,
    load_volume,
    rasterize_points,
)
from .morse import SkeletonGraph, dimorsc
from .tiling import TileLayout, keyed_skeleton, skeletonize_tiled
from .treeify import SummaryTree, simplify_tree, summarize, write_swc

logger = logging.getLogger(__name__)

__all__ = ["PipelineConfig", "PipelineResult", "PipelineError", "run_pipeline", "load_input", "read_config"]


class PipelineError(RuntimeError):
    """A pipeline step failed; ``step`` names it."""

    def __init__(self, step: str, exc: BaseException):
        super().__init__(f"{step}: {exc}")
        self.step = step


@dataclass
class PipelineConfig:
    input: str = ""
    input_format: str = "auto"  # volume | points | complex | auto
    smooth_sigma: float = 1.0  # 0 disables smoothing
    smooth_radius: int = 2
    threshold: float = 0.0
    skeleton_tau: float = 0.0
    strategy: str | None = None  # spt | mst | None (auto)
    root: tuple[float, float, float] | None = None
    tree_tau: float | None = None
    keep_n: int | None = None
    weight: str = "uniform"
    spt_weight: str = "hops"
    radius_mode: str = "constant"
    tiled: bool = False
    tile: tuple[int, int] = (512, 512)
    overlap: int = 5
    diffuse_sigma: float = 5.0
    merge_tau: float | None = None
    neighborhood_radius: int = 2
    workers: int | None = None
    cache_dir: str | None = None
    output_dir: str = "."
    prefix: str = "tree"
    report: str | None = None

    def validate(self) -> None:
        for name in ("threshold", "skeleton_tau", "smooth_sigma", "overlap", "diffuse_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.tree_tau is not None and self.keep_n is not None:
            raise ValueError("tree_tau and keep_n are mutually exclusive")
        if self.tree_tau is None and self.keep_n is None:
            self.tree_tau = 0.0
        if self.tree_tau is not None and self.tree_tau < 0:
            raise ValueError("tree_tau must be >= 0")
        if self.keep_n is not None and self.keep_n < 0:
            raise ValueError("keep_n must be >= 0")
        if self.strategy not in (None, "spt", "mst"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.weight not in ("uniform", "intensity"):
            raise ValueError(f"unknown weight mode {self.weight!r}")
        if self.input_format not in ("auto", "volume", "points", "complex"):
            raise ValueError(f"unknown input format {self.input_format!r}")
        if self.tiled and self.resolved_format() == "complex":
            raise ValueError("tiling needs a volume input")
        TileLayout(tuple(self.tile), self.overlap)

    def resolved_format(self) -> str:
        if self.input_format != "auto":
            return self.input_format
        suffix = Path(self.input).suffix.lower()
        if suffix in (".cx", ".complex"):
            return "complex"
        if suffix in (".pts", ".points", ".txt"):
            return "points"
        return "volume"


_TUPLE_KEYS = {"root": float, "tile": int}


def read_config(path) -> dict:
    """``key = value`` lines (``#`` comments); keys use the flag names with ``-`` or ``_``."""
    types = {f.name: f for f in fields(PipelineConfig)}
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, val)
    return out


def _convert(key: str, val: str):
    if val.lower() in ("none", ""):
        return None
    if key in _TUPLE_KEYS:
        return tuple(_TUPLE_KEYS[key](v) for v in val.split(","))
    default = getattr(PipelineConfig(), key)
    if isinstance(default, bool):
        return val.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int) or key in ("keep_n", "workers"):
        return int(val)
    if isinstance(default, float) or key in ("tree_tau", "merge_tau"):
        return float(val)
    return val


@dataclass
class PipelineResult:
    trees: list[SummaryTree]
    swc_paths: list[Path]
    skeleton: SkeletonGraph
    report: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not self.trees


def load_input(cfg: PipelineConfig) -> DensityVolume | Complex2:
    fmt = cfg.resolved_format()
    if fmt == "complex":
        return load_complex(cfg.input)
    if fmt == "points":
        return rasterize_points(*load_points(cfg.input))
    return load_volume(cfg.input, mmap=cfg.tiled)


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """
    Run every step and write one SWC per connected component of the
    skeleton (``<prefix>_<k>.swc``, components ordered by their lowest node
    key).  The run report (JSON) records per-step timings and counts.
    """
    cfg.validate()
    wall0 = time.perf_counter()
    steps: dict[str, float] = {}

    @contextmanager
    def step(name):
        t0 = time.perf_counter()
        try:
            yield
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        finally:
            steps[name] = steps.get(name, 0.0) + time.perf_counter() - t0

    with step("load"):
        data = load_input(cfg)

    if isinstance(data, Complex2):
        with step("skeleton"):
            skel = dimorsc(data, tau=cfg.skeleton_tau)
    elif cfg.tiled:
        with step("skeleton_tiled"):
            skel = skeletonize_tiled(
                data,
                TileLayout(tuple(cfg.tile), cfg.overlap),
                cfg.skeleton_tau,
                merge_tau=cfg.merge_tau,
                sigma=cfg.smooth_sigma,
                radius=cfg.smooth_radius,
                threshold=cfg.threshold,
                neighborhood_radius=cfg.neighborhood_radius,
                diffuse_sigma=cfg.diffuse_sigma,
                workers=cfg.workers,
                cache_dir=cfg.cache_dir,
            )
    else:
        with step("smooth"):
            vol = gaussian_smooth(data, cfg.smooth_sigma, cfg.smooth_radius) if cfg.smooth_sigma > 0 else data
        with step("complex"):
            cx = build_grid_complex(vol, cfg.threshold)
        with step("skeleton"):
            skel = keyed_skeleton(dimorsc(cx, tau=cfg.skeleton_tau), data.dims, data.origin)

    with step("treeify"):
        trees = summarize(
            skel,
            root_hint=cfg.root,
            strategy=cfg.strategy,
            weight_mode=cfg.weight,
            spt_weight=cfg.spt_weight,
        )
        trees = [
            simplify_tree(t, tau=cfg.tree_tau) if cfg.keep_n is None else simplify_tree(t, keep_n=cfg.keep_n)
            for t in trees
        ]

    paths = []
    with step("write"):
        out_dir = Path(cfg.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for k, t in enumerate(trees):
            p = out_dir / f"{cfg.prefix}_{k:03d}.swc"
            write_swc(t, p, cfg.radius_mode)
            paths.append(p)

    wall = time.perf_counter() - wall0
    report = {
        "status": "ok" if trees else "empty",
        "wall_seconds": wall,
        "steps": steps,
        "skeleton_nodes": int(skel.n_nodes),
        "skeleton_edges": int(skel.n_edges),
        "components": len(trees),
        "tree_nodes": [int(t.n_nodes) for t in trees],
        "tree_leaves": [int(len(t.tips())) for t in trees],
        "skeleton_stats": _jsonable(skel.stats),
        "swc": [str(p) for p in paths],
        "config": _jsonable(asdict(cfg)),
    }
    if cfg.report:
        Path(cfg.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    logger.info("pipeline: %d component(s) in %.2f s", len(trees), wall)
    return PipelineResult(trees, paths, skel, report)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x
