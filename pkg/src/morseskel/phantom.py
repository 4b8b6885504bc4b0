"""
Synthetic tube phantoms with known ground-truth trees, and a simple
distance-based score for reconstructed trees.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .complex import DensityVolume

__all__ = [
    "TruthTree",
    "PhantomSpec",
    "Phantom",
    "Score",
    "make_tree",
    "generate_phantom",
    "load_spec",
    "score",
    "point_segment_distance",
]


@dataclass
class TruthTree:
    """Geometric tree: node positions (voxel units, x y z) and parent indices (-1 at root)."""

    positions: np.ndarray
    parent: np.ndarray

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.parent = np.asarray(self.parent, dtype=np.int64).reshape(-1)
        if len(self.positions) != len(self.parent):
            raise ValueError("positions and parent differ in length")

    @property
    def segments(self) -> np.ndarray:
        """(k, 2, 3) segment endpoints, parent first."""
        c = np.flatnonzero(self.parent >= 0)
        return np.stack([self.positions[self.parent[c]], self.positions[c]], axis=1)

    def degrees(self) -> np.ndarray:
        c = np.flatnonzero(self.parent >= 0)
        return np.bincount(np.concatenate([c, self.parent[c]]), minlength=len(self.parent))

    def n_tips(self) -> int:
        return int(np.sum(self.degrees() == 1))

    def junctions(self) -> np.ndarray:
        return np.flatnonzero(self.degrees() >= 3)


# -----------------------------------------------------------------------------
# Tree shapes
# -----------------------------------------------------------------------------
def _unit(angle: float, tilt: float = 0.0) -> np.ndarray:
    return np.array([np.cos(angle) * np.cos(tilt), np.sin(angle) * np.cos(tilt), np.sin(tilt)])


def _straight(shape, rng, angle=None, center=None, length=None):
    nx, ny, nz = shape
    c = np.array([nx / 2, ny / 2, nz / 2]) - 0.5 if center is None else np.asarray(center, float)
    a = np.deg2rad(angle) if angle is not None else rng.uniform(0, np.pi)
    d = _unit(a)
    if length is None:
        # longest chord through c inside a margin of 6 voxels
        lim = []
        for k, n in enumerate((nx, ny, nz)):
            if abs(d[k]) > 1e-12:
                lim.append(min((n - 7 - c[k]) / abs(d[k]), (c[k] - 6) / abs(d[k])))
        half = min(lim)
    else:
        half = length / 2
    return TruthTree([c - half * d, c + half * d], [-1, 0])


def _y_tree(shape, rng):
    nx, ny, nz = shape
    c = np.array([nx / 2, ny / 2, nz / 2]) + rng.uniform(-0.08, 0.08, 3) * np.array([nx, ny, 0])
    reach = 0.5 * min(nx, ny) - 8
    # three arms at least 80 degrees apart
    while True:
        ang = np.sort(rng.uniform(0, 2 * np.pi, 3))
        gaps = np.diff(np.concatenate([ang, ang[:1] + 2 * np.pi]))
        if gaps.min() > np.deg2rad(80):
            break
    pts = [c]
    for a in ang:
        length = rng.uniform(0.6, 0.9) * reach
        tilt = rng.uniform(-0.1, 0.1)
        pts.append(_clip(c + length * _unit(a, tilt), shape))
    return TruthTree(pts, [-1, 0, 0, 0])


def _h_tree(shape, rng):
    nx, ny, nz = shape
    c = np.array([nx / 2, ny / 2, nz / 2]) + rng.uniform(-0.05, 0.05, 3) * np.array([nx, ny, 0])
    theta = rng.uniform(0, np.pi)
    bar = _unit(theta)
    reach = 0.5 * min(nx, ny) - 8
    half = rng.uniform(0.25, 0.35) * reach
    j1, j2 = c - half * bar, c + half * bar
    pts = [j1, j2]
    parent = [-1, 0]
    for j, out in ((0, -1.0), (1, 1.0)):
        for side in (-1.0, 1.0):
            a = theta + (0 if out > 0 else np.pi) + side * rng.uniform(np.deg2rad(45), np.deg2rad(70))
            length = rng.uniform(0.45, 0.6) * reach
            pts.append(_clip(pts[j] + length * _unit(a, rng.uniform(-0.1, 0.1)), shape))
            parent.append(j)
    return TruthTree(pts, parent)


def _random_tree(shape, rng, depth=3):
    nx, ny, nz = shape
    reach = 0.5 * min(nx, ny) - 8
    root = np.array([nx / 2, ny / 2, nz / 2])
    pts, parent = [root], [-1]
    stack = [(0, rng.uniform(0, 2 * np.pi), 0)]
    while stack:
        node, heading, level = stack.pop()
        n_child = 3 if level == 0 else int(rng.integers(0, 3)) if level < depth else 0
        spread = 2 * np.pi / 3 if level == 0 else np.deg2rad(45)
        for k in range(n_child):
            a = heading + (k * spread if level == 0 else (k - 0.5 * (n_child - 1)) * spread)
            length = rng.uniform(0.25, 0.45) * reach / (1 + 0.4 * level)
            p = _clip(pts[node] + length * _unit(a, rng.uniform(-0.1, 0.1)), shape)
            if np.linalg.norm(p - pts[node]) < 4:
                continue
            pts.append(p)
            parent.append(node)
            stack.append((len(pts) - 1, a, level + 1))
    return TruthTree(pts, parent)


def _clip(p, shape, margin=6.0):
    hi = np.asarray(shape, dtype=np.float64) - 1 - margin
    lo = np.full(3, margin)
    lo[2] = min(margin, (shape[2] - 1) / 2)
    hi[2] = max(hi[2], lo[2])
    return np.clip(p, lo, hi)


def make_tree(kind: str, shape, seed: int = 0, **kw) -> TruthTree:
    """Ground-truth tree of a named shape: ``straight``, ``Y``, ``H`` or ``random``."""
    rng = np.random.default_rng(seed)
    if kind == "straight":
        return _straight(shape, rng, **kw)
    if kind == "Y":
        return _y_tree(shape, rng)
    if kind == "H":
        return _h_tree(shape, rng)
    if kind == "random":
        return _random_tree(shape, rng, **kw)
    raise ValueError(f"unknown tree kind {kind!r}")


# -----------------------------------------------------------------------------
# Rendering
# -----------------------------------------------------------------------------
@dataclass
class PhantomSpec:
    """
    ``gaps`` are ``(segment, start, length)`` triples: along segment
    ``segment`` (index into ``truth.segments``) the stretch
    ``[start, start + length]`` of arclength from its parent end emits
    no signal.
    """

    shape: tuple[int, int, int]
    tree: TruthTree | None = None
    kind: str = "Y"
    amplitude: float = 1.0
    tube_sigma: float = 1.5
    noise: float = 0.0
    gaps: list = field(default_factory=list)
    seed: int = 0
    options: dict = field(default_factory=dict)


@dataclass
class Phantom:
    truth: TruthTree
    volume: DensityVolume
    spec: PhantomSpec


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points ``p`` (n, 3) to each segment ``a[k]b[k]``; returns (n, k)."""
    p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    ab = b - a
    ll = np.einsum("ij,ij->i", ab, ab)
    ap = p[:, None, :] - a[None, :, :]
    t = np.einsum("nkj,kj->nk", ap, ab) / np.where(ll > 0, ll, 1.0)
    t = np.clip(t, 0.0, 1.0)
    d = ap - t[..., None] * ab[None, :, :]
    return np.sqrt(np.einsum("nkj,nkj->nk", d, d))


def _pieces(segments: np.ndarray, gaps) -> list[tuple[np.ndarray, np.ndarray]]:
    by_seg: dict[int, list] = {}
    for s, start, length in gaps:
        by_seg.setdefault(int(s), []).append((float(start), float(start) + float(length)))
    out = []
    for k, (a, b) in enumerate(segments):
        L = float(np.linalg.norm(b - a))
        cuts = sorted(by_seg.get(k, []))
        keep, s0 = [], 0.0
        for g0, g1 in cuts:
            if g0 > s0:
                keep.append((s0, min(g0, L)))
            s0 = max(s0, g1)
        if s0 < L:
            keep.append((s0, L))
        if L == 0:
            keep = [(0.0, 0.0)]
        u = (b - a) / L if L > 0 else np.zeros(3)
        for t0, t1 in keep:
            # short pieces keep the per-piece bounding boxes small
            n = max(1, int(np.ceil((t1 - t0) / 8.0)))
            ts = np.linspace(t0, t1, n + 1)
            for q in range(n):
                out.append((a + ts[q] * u, a + ts[q + 1] * u))
    return out


def render_tubes(shape, segments, amplitude=1.0, sigma=1.5, gaps=()) -> np.ndarray:
    """Max over segments of ``A exp(-d^2 / 2 sigma^2)``; returns a (nz, ny, nx) array."""
    nx, ny, nz = shape
    vol = np.zeros((nz, ny, nx))
    reach = 4.0 * sigma
    dims = np.array([nx, ny, nz])
    for a, b in _pieces(np.asarray(segments, dtype=np.float64).reshape(-1, 2, 3), gaps):
        lo = np.maximum(np.floor(np.minimum(a, b) - reach).astype(int), 0)
        hi = np.minimum(np.ceil(np.maximum(a, b) + reach).astype(int) + 1, dims)
        if np.any(hi <= lo):
            continue
        zz, yy, xx = np.meshgrid(
            np.arange(lo[2], hi[2]), np.arange(lo[1], hi[1]), np.arange(lo[0], hi[0]), indexing="ij"
        )
        p = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1).astype(np.float64)
        d = point_segment_distance(p, a, b)[:, 0]
        val = (amplitude * np.exp(-(d**2) / (2.0 * sigma**2))).reshape(zz.shape)
        view = vol[lo[2] : hi[2], lo[1] : hi[1], lo[0] : hi[0]]
        np.maximum(view, val, out=view)
    return vol


def generate_phantom(spec: PhantomSpec) -> Phantom:
    """Render the phantom's tree as Gaussian tubes plus clipped uniform noise; seeded."""
    shape = tuple(int(s) for s in spec.shape)
    truth = spec.tree if spec.tree is not None else make_tree(spec.kind, shape, spec.seed, **spec.options)
    hi = np.asarray(shape) - 1
    if np.any(truth.positions < 0) or np.any(truth.positions > hi):
        raise ValueError("ground-truth vertex outside the volume")
    vol = render_tubes(shape, truth.segments, spec.amplitude, spec.tube_sigma, spec.gaps)
    if spec.noise > 0:
        rng = np.random.default_rng([spec.seed, 1])
        a = spec.noise * spec.amplitude
        vol += rng.uniform(-a, a, size=vol.shape)
        np.maximum(vol, 0.0, out=vol)
    return Phantom(truth, DensityVolume(vol), spec)


def load_spec(path) -> PhantomSpec:
    """
    JSON phantom description::

        {"shape": [nx, ny, nz], "kind": "Y", "amplitude": 1, "tube_sigma": 1.5,
         "noise": 0.2, "gaps": [[segment, start, length]], "seed": 0,
         "nodes": [[x, y, z], ...], "parent": [-1, 0, ...]}

    ``nodes``/``parent`` (optional) give an explicit tree instead of ``kind``.
    """
    d = json.loads(Path(path).read_text())
    tree = TruthTree(d["nodes"], d["parent"]) if "nodes" in d else None
    return PhantomSpec(
        shape=tuple(d["shape"]),
        tree=tree,
        kind=d.get("kind", "Y"),
        amplitude=float(d.get("amplitude", 1.0)),
        tube_sigma=float(d.get("tube_sigma", 1.5)),
        noise=float(d.get("noise", 0.0)),
        gaps=[tuple(g) for g in d.get("gaps", [])],
        seed=int(d.get("seed", 0)),
        options=d.get("options", {}),
    )


# -----------------------------------------------------------------------------
# Scoring
# -----------------------------------------------------------------------------
@dataclass
class Score:
    precision: float
    recall: float
    leaf_delta: int
    connected: bool
    empty: bool = False

    def tsv(self) -> str:
        return f"{self.precision:.6f}\t{self.recall:.6f}\t{self.leaf_delta}\t{int(self.connected)}\t{int(self.empty)}"


def _min_dist(points: np.ndarray, a: np.ndarray, b: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(len(points))
    for s in range(0, len(points), chunk):
        out[s : s + chunk] = point_segment_distance(points[s : s + chunk], a, b).min(axis=1)
    return out


def _tree_segments(positions, parent):
    c = np.flatnonzero(parent >= 0)
    if len(c) == 0:
        return positions[:1], positions[:1]  # a lone node acts as a point
    return positions[parent[c]], positions[c]


def _sample(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    pts = []
    for p, q in zip(a, b):
        n = max(1, int(np.ceil(np.linalg.norm(q - p) / step)))
        t = np.linspace(0.0, 1.0, n + 1)[:, None]
        pts.append(p + t * (q - p))
    return np.concatenate(pts)


def _tips(parent) -> int:
    c = np.flatnonzero(parent >= 0)
    deg = np.bincount(np.concatenate([c, parent[c]]), minlength=len(parent))
    return int(np.sum(deg == 1))


def score(recon, truth, epsilon: float) -> Score:
    """
    Compare a reconstructed tree (anything with ``positions`` and ``parent``;
    several roots mean several components) against the truth.

    precision: fraction of reconstruction nodes within ``epsilon`` of a truth
    segment.  recall: fraction of truth samples (arclength step
    ``epsilon / 2``) within ``epsilon`` of a reconstruction segment.
    leaf_delta: reconstruction tips minus truth tips (degree-1 nodes).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    rp = np.asarray(recon.positions, dtype=np.float64).reshape(-1, 3)
    rpar = np.asarray(recon.parent, dtype=np.int64)
    tp = np.asarray(truth.positions, dtype=np.float64).reshape(-1, 3)
    tpar = np.asarray(truth.parent, dtype=np.int64)
    if len(rp) == 0:
        return Score(0.0, 0.0, -_tips(tpar), False, True)
    ta, tb = _tree_segments(tp, tpar)
    precision = float(np.mean(_min_dist(rp, ta, tb) <= epsilon))
    samples = _sample(ta, tb, epsilon / 2.0)
    ra, rb = _tree_segments(rp, rpar)
    recall = float(np.mean(_min_dist(samples, ra, rb) <= epsilon))
    connected = int(np.sum(rpar < 0)) == 1
    return Score(precision, recall, _tips(rpar) - _tips(tpar), connected)
