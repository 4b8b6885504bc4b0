"""Command-line entry point: ``morseskel <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .complex import (
    Complex2,
    build_grid_complex,
    gaussian_smooth,
    load_volume,
    save_volume,
)
from .morse import SkeletonGraph, dimorsc
from .persistence import compute_pairing, lower_star_order
from .phantom import generate_phantom, load_spec, score
from .pipeline import PipelineConfig, PipelineError, load_input, read_config, run_pipeline
from .tiling import TileLayout, keyed_skeleton, skeletonize_tiled
from .treeify import read_swc, simplify_tree, summarize, write_swc

logger = logging.getLogger("morseskel")

EXIT_OK, EXIT_ERROR, EXIT_EMPTY = 0, 1, 2


def _floats(n):
    def parse(s):
        try:
            v = tuple(float(x) for x in s.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {s!r}") from None
        if len(v) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {s!r}")
        return v

    return parse


def _ints(n):
    def parse(s):
        v = _floats(n)(s)
        if any(x != int(x) for x in v):
            raise argparse.ArgumentTypeError(f"expected integers, got {s!r}")
        return tuple(int(x) for x in v)

    return parse


def _add_smoothing(p):
    p.add_argument("--sigma", type=float, default=1.0, help="smoothing sigma in voxels (0: none)")
    p.add_argument("--radius", type=int, default=2, help="smoothing kernel radius in voxels")
    p.add_argument("--threshold", type=float, default=0.0, help="keep grid points with density above this")


def _add_tree(p):
    p.add_argument("--root", type=_floats(3), help="root hint x,y,z")
    p.add_argument("--strategy", choices=("spt", "mst"), help="default: spt with --root, else mst")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tau", dest="tree_tau", type=float, help="keep branches with persistence above this")
    g.add_argument("--keep-n", type=int, help="keep the n most persistent branches")
    p.add_argument("--weight", choices=("uniform", "intensity"), default="uniform")
    p.add_argument("--spt-weight", choices=("hops", "inverse_density"), default="hops")
    p.add_argument("--radius-mode", choices=("constant", "sqrt_density"), default="constant")


def _add_tiling(p):
    p.add_argument("--tile", type=_ints(2), default=(512, 512), help="tile size x,y")
    p.add_argument("--overlap", type=int, default=5)
    p.add_argument("--diffuse-sigma", type=float, default=5.0)
    p.add_argument("--merge-tau", type=float, help="tau of the merge pass (default: --tau)")
    p.add_argument("--neighborhood-radius", type=int, default=2)
    p.add_argument("--workers", type=int, help="worker processes (default: $MORSESKEL_WORKERS or 1)")
    p.add_argument("--cache-dir", help="persist per-tile skeletons here and reuse them")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved for empty results here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="morseskel", description=__doc__)
    ap.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("smooth", help="Gaussian-smooth a volume")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--physical", action="store_true", help="sigma in physical units")

    p = sub.add_parser("persistence", help="persistence pairs of a volume or complex file")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="default: stdout")
    p.add_argument("--sublevel", action="store_true", help="filter by increasing density (default: decreasing)")
    _add_smoothing(p)

    p = sub.add_parser("skeletonize", help="ridge skeleton of a volume or complex file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--tau", type=float, default=0.0)
    _add_smoothing(p)

    p = sub.add_parser("skeletonize-tiled", help="tiled ridge skeleton of a volume")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--tau", type=float, default=0.0)
    _add_smoothing(p)
    _add_tiling(p)

    p = sub.add_parser("treeify", help="summary trees of a skeleton file, one SWC per component")
    p.add_argument("input")
    p.add_argument("-o", "--output-prefix", required=True)
    _add_tree(p)

    p = sub.add_parser("phantom", help="render a synthetic phantom")
    p.add_argument("--spec", required=True, help="JSON phantom description")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output-prefix", required=True, help="writes <prefix>.raw/.hdr and <prefix>_truth.swc")

    p = sub.add_parser("score", help="compare reconstruction SWC(s) with a truth SWC")
    p.add_argument("--truth", required=True)
    p.add_argument("--recon", required=True, nargs="+")
    p.add_argument("--epsilon", type=float, default=2.0)

    p = sub.add_parser("pipeline", help="volume to SWC in one go")
    p.add_argument("input", nargs="?")
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--format", dest="input_format", choices=("auto", "volume", "points", "complex"))
    p.add_argument("--sigma", dest="smooth_sigma", type=float)
    p.add_argument("--radius", dest="smooth_radius", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--skeleton-tau", type=float)
    p.add_argument("--root", type=_floats(3))
    p.add_argument("--strategy", choices=("spt", "mst"))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tau", dest="tree_tau", type=float)
    g.add_argument("--keep-n", type=int)
    p.add_argument("--weight", choices=("uniform", "intensity"))
    p.add_argument("--spt-weight", choices=("hops", "inverse_density"))
    p.add_argument("--radius-mode", choices=("constant", "sqrt_density"))
    p.add_argument("--tiled", action="store_true", default=None)
    p.add_argument("--tile", type=_ints(2))
    p.add_argument("--overlap", type=int)
    p.add_argument("--diffuse-sigma", type=float)
    p.add_argument("--merge-tau", type=float)
    p.add_argument("--neighborhood-radius", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--cache-dir")
    p.add_argument("-o", "--output-dir")
    p.add_argument("--prefix")
    p.add_argument("--report", help="write the JSON run report here")
    return ap


# -----------------------------------------------------------------------------
# commands
# -----------------------------------------------------------------------------
def _volume_complex(args) -> Complex2:
    path = Path(args.input)
    if path.suffix.lower() in (".cx", ".complex"):
        return load_input(PipelineConfig(input=str(path)))
    vol = load_volume(path)
    if args.sigma > 0:
        vol = gaussian_smooth(vol, args.sigma, args.radius)
    return build_grid_complex(vol, args.threshold)


def cmd_smooth(args) -> int:
    vol = load_volume(args.input)
    save_volume(gaussian_smooth(vol, args.sigma, args.radius, physical=args.physical), args.output)
    return EXIT_OK


def cmd_persistence(args) -> int:
    cx = _volume_complex(args)
    f = cx.density if args.sublevel else -cx.density
    p = compute_pairing(cx, lower_star_order(cx, f))
    names = ("v", "e", "t")
    lines = []
    for (b, d), per in zip(p.vertex_edge.tolist(), p.vertex_edge_persistence.tolist()):
        lines.append(f"0\tv{b}\te{d}\t{per!r}")
    for (b, d), per in zip(p.edge_triangle.tolist(), p.edge_triangle_persistence.tolist()):
        lines.append(f"1\te{b}\tt{d}\t{per!r}")
    for dim, ids in enumerate((p.essential_vertices, p.essential_edges, p.essential_triangles)):
        lines += [f"{dim}\t{names[dim]}{i}\t-\tinf" for i in ids.tolist()]
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _write_skeleton(g: SkeletonGraph, path) -> int:
    Path(path).write_text(g.to_text())
    logger.info("skeleton: %d nodes, %d edges", g.n_nodes, g.n_edges)
    return EXIT_EMPTY if g.is_empty() else EXIT_OK


def cmd_skeletonize(args) -> int:
    path = Path(args.input)
    if path.suffix.lower() in (".cx", ".complex"):
        return _write_skeleton(dimorsc(load_input(PipelineConfig(input=str(path))), tau=args.tau), args.output)
    vol = load_volume(path)
    sm = gaussian_smooth(vol, args.sigma, args.radius) if args.sigma > 0 else vol
    g = dimorsc(build_grid_complex(sm, args.threshold), tau=args.tau)
    return _write_skeleton(keyed_skeleton(g, vol.dims, vol.origin), args.output)


def cmd_skeletonize_tiled(args) -> int:
    vol = load_volume(args.input, mmap=True)
    g = skeletonize_tiled(
        vol,
        TileLayout(args.tile, args.overlap),
        args.tau,
        merge_tau=args.merge_tau,
        sigma=args.sigma,
        radius=args.radius,
        threshold=args.threshold,
        neighborhood_radius=args.neighborhood_radius,
        diffuse_sigma=args.diffuse_sigma,
        workers=args.workers,
        cache_dir=args.cache_dir,
    )
    return _write_skeleton(g, args.output)


def cmd_treeify(args) -> int:
    g = SkeletonGraph.from_text(Path(args.input).read_text())
    trees = summarize(g, root_hint=args.root, strategy=args.strategy, weight_mode=args.weight, spt_weight=args.spt_weight)
    for k, t in enumerate(trees):
        t = simplify_tree(t, keep_n=args.keep_n) if args.keep_n is not None else simplify_tree(
            t, tau=args.tree_tau or 0.0
        )
        write_swc(t, f"{args.output_prefix}_{k:03d}.swc", args.radius_mode)
    return EXIT_OK if trees else EXIT_EMPTY


def _truth_swc(truth, path) -> None:
    lines = []
    for i, ((x, y, z), p) in enumerate(zip(truth.positions.tolist(), truth.parent.tolist())):
        lines.append(f"{i + 1} 0 {x:.6f} {y:.6f} {z:.6f} 1.000000 {p + 1 if p >= 0 else -1}")
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_phantom(args) -> int:
    spec = load_spec(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    ph = generate_phantom(spec)
    save_volume(ph.volume, f"{args.output_prefix}.raw")
    _truth_swc(ph.truth, f"{args.output_prefix}_truth.swc")
    return EXIT_OK


def cmd_score(args) -> int:
    truth = read_swc(args.truth)
    parts = [read_swc(p) for p in args.recon]
    pos, par, off = [], [], 0
    for t in parts:
        pos.append(t.positions)
        par.append(np.where(t.parent >= 0, t.parent + off, -1))
        off += len(t.parent)

    class _Forest:
        positions = np.concatenate(pos) if pos else np.zeros((0, 3))
        parent = np.concatenate(par) if par else np.zeros(0, np.int64)

    s = score(_Forest, truth, args.epsilon)
    print("precision\trecall\tleaf_delta\tconnected\tempty")
    print(s.tsv())
    return EXIT_EMPTY if s.empty else EXIT_OK


def cmd_pipeline(args) -> int:
    values = read_config(args.config) if args.config else {}
    names = {f.name for f in fields(PipelineConfig)}
    for k, v in vars(args).items():
        if k in names and v is not None:
            values[k] = v
    if args.input:
        values["input"] = args.input
    if args.output_dir:
        values["output_dir"] = args.output_dir
    if "tree_tau" in values and "keep_n" in values and args.config:
        # a flag beats the config file
        if args.keep_n is not None:
            values.pop("tree_tau")
        elif args.tree_tau is not None:
            values.pop("keep_n")
    if not values.get("input"):
        raise SystemExit("pipeline: no input given")
    res = run_pipeline(PipelineConfig(**values))
    return EXIT_EMPTY if res.empty else EXIT_OK


COMMANDS = {
    "smooth": cmd_smooth,
    "persistence": cmd_persistence,
    "skeletonize": cmd_skeletonize,
    "skeletonize-tiled": cmd_skeletonize_tiled,
    "treeify": cmd_treeify,
    "phantom": cmd_phantom,
    "score": cmd_score,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except PipelineError as exc:
        logger.error("step %s failed: %s", exc.step, exc.__cause__)
        return EXIT_ERROR
    except (OSError, ValueError, RuntimeError) as exc:
        logger.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
