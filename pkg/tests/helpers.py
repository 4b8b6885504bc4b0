"""Small constructors shared by the tests."""

import numpy as np

from morseskel.morse import SkeletonGraph


def make_skeleton(positions, edges, density=None, ids=None) -> SkeletonGraph:
    """SkeletonGraph straight from node positions and index pairs."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = len(pos)
    ids = np.arange(n) if ids is None else np.asarray(ids)
    dens = np.ones(n) if density is None else np.asarray(density, dtype=np.float64)
    e = np.sort(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=1)
    return SkeletonGraph(ids, pos, dens, e, np.zeros(n, dtype=bool))
