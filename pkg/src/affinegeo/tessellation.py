"""Farthest-point sampling and vertex-labelled geodesic Voronoi cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geodesics import MarchingSolver
from .mesh import Mesh
from .metric import EdgeLengths


@dataclass(frozen=True, eq=False)
class VoronoiDiagram:
    seeds: np.ndarray
    labels: np.ndarray  # -1 for vertices unreachable from every seed
    distances: np.ndarray
    metric: str

    def cell_sizes(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels >= 0], minlength=len(self.seeds))


def farthest_point_sample(mesh: Mesh, lengths: EdgeLengths, k: int, seed: int = 0,
                          solver: MarchingSolver | None = None, return_radii: bool = False):
    """Greedy sampling: each new vertex maximizes the distance to those already chosen.

    Ties go to the smallest vertex id. With ``return_radii`` also returns the
    covering radius after each step (non-increasing).
    """
    if not 1 <= k <= mesh.n_vertices:
        raise ValueError(f"k must be in [1, {mesh.n_vertices}], got {k}")
    solver = solver or MarchingSolver(mesh, lengths)
    chosen = [int(seed)]
    field = solver.distances(seed)
    radii = [float(field[np.isfinite(field)].max())]
    for _ in range(1, k):
        f = np.where(np.isfinite(field), field, -1.0)
        f[chosen] = -1.0
        nxt = int(np.argmax(f))
        chosen.append(nxt)
        field = np.minimum(field, solver.distances(nxt))
        radii.append(float(field[np.isfinite(field)].max()))
    chosen = np.array(chosen, dtype=np.int64)
    return (chosen, np.array(radii)) if return_radii else chosen


def symmetric_farthest_point_sample(mesh: Mesh, lengths: EdgeLengths, k: int, perm: np.ndarray,
                                    seed: int = 0, solver: MarchingSolver | None = None) -> np.ndarray:
    """Farthest-point sampling closed under a vertex involution ``perm``.

    Every pick is added together with its image, so the result may hold
    k or k+1 vertices (fixed points are added once).
    """
    perm = np.asarray(perm)
    solver = solver or MarchingSolver(mesh, lengths)
    chosen: list[int] = []
    field = np.full(mesh.n_vertices, np.inf)
    nxt = int(seed)
    while len(chosen) < k:
        for v in dict.fromkeys((nxt, int(perm[nxt]))):
            chosen.append(v)
            field = np.minimum(field, solver.distances(v))
        f = np.where(np.isfinite(field), field, -1.0)
        f[chosen] = -1.0
        if f.max() < 0:
            break
        nxt = int(np.argmax(f))
    return np.array(chosen, dtype=np.int64)


def voronoi(mesh: Mesh, lengths: EdgeLengths, seeds, solver: MarchingSolver | None = None,
            fast: bool = False, threads: int | None = None) -> VoronoiDiagram:
    """Label every vertex by its geodesically nearest seed (ties: smaller seed index).

    By default each seed gets its own sweep and labels are the pointwise
    argmin, so every label is the true nearest seed under the solver. With
    ``fast`` a single label-restricted multi-source sweep is used instead;
    it can misjudge vertices within a triangle or two of a cell boundary.
    """
    seeds = np.asarray(seeds, dtype=np.int64)
    if len(np.unique(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    solver = solver or MarchingSolver(mesh, lengths)
    if fast:
        dist, lab = solver.labels(seeds)
    else:
        maps = solver.many(seeds, threads)
        lab = np.argmin(maps, axis=0)
        dist = maps[lab, np.arange(mesh.n_vertices)]
        lab = np.where(np.isfinite(dist), lab, -1)
    return VoronoiDiagram(seeds, lab, dist, lengths.metric)


def label_agreement(a: VoronoiDiagram, b: VoronoiDiagram) -> float:
    return float(np.mean(a.labels == b.labels))


def palette(k: int) -> np.ndarray:
    """Deterministic, well-spread RGB colours (golden-angle hues)."""
    import colorsys

    return np.array([[255 * c for c in colorsys.hsv_to_rgb((i * 0.618033988749895) % 1.0, 0.65, 0.95)]
                     for i in range(k)])


def label_colors(labels: np.ndarray, k: int) -> np.ndarray:
    pal = np.vstack([palette(k), [[128, 128, 128]]])
    return pal[np.where(labels >= 0, labels, k)]


def write_labels_csv(path, vd: VoronoiDiagram) -> None:
    rows = ["vertex,label,distance"] + [f"{i},{int(l)},{float(d)!r}" for i, (l, d) in
                                        enumerate(zip(vd.labels, vd.distances))]
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
