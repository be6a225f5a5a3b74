"""Before/after invariance measurements for both metrics."""

from __future__ import annotations

import numpy as np

from .canonical import canonical_form, procrustes_align
from .geodesics import MarchingSolver, distance_histogram, distance_matrix, histogram_l1
from .matching import SymmetryNotFound, detect_symmetry, make_correspondence
from .mesh import Mesh
from .metric import EQUI_AFFINE, EUCLIDEAN, METRICS, assemble_edge_lengths
from .shapes import symmetric_test_shape
from .tessellation import farthest_point_sample, label_agreement, symmetric_farthest_point_sample, voronoi
from .transforms import EquiAffineTransform, apply_transform, random_equiaffine

SCORES = ("histogram_l1", "voronoi_agreement", "canonical_rmsd", "identity_distortion")

REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema", "transform", "config", "metrics"],
    "properties": {
        "schema": {"const": 1},
        "transform": {
            "type": "object",
            "required": ["A", "b", "det", "cond"],
        },
        "config": {"type": "object"},
        "metrics": {
            "type": "object",
            "required": list(METRICS),
            "additionalProperties": False,
            "patternProperties": {
                ".*": {
                    "type": "object",
                    "required": list(SCORES) + ["edge_change_median", "edge_change_max", "length_report"],
                    "properties": {s: {"type": "number"} for s in SCORES},
                }
            },
        },
    },
}


def _mesh_pair_lengths(mesh, moved, metric):
    return assemble_edge_lengths(mesh, metric), assemble_edge_lengths(moved, metric)


def metric_scores(mesh: Mesh, moved: Mesh, metric: str, k: int = 100, bins: int = 50,
                  voronoi_k: int = 20, canonical_k: int | None = None, match_k: int = 50,
                  threads: int | None = None) -> dict:
    """Paired scores for one metric; samples are chosen on ``mesh`` and reused on ``moved`` by vertex id."""
    L0, L1 = _mesh_pair_lengths(mesh, moved, metric)
    s0, s1 = MarchingSolver(mesh, L0), MarchingSolver(moved, L1)
    canonical_k = canonical_k or k
    kmax = max(k, voronoi_k, canonical_k, match_k)
    samples = farthest_point_sample(mesh, L0, min(kmax, mesh.n_vertices), 0, s0)
    dm0 = distance_matrix(mesh, L0, samples, threads, s0)
    dm1 = distance_matrix(moved, L1, samples, threads, s1)

    def sub(dm, n):
        return dm.subset(np.arange(n))

    h0 = distance_histogram(sub(dm0, k), bins)
    h1 = distance_histogram(sub(dm1, k), bins)
    vd0 = voronoi(mesh, L0, samples[:voronoi_k], s0)
    vd1 = voronoi(moved, L1, samples[:voronoi_k], s1)
    cf0 = canonical_form(sub(dm0, canonical_k))
    cf1 = canonical_form(sub(dm1, canonical_k))
    _, _, rmsd = procrustes_align(cf1, cf0, allow_reflection=True)
    ident = np.stack([np.arange(match_k)] * 2, axis=1)
    c = make_correspondence(ident, sub(dm0, match_k).normalized(), sub(dm1, match_k).normalized())
    change = np.abs(L1.lengths / L0.lengths - 1.0)
    return {
        "histogram_l1": histogram_l1(h0, h1),
        "voronoi_agreement": label_agreement(vd0, vd1),
        "canonical_rmsd": float(rmsd),
        "identity_distortion": c.distortion,
        "edge_change_median": float(np.median(change)),
        "edge_change_max": float(change.max()),
        "max_asymmetry": max(dm0.max_asymmetry, dm1.max_asymmetry),
        "length_report": {"before": L0.report, "after": L1.report},
    }


def invariance_report(mesh: Mesh, transform: EquiAffineTransform, k: int = 100, bins: int = 50,
                      voronoi_k: int = 20, canonical_k: int | None = None, match_k: int = 50,
                      threads: int | None = None) -> dict:
    """Run the full before/after pipeline for both metrics."""
    moved = apply_transform(mesh, transform)
    out = {
        "schema": 1,
        "transform": {
            "A": transform.A.tolist(), "b": transform.b.tolist(),
            "det": float(np.linalg.det(transform.A)), "cond": transform.condition_number,
        },
        "config": {"k": k, "bins": bins, "voronoi_k": voronoi_k,
                   "canonical_k": canonical_k or k, "match_k": match_k},
        "metrics": {},
    }
    for metric in (EQUI_AFFINE, EUCLIDEAN):
        out["metrics"][metric] = metric_scores(mesh, moved, metric, k, bins, voronoi_k,
                                               canonical_k, match_k, threads)
    return out


def symmetry_mismatch(pairs: np.ndarray, samples: np.ndarray, perm: np.ndarray,
                      ref: MarchingSolver, targets: np.ndarray | None = None) -> float:
    """Mean geodesic distance between detected images and ground-truth images, over the reference diameter.

    ``ref`` is a solver on the untransformed shape, so every strength and
    metric is scored with the same yardstick.
    """
    src = samples[pairs[:, 0]]
    dst = (samples if targets is None else targets)[pairs[:, 1]]
    truth = perm[src]
    dmaps = ref.many(truth)
    d = dmaps[np.arange(len(src)), dst]
    diam = max(float(dm[np.isfinite(dm)].max()) for dm in dmaps)
    return float(d.mean() / diam)


def symmetry_sweep(strengths=(0, 0.5, 1, 1.5, 2, 2.5, 3), transform_seeds=tuple(range(12)),
                   k: int = 50, subdivisions: int = 3, restarts: int = 32, min_displacement: float = 0.2,
                   threads: int | None = None) -> dict:
    """Symmetry-detection mismatch vs transform strength for both metrics.

    Samples are drawn once on the reference shape as mirror-closed pairs and
    reused by vertex id, so the ground-truth symmetry maps samples onto
    samples at every strength. Each entry averages over ``transform_seeds``.
    """
    mesh, perm = symmetric_test_shape(subdivisions)
    L_ref = assemble_edge_lengths(mesh, EUCLIDEAN)
    ref = MarchingSolver(mesh, L_ref)
    samples = symmetric_farthest_point_sample(mesh, L_ref, k, perm, 0, ref)
    runs = {metric: np.zeros((len(strengths), len(transform_seeds))) for metric in METRICS}
    for a, s in enumerate(strengths):
        for b, ts in enumerate(transform_seeds):
            moved = apply_transform(mesh, random_equiaffine(ts, s))
            for metric in METRICS:
                L = assemble_edge_lengths(moved, metric)
                try:
                    c = detect_symmetry(moved, L, k, min_displacement, restarts, seed=0,
                                        samples=samples, targets=samples, threads=threads)
                    runs[metric][a, b] = symmetry_mismatch(c.pairs, samples, perm, ref)
                except SymmetryNotFound:
                    runs[metric][a, b] = np.nan
    out = {metric: runs[metric].mean(axis=1).tolist() for metric in METRICS}
    out["per_seed"] = {metric: runs[metric].tolist() for metric in METRICS}
    out["strengths"] = list(strengths)
    out["samples"] = len(samples)
    return out
