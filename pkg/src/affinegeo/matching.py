"""Minimum-distortion correspondences and intrinsic symmetry detection.

``gh_match`` is a greedy search: a correspondence grows one pair at a time,
always adding the pair with the smallest worst-case discrepancy against the
pairs already chosen. Sorted distance rows give a lower bound on that
discrepancy for any bijection and are used both to rank seed pairs and to
initialize the cost table.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geodesics import DistanceMatrix, MarchingSolver, distance_matrix
from .mesh import Mesh
from .metric import EdgeLengths
from .tessellation import farthest_point_sample


class SymmetryNotFound(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Correspondence:
    pairs: np.ndarray  # (n, 2): (index into X samples, index into Y samples)
    distortion: float  # normalized by the larger matrix maximum
    x_covered: bool = False
    y_covered: bool = False
    info: dict = field(default_factory=dict)

    @property
    def gh_estimate(self) -> float:
        """Half the distortion: an upper bound on the sampled Gromov-Hausdorff distance."""
        return 0.5 * self.distortion

    def inverse(self) -> "Correspondence":
        return Correspondence(self.pairs[:, ::-1].copy(), self.distortion, self.y_covered,
                              self.x_covered, dict(self.info))


def _mat(d) -> np.ndarray:
    return d.D if isinstance(d, DistanceMatrix) else np.asarray(d, float)


def distortion(c, dX, dY) -> float:
    """max |d_X(x, x') - d_Y(y, y')| over pairs of pairs, divided by max(max d_X, max d_Y)."""
    pairs = c.pairs if isinstance(c, Correspondence) else np.asarray(c)
    if len(pairs) == 0:
        raise ValueError("empty correspondence")
    X, Y = _mat(dX), _mat(dY)
    i, j = pairs[:, 0], pairs[:, 1]
    if i.min() < 0 or i.max() >= len(X) or j.min() < 0 or j.max() >= len(Y):
        raise ValueError("correspondence index out of range")
    scale = max(X.max(), Y.max())
    if scale <= 0:
        return 0.0
    return float(np.abs(X[np.ix_(i, i)] - Y[np.ix_(j, j)]).max() / scale)


def make_correspondence(pairs, dX, dY, **info) -> Correspondence:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    X, Y = _mat(dX), _mat(dY)
    return Correspondence(pairs, distortion(pairs, X, Y),
                          len(np.unique(pairs[:, 0])) == len(X),
                          len(np.unique(pairs[:, 1])) == len(Y), info)


SIGNATURE_QUANTILES = 64


def row_signatures(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """L-infinity distance between sorted distance rows.

    For equal sizes this is a lower bound on the discrepancy of any bijection
    through that pair. For unequal sizes both rows are compared on a common
    grid of quantiles, which only ranks candidate pairs.
    """
    sx = np.sort(X, axis=1)
    sy = np.sort(Y, axis=1)
    if sx.shape[1] != sy.shape[1]:
        q = np.linspace(0, 1, SIGNATURE_QUANTILES)
        sx = np.quantile(sx, q, axis=1).T
        sy = np.quantile(sy, q, axis=1).T
    out = np.empty((len(sx), len(sy)))
    for i, r in enumerate(sx):
        out[i] = np.abs(r[None, :] - sy).max(axis=1)
    return out


def _grow(X, Y, sig, seed_pair, allowed):
    """Greedy extension from one seed pair; returns an injective X -> Y assignment."""
    kx, ky = len(X), len(Y)
    cost = sig.copy()
    cost[~allowed] = np.inf
    free_x = np.ones(kx, bool)
    free_y = np.ones(ky, bool)
    pairs = []
    i, j = seed_pair
    while True:
        pairs.append((i, j))
        free_x[i] = False
        free_y[j] = False
        if not free_x.any() or not free_y.any():
            break
        np.maximum(cost, np.abs(X[i][:, None] - Y[j][None, :]), out=cost)
        masked = np.where(free_x[:, None] & free_y[None, :], cost, np.inf)
        flat = int(np.argmin(masked))
        if not np.isfinite(masked.flat[flat]):
            break
        i, j = divmod(flat, ky)
    return np.array(pairs, dtype=np.int64)


def _seed_pairs(sig, allowed, restarts, rng):
    cand = np.where(allowed, sig, np.inf)
    order = np.argsort(cand, axis=None, kind="stable")
    order = order[np.isfinite(cand.flat[order])]
    if not order.size:
        return []
    n_best = max(1, (restarts + 1) // 2)
    picks = list(order[:n_best])
    pool = order[n_best:min(len(order), 8 * restarts)]
    if restarts > n_best and pool.size:
        s = cand.flat[pool]
        w = np.exp(-(s - s.min()) / max(s.std(), 1e-12))
        extra = rng.choice(pool, size=min(restarts - n_best, pool.size), replace=False, p=w / w.sum())
        picks += list(extra)
    ky = sig.shape[1]
    return [divmod(int(p), ky) for p in picks]


def _best_of(X, Y, sig, seeds, allowed, accept, threads):
    def run(seed):
        pairs = _grow(X, Y, sig, seed, allowed)
        return pairs, distortion(pairs, X, Y)

    threads = threads or os.cpu_count() or 1
    if threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, seeds))
    else:
        results = [run(s) for s in seeds]
    best = None
    for n, (pairs, dis) in enumerate(results):
        if len(pairs) < min(len(X), len(Y)) or not accept(pairs):
            continue
        mean_dis = np.abs(X[np.ix_(pairs[:, 0], pairs[:, 0])] - Y[np.ix_(pairs[:, 1], pairs[:, 1])]).mean()
        key = (dis, mean_dis, n)
        if best is None or key < best[0]:
            best = (key, pairs)
    return best


def gh_match(dX, dY, restarts: int = 32, seed: int = 0, threads: int | None = None) -> Correspondence:
    """Greedy minimum-distortion correspondence covering all of X's samples."""
    X, Y = _mat(dX), _mat(dY)
    if len(X) > len(Y):
        raise ValueError("X must not have more samples than Y")
    scale = max(X.max(), Y.max())
    Xn, Yn = X / scale, Y / scale
    sig = row_signatures(Xn, Yn)
    allowed = np.ones_like(sig, bool)
    rng = np.random.default_rng(seed)
    seeds = _seed_pairs(sig, allowed, restarts, rng)
    best = _best_of(Xn, Yn, sig, seeds, allowed, lambda p: True, threads)
    c = make_correspondence(best[1], X, Y, restarts=len(seeds))
    return c


def detect_symmetry(mesh: Mesh, lengths: EdgeLengths, k: int = 50, min_displacement: float = 0.2,
                    restarts: int = 32, seed: int = 0, samples=None, threads: int | None = None,
                    solver: MarchingSolver | None = None, targets=None,
                    max_targets: int = 3000) -> Correspondence:
    """Non-trivial self-correspondence of minimal distortion.

    The ``k`` samples are mapped into a denser target set (every vertex when
    the mesh has at most ``max_targets``, else that many farthest-point
    samples), because the mirror image of a sample is rarely a sample
    itself. Pass ``targets=samples`` when the samples are already closed
    under the symmetry. A sample and a target are ranked by comparing their
    sorted distances to all targets; a symmetry permutes the targets, so
    true pairs score near zero.

    Seed pairs closer than ``min_displacement`` (fraction of the diameter)
    are excluded, as are exact fixed points; results whose mean
    displacement is below that threshold are rejected. ``pairs[:, 1]``
    indexes ``info['targets']``.
    """
    if k > 100:
        raise ValueError("symmetry detection is limited to k <= 100 samples")
    solver = solver or MarchingSolver(mesh, lengths)
    if samples is None:
        samples = farthest_point_sample(mesh, lengths, k, 0, solver)
    samples = np.asarray(samples, np.int64)
    if targets is None:
        if mesh.n_vertices <= max_targets:
            targets = np.arange(mesh.n_vertices)
        else:
            targets = farthest_point_sample(mesh, lengths, max_targets, int(samples[0]), solver)
    targets = np.asarray(targets, np.int64)
    union, inv = np.unique(np.concatenate([samples, targets]), return_inverse=True)
    dm = distance_matrix(mesh, lengths, union, threads, solver).normalized()
    xi, yi = inv[:len(samples)], inv[len(samples):]
    X = dm.D[np.ix_(xi, xi)]
    Y = dm.D[np.ix_(yi, yi)]
    C = dm.D[np.ix_(xi, yi)]  # sample-to-target distances, also the displacement of each pair
    fixed_point = samples[:, None] == targets[None, :]
    sy = np.sort(Y, axis=1)
    sig = np.array([np.abs(r[None, :] - sy).max(axis=1) for r in np.sort(C, axis=1)])
    allowed = (C >= min_displacement) & ~fixed_point
    seeds = _seed_pairs(sig, allowed, restarts, np.random.default_rng(seed))
    # pairs after the seed may be fixed points (e.g. samples on a mirror plane)
    grow_allowed = np.ones_like(C, bool)

    def accept(pairs):
        return (C[pairs[:, 0], pairs[:, 1]].mean() >= min_displacement
                and not fixed_point[pairs[:, 0], pairs[:, 1]].all())

    best = _best_of(X, Y, sig, seeds, grow_allowed, accept, threads) if seeds else None
    if best is None or best[0][0] >= 1.0:
        raise SymmetryNotFound("no admissible self-correspondence with distortion below 1")
    pairs = best[1]
    return make_correspondence(pairs, X, Y, samples=samples, targets=targets,
                               mean_displacement=float(C[pairs[:, 0], pairs[:, 1]].mean()),
                               restarts=len(seeds))


def write_correspondence_csv(path, c: Correspondence, samples_x=None, samples_y=None) -> None:
    rows = ["i,j,vertex_x,vertex_y"]
    for i, j in c.pairs:
        vx = int(samples_x[i]) if samples_x is not None else -1
        vy = int(samples_y[j]) if samples_y is not None else -1
        rows.append(f"{int(i)},{int(j)},{vx},{vy}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
