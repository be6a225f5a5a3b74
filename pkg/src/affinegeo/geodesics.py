"""Fast marching on triangle meshes with prescribed edge lengths.

Each triangle's planar shape is rebuilt from its three edge lengths, so any
metric that produces per-edge lengths (Euclidean or equi-affine) can be
marched. Triangles whose lengths violate the triangle inequality, and
updates whose characteristic does not cross the opposite edge, fall back to
edge (Dijkstra-style) updates.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .mesh import Mesh
from .metric import EdgeLengths

FAR, TRIAL, ALIVE = 0, 1, 2


@dataclass(frozen=True, eq=False)
class DistanceMap:
    distances: np.ndarray
    sources: np.ndarray
    metric: str
    report: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    samples: np.ndarray
    D: np.ndarray
    metric: str
    max_asymmetry: float = 0.0

    @property
    def k(self) -> int:
        return len(self.samples)

    def normalized(self) -> "DistanceMatrix":
        m = self.D.max()
        if m <= 0:
            raise ValueError("distance matrix is identically zero")
        return DistanceMatrix(self.samples, self.D / m, self.metric, self.max_asymmetry)

    def subset(self, idx) -> "DistanceMatrix":
        idx = np.asarray(idx)
        return DistanceMatrix(self.samples[idx], self.D[np.ix_(idx, idx)], self.metric, self.max_asymmetry)


# ------------------------------------------------------------------ kernel


@numba.njit(cache=True, nogil=True)
def _heap_push(hd, hv, size, d, v):
    i = size
    hd[i] = d
    hv[i] = v
    while i > 0:
        p = (i - 1) >> 1
        if hd[p] < hd[i] or (hd[p] == hd[i] and hv[p] <= hv[i]):
            break
        hd[p], hd[i] = hd[i], hd[p]
        hv[p], hv[i] = hv[i], hv[p]
        i = p
    return size + 1


@numba.njit(cache=True, nogil=True)
def _heap_pop(hd, hv, size):
    d, v = hd[0], hv[0]
    size -= 1
    hd[0] = hd[size]
    hv[0] = hv[size]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        r = l + 1
        c = l
        if r < size and (hd[r] < hd[l] or (hd[r] == hd[l] and hv[r] < hv[l])):
            c = r
        if hd[i] < hd[c] or (hd[i] == hd[c] and hv[i] <= hv[c]):
            break
        hd[c], hd[i] = hd[i], hd[c]
        hv[c], hv[i] = hv[i], hv[c]
        i = c
    return d, v, size


@numba.njit(cache=True, nogil=True)
def _triangle_update(dA, dB, a, b, c):
    """Distance at C from values at A, B of a planar triangle with |BC|=a, |AC|=b, |AB|=c.

    Returns inf when the virtual source does not see C through segment AB.
    """
    if abs(dA - dB) >= c:
        return np.inf
    # A=(0,0), B=(c,0), C below the axis, virtual source S above it
    xc = (b * b + c * c - a * a) / (2.0 * c)
    yc2 = b * b - xc * xc
    if yc2 <= 0.0:
        return np.inf
    yc = np.sqrt(yc2)
    xs = (dA * dA + c * c - dB * dB) / (2.0 * c)
    ys2 = dA * dA - xs * xs
    if ys2 < 0.0:
        return np.inf
    ys = np.sqrt(ys2)
    t = ys / (ys + yc)
    xcross = xs + t * (xc - xs)
    if xcross < 0.0 or xcross > c:
        return np.inf
    d = np.sqrt((xs - xc) ** 2 + (ys + yc) ** 2)
    if d < dA or d < dB:
        return np.inf
    return d


@numba.njit(cache=True, nogil=True)
def _march(n, vf_ptr, vf_idx, faces, flen, bad_face, vv_ptr, vv_idx, vv_len,
           sources, src_labels, restrict_labels):
    dist = np.full(n, np.inf)
    label = np.full(n, -1, np.int64)
    state = np.zeros(n, np.int8)
    cap = len(sources) + len(vv_idx) + 6 * len(faces) + 16
    hd = np.empty(cap)
    hv = np.empty(cap, np.int64)
    size = 0
    for i in range(len(sources)):
        s = sources[i]
        if dist[s] > 0.0 or src_labels[i] < label[s]:
            dist[s] = 0.0
            label[s] = src_labels[i]
        if state[s] == FAR:
            state[s] = TRIAL
            size = _heap_push(hd, hv, size, 0.0, s)
    n_tri = 0
    while size > 0:
        d, u, size = _heap_pop(hd, hv, size)
        if state[u] == ALIVE or d > dist[u]:
            continue
        state[u] = ALIVE
        lu = label[u]
        for k in range(vv_ptr[u], vv_ptr[u + 1]):
            v = vv_idx[k]
            if state[v] == ALIVE:
                continue
            nd = d + vv_len[k]
            if nd < dist[v] or (nd == dist[v] and lu < label[v]):
                dist[v] = nd
                label[v] = lu
                state[v] = TRIAL
                size = _heap_push(hd, hv, size, nd, v)
        for k in range(vf_ptr[u], vf_ptr[u + 1]):
            f = vf_idx[k]
            if bad_face[f]:
                continue
            cu = 0
            for c in range(3):
                if faces[f, c] == u:
                    cu = c
            for j in range(1, 3):
                ct = (cu + j) % 3  # target corner
                co = (cu + 3 - j) % 3  # other accepted corner
                t = faces[f, ct]
                o = faces[f, co]
                if state[t] == ALIVE or state[o] != ALIVE:
                    continue
                if restrict_labels and label[o] != lu:
                    continue
                nd = _triangle_update(d, dist[o], flen[f, cu], flen[f, co], flen[f, ct])
                n_tri += 1
                if nd < dist[t] or (nd == dist[t] and lu < label[t]):
                    dist[t] = nd
                    label[t] = lu
                    state[t] = TRIAL
                    size = _heap_push(hd, hv, size, nd, t)
    return dist, label, n_tri


# ------------------------------------------------------------------ solver


class MarchingSolver:
    """Precomputed connectivity for repeated sweeps over one (mesh, lengths) pair."""

    def __init__(self, mesh: Mesh, lengths: EdgeLengths):
        if len(lengths.lengths) != mesh.n_edges:
            raise ValueError(f"edge lengths cover {len(lengths.lengths)} edges, mesh has {mesh.n_edges}")
        L = np.ascontiguousarray(lengths.lengths, dtype=np.float64)
        if not (np.isfinite(L).all() and (L > 0).all()):
            raise ValueError("edge lengths must be positive and finite")
        self.mesh = mesh
        self.lengths = lengths
        self.metric = lengths.metric
        n = mesh.n_vertices
        self.n = n
        self.faces = np.ascontiguousarray(mesh.faces)
        self.flen = np.ascontiguousarray(L[mesh.face_edges])
        s = self.flen.sum(axis=1)
        self.bad_face = 2 * self.flen.max(axis=1) >= s
        order = np.argsort(self.faces.ravel(), kind="stable")
        self.vf_idx = (order // 3).astype(np.int64)
        self.vf_ptr = np.concatenate([[0], np.cumsum(np.bincount(self.faces.ravel(), minlength=n))]).astype(np.int64)
        u = np.concatenate([mesh.edges[:, 0], mesh.edges[:, 1]])
        w = np.concatenate([mesh.edges[:, 1], mesh.edges[:, 0]])
        ll = np.concatenate([L, L])
        order = np.lexsort((w, u))
        self.vv_idx = np.ascontiguousarray(w[order])
        self.vv_len = np.ascontiguousarray(ll[order])
        self.vv_ptr = np.concatenate([[0], np.cumsum(np.bincount(u, minlength=n))]).astype(np.int64)
        self.graph = csr_matrix((self.vv_len, self.vv_idx, self.vv_ptr), shape=(n, n))

    def _run(self, sources, labels=None, restrict=False):
        src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        if src.size == 0:
            raise ValueError("at least one source vertex is required")
        if src.min() < 0 or src.max() >= self.n:
            raise ValueError("source vertex out of range")
        lab = np.zeros(len(src), np.int64) if labels is None else np.asarray(labels, np.int64)
        return _march(self.n, self.vf_ptr, self.vf_idx, self.faces, self.flen, self.bad_face,
                      self.vv_ptr, self.vv_idx, self.vv_len, src, lab, restrict)

    def distances(self, sources) -> np.ndarray:
        return self._run(sources)[0]

    def distance_map(self, sources) -> DistanceMap:
        dist, _, n_tri = self._run(sources)
        report = {"triangle_updates": int(n_tri), "edge_only_triangles": int(self.bad_face.sum())}
        return DistanceMap(dist, np.atleast_1d(np.asarray(sources)), self.metric, report)

    def labels(self, seeds) -> tuple[np.ndarray, np.ndarray]:
        """Multi-source sweep; returns (distance, nearest-seed index)."""
        seeds = np.asarray(seeds, np.int64)
        dist, lab, _ = self._run(seeds, np.arange(len(seeds)), restrict=True)
        return dist, lab

    def many(self, sources, threads: int | None = None) -> np.ndarray:
        """Single-source maps for every source, (len(sources), n)."""
        sources = list(np.asarray(sources).ravel())
        threads = threads or os.cpu_count() or 1
        if threads == 1 or len(sources) < 2:
            return np.array([self.distances(s) for s in sources])
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return np.array(list(ex.map(self.distances, sources)))


def fmm_distance(mesh: Mesh, lengths: EdgeLengths, sources) -> DistanceMap:
    return MarchingSolver(mesh, lengths).distance_map(sources)


def dijkstra_distance(mesh: Mesh, lengths: EdgeLengths, sources) -> DistanceMap:
    """Edge-restricted shortest paths (scipy); an upper bound for fast marching."""
    solver = MarchingSolver(mesh, lengths)
    src = np.atleast_1d(np.asarray(sources))
    d = dijkstra(solver.graph, directed=False, indices=src, min_only=True)
    return DistanceMap(d, src, lengths.metric)


def distance_matrix(mesh: Mesh, lengths: EdgeLengths, samples, threads: int | None = None,
                    solver: MarchingSolver | None = None) -> DistanceMatrix:
    """Pairwise sample distances, one sweep per sample, symmetrized as (D + D^T) / 2."""
    samples = np.asarray(samples, dtype=np.int64)
    if len(np.unique(samples)) != len(samples):
        raise ValueError("samples must be distinct")
    solver = solver or MarchingSolver(mesh, lengths)
    D = solver.many(samples, threads)[:, samples]
    top = D.max()
    asym = float(np.abs(D - D.T).max() / top) if top > 0 else 0.0
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return DistanceMatrix(samples, D, lengths.metric, asym)


def distance_histogram(dm: DistanceMatrix, bins: int = 50) -> np.ndarray:
    """Upper-triangle distances normalized by the maximum, binned on [0, 1], masses summing to 1."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    iu = np.triu_indices(dm.k, 1)
    vals = dm.D[iu]
    top = vals.max() if vals.size else 0.0
    if top <= 0:
        raise ValueError("distance matrix is degenerate (all zero)")
    h, _ = np.histogram(vals / top, bins=bins, range=(0.0, 1.0))
    return h / h.sum()


def histogram_l1(h1: np.ndarray, h2: np.ndarray) -> float:
    return float(np.abs(np.asarray(h1) - np.asarray(h2)).sum())


def write_distance_csv(path, dmap: DistanceMap) -> None:
    rows = ["vertex,distance"] + [f"{i},{float(d)!r}" for i, d in enumerate(dmap.distances)]
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def write_matrix_csv(path, dm: DistanceMatrix) -> None:
    rows = ["sample," + ",".join(str(int(s)) for s in dm.samples)]
    for s, row in zip(dm.samples, dm.D):
        rows.append(f"{int(s)}," + ",".join(repr(float(x)) for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def colormap(values: np.ndarray) -> np.ndarray:
    """Blue-to-red ramp for non-negative scalars; unreachable (inf) vertices are grey."""
    v = np.asarray(values, float)
    finite = np.isfinite(v)
    out = np.full((len(v), 3), 128.0)
    if finite.any():
        top = v[finite].max()
        t = v[finite] / top if top > 0 else np.zeros(finite.sum())
        out[finite] = np.stack([255 * t, 64 * (1 - np.abs(2 * t - 1)), 255 * (1 - t)], axis=1)
    return out
