"""Per-triangle equi-affine metric tensor and per-edge lengths.

Pipeline for every triangle: unfold it and its (up to three) edge neighbours
into the plane, canonize the central triangle to (0,0),(1,0),(0,1), fit a
quadratic patch to the embedding coordinates, evaluate

    gbar_ij = det(x_u, x_v, x_ij),   ghat = gbar * |det gbar|^(-1/4)

at the barycenter, make it positive definite by taking absolute eigenvalues,
and read off the lengths of the three canonical edges.

All stages are vectorised over triangles; the single-triangle functions are
thin wrappers used for testing and debugging.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh

EUCLIDEAN = "euclidean"
EQUI_AFFINE = "equi_affine"
METRICS = (EQUI_AFFINE, EUCLIDEAN)

DET_CLAMP = 1e-10
EIG_FLOOR = 1e-6
ABS_FLOOR = 1e-12
COINCIDE_TOL = 1e-9
SINGULAR_COND = 1e10

BARYCENTER = (1.0 / 3.0, 1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class PatchParametrization:
    """Planar coordinates of a triangle patch: 3 central points then up to 3 hinged neighbours."""

    triangle: int
    uv: np.ndarray  # (n, 2)
    vertex_ids: np.ndarray  # (n,)
    n_neighbors: int
    layout: np.ndarray = field(repr=False, default=None)  # hinged, pre-canonization coordinates


@dataclass(frozen=True, eq=False)
class QuadraticPatch:
    """coeffs[k] = (c0, cu, cv, cuv, cuu, cvv) for embedding coordinate k."""

    coeffs: np.ndarray  # (3, 6)
    barycenter: tuple = BARYCENTER
    n_points: int = 6

    def evaluate(self, uv) -> np.ndarray:
        uv = np.atleast_2d(uv)
        u, v = uv[:, 0], uv[:, 1]
        basis = np.stack([np.ones_like(u), u, v, u * v, u * u, v * v], axis=1)
        return basis @ self.coeffs.T

    def derivatives(self, uv=None):
        """(x_u, x_v, x_uu, x_uv, x_vv) at ``uv`` (default: barycenter)."""
        u, v = self.barycenter if uv is None else uv
        return _derivs(self.coeffs[None], u, v)


@dataclass(frozen=True)
class SymmetricForm2:
    g11: float
    g12: float
    g22: float
    tag: str = "normalized"
    clamped: bool = False

    def matrix(self) -> np.ndarray:
        return np.array([[self.g11, self.g12], [self.g12, self.g22]])

    @property
    def det(self) -> float:
        return self.g11 * self.g22 - self.g12 ** 2


@dataclass(frozen=True)
class MetricTensor:
    """Positive-definite 2x2 form.

    ``fixed`` is set when the input was not definite (mixed-sign or floored
    eigenvalues); ``flipped`` when it was negative definite, which only
    reflects the orientation of the parametrization.
    """

    g11: float
    g12: float
    g22: float
    eigenvalues: tuple
    fixed: bool = False
    flipped: bool = False

    def matrix(self) -> np.ndarray:
        return np.array([[self.g11, self.g12], [self.g12, self.g22]])


@dataclass(frozen=True, eq=False)
class EdgeLengths:
    """Per-edge lengths of a mesh under one metric, with an audit report."""

    lengths: np.ndarray
    counts: np.ndarray
    metric: str
    report: dict = field(default_factory=dict)
    triangle_forms: np.ndarray | None = field(default=None, repr=False)  # (F, 3) g11, g12, g22
    triangle_flags: np.ndarray | None = field(default=None, repr=False)  # (F, 4) clamped, fixed, flipped, fallback

    def scaled(self, factor: float) -> "EdgeLengths":
        return EdgeLengths(self.lengths * factor, self.counts, self.metric, dict(self.report))


# ---------------------------------------------------------------- vectorised core


def _patch_points(mesh: Mesh, faces: np.ndarray | None = None):
    """Vertex ids of central corners and of the neighbour vertex opposite each corner (-1 if none)."""
    if faces is None:
        faces = mesh.faces
        nbr = mesh.face_neighbors
        fe = mesh.face_edges
    else:
        # corners reordered: recover the neighbour across each relabelled corner's edge
        pos = _corner_positions(mesh.faces, faces)
        nbr = np.take_along_axis(mesh.face_neighbors, pos, axis=1)
        fe = np.take_along_axis(mesh.face_edges, pos, axis=1)
    opp = np.full(faces.shape, -1, np.int64)
    has = nbr >= 0
    nf = mesh.faces[np.where(has, nbr, 0)]  # (F, 3, 3)
    e = mesh.edges[fe]  # (F, 3, 2)
    not_on_edge = (nf != e[:, :, :1]) & (nf != e[:, :, 1:])
    pick = np.argmax(not_on_edge, axis=2)
    opp_v = np.take_along_axis(nf, pick[..., None], axis=2)[..., 0]
    opp[has] = opp_v[has]
    return faces, opp


def _corner_positions(orig: np.ndarray, perm_faces: np.ndarray) -> np.ndarray:
    """pos[f, c] such that perm_faces[f, c] == orig[f, pos[f, c]]."""
    return np.argmax(perm_faces[:, :, None] == orig[:, None, :], axis=2)


def _unfold(P: np.ndarray, Q: np.ndarray, qmask: np.ndarray):
    """Hinged planar layout and canonical coordinates.

    P: (F, 3, 3) central corners; Q: (F, 3, 3) neighbour vertex across the
    edge opposite each corner; qmask: (F, 3) which neighbours exist.
    Returns layout (F, 6, 2), canonical uv (F, 6, 2), point mask (F, 6).
    """
    F = len(P)
    e01 = P[:, 1] - P[:, 0]
    e02 = P[:, 2] - P[:, 0]
    c = np.linalg.norm(e01, axis=1)
    b = np.linalg.norm(e02, axis=1)
    x2 = np.einsum("ij,ij->i", e01, e02) / c
    y2 = np.sqrt(np.maximum(b * b - x2 * x2, 0.0))
    lay = np.zeros((F, 6, 2))
    lay[:, 1, 0] = c
    lay[:, 2, 0] = x2
    lay[:, 2, 1] = y2
    for k in range(3):
        ia, ib = (k + 1) % 3, (k + 2) % 3
        A, B, C = lay[:, ia], lay[:, ib], lay[:, k]
        ra = np.linalg.norm(Q[:, k] - P[:, ia], axis=1)
        rb = np.linalg.norm(Q[:, k] - P[:, ib], axis=1)
        ev = B - A
        L = np.linalg.norm(ev, axis=1)
        eh = ev / L[:, None]
        nh = np.stack([-eh[:, 1], eh[:, 0]], axis=1)
        side = np.einsum("ij,ij->i", C - A, nh)
        nh = np.where(side[:, None] > 0, -nh, nh)
        x = (ra * ra - rb * rb + L * L) / (2 * L)
        h = np.sqrt(np.maximum(ra * ra - x * x, 0.0))
        lay[:, 3 + k] = A + x[:, None] * eh + h[:, None] * nh
    mask = np.concatenate([np.ones((F, 3), bool), qmask], axis=1)
    # affine map taking the central triangle to (0,0), (1,0), (0,1)
    M = np.stack([lay[:, 1] - lay[:, 0], lay[:, 2] - lay[:, 0]], axis=2)  # columns
    Minv = np.linalg.inv(M)
    uv = np.einsum("fij,fnj->fni", Minv, lay - lay[:, :1])
    uv[:, 0] = (0.0, 0.0)
    uv[:, 1] = (1.0, 0.0)
    uv[:, 2] = (0.0, 1.0)
    for k in range(3, 6):
        d = np.linalg.norm(uv[:, :k] - uv[:, k:k + 1], axis=2)
        dup = ((d < COINCIDE_TOL) & mask[:, :k]).any(axis=1)
        mask[:, k] &= ~dup
    uv[~mask] = 0.0
    return lay, uv, mask


def _basis(uv: np.ndarray) -> np.ndarray:
    u, v = uv[..., 0], uv[..., 1]
    return np.stack([np.ones_like(u), u, v, u * v, u * u, v * v], axis=-1)


def _fit(uv: np.ndarray, X: np.ndarray, mask: np.ndarray):
    """Quadratic interpolation per triangle; returns coeffs (F, 3, 6) and ok flags."""
    F = len(uv)
    coeffs = np.zeros((F, 3, 6))
    ok = np.zeros(F, bool)
    npts = mask.sum(axis=1)
    for n, cols in ((6, [0, 1, 2, 3, 4, 5]), (5, [0, 1, 2, 4, 5])):
        sel = np.flatnonzero(npts == n)
        if not sel.size:
            continue
        m = mask[sel]
        V = _basis(uv[sel][m].reshape(len(sel), n, 2))[:, :, cols]
        rhs = X[sel][m].reshape(len(sel), n, 3)
        cond = np.linalg.cond(V)
        good = np.isfinite(cond) & (cond < SINGULAR_COND)
        if good.any():
            sol = np.linalg.solve(V[good], rhs[good])  # (G, n, 3)
            full = np.zeros((good.sum(), 6, 3))
            full[:, cols] = sol
            coeffs[sel[good]] = np.transpose(full, (0, 2, 1))
            ok[sel[good]] = True
    return coeffs, ok


def _derivs(coeffs: np.ndarray, u: float, v: float):
    c0, cu, cv, cuv, cuu, cvv = np.moveaxis(coeffs, -1, 0)
    xu = cu + cuv * v + 2 * cuu * u
    xv = cv + cuv * u + 2 * cvv * v
    return xu, xv, 2 * cuu, cuv, 2 * cvv


def _pre_metric(coeffs: np.ndarray, eps_det: np.ndarray):
    """Raw form gbar, normalized form ghat (both (F, 3) as g11, g12, g22) and clamp flags."""
    xu, xv, xuu, xuv, xvv = _derivs(coeffs, *BARYCENTER)
    n = np.cross(xu, xv)
    gbar = np.stack([np.einsum("ij,ij->i", n, xuu),
                     np.einsum("ij,ij->i", n, xuv),
                     np.einsum("ij,ij->i", n, xvv)], axis=1)
    det = np.abs(gbar[:, 0] * gbar[:, 2] - gbar[:, 1] ** 2)
    clamped = det < eps_det
    f = np.maximum(det, eps_det) ** -0.25
    return gbar, gbar * f[:, None], clamped


def _fix(forms: np.ndarray, eps_abs: float):
    """Absolute-eigenvalue fix of 2x2 symmetric forms (F, 3)."""
    S = np.empty((len(forms), 2, 2))
    S[:, 0, 0], S[:, 0, 1], S[:, 1, 0], S[:, 1, 1] = forms[:, 0], forms[:, 1], forms[:, 1], forms[:, 2]
    gam, U = np.linalg.eigh(S)
    absg = np.abs(gam)
    top = absg.max(axis=1)
    rel = EIG_FLOOR * top
    # subnormal floors lose the precision the slack below relies on
    floor = np.where(rel >= np.finfo(float).tiny, rel, eps_abs)
    new = np.maximum(absg, floor[:, None])
    # slack so that re-fixing an already floored form is a no-op
    floored = (absg < floor[:, None] * (1 - 1e-9)).any(axis=1)
    pos = (gam > 0).all(axis=1)
    neg = (gam < 0).all(axis=1)
    fixed = floored | ~(pos | neg)
    flipped = neg & ~floored
    G = np.einsum("fij,fj,fkj->fik", U, new, U)
    out = np.stack([G[:, 0, 0], 0.5 * (G[:, 0, 1] + G[:, 1, 0]), G[:, 1, 1]], axis=1)
    return out, new, fixed, flipped


def _canonical_lengths(G: np.ndarray) -> np.ndarray:
    """Lengths of edges (v0v1, v0v2, v1v2) of the canonical triangle."""
    return np.sqrt(np.stack([G[:, 0], G[:, 2], G[:, 0] - 2 * G[:, 1] + G[:, 2]], axis=1))


def abs_floor(mesh: Mesh) -> float:
    # metric entries scale as length^(3/2)
    return ABS_FLOOR * max(mesh.bbox_diagonal(), 1e-300) ** 1.5


def triangle_metrics(mesh: Mesh, faces: np.ndarray | None = None) -> dict:
    """Run the per-triangle pipeline for all faces (optionally with relabelled corners).

    Returns a dict of arrays: ``lengths`` (F, 3) for edges (v0v1, v0v2, v1v2)
    in the given corner order, ``forms`` (F, 3) fixed metric, ``pre`` (F, 3)
    normalized pre-metric and flag arrays ``clamped``, ``fixed``,
    ``flipped``, ``fallback``.
    """
    faces, opp = _patch_points(mesh, faces)
    V = mesh.vertices
    P = V[faces]
    qmask = opp >= 0
    Q = V[np.where(qmask, opp, 0)]
    _, uv, mask = _unfold(P, Q, qmask)
    X = np.concatenate([P, Q], axis=1)
    coeffs, ok = _fit(uv, X, mask)
    edge = np.linalg.norm(P[:, [1, 2, 2]] - P[:, [0, 0, 1]], axis=2)
    eps_det = DET_CLAMP * edge.mean(axis=1) ** 6
    _, pre, clamped = _pre_metric(coeffs, eps_det)
    G, _, fixed, flipped = _fix(pre, abs_floor(mesh))
    lengths = _canonical_lengths(G)
    fallback = ~ok
    lengths[fallback] = edge[fallback]
    return {
        "lengths": lengths, "forms": G, "pre": pre, "clamped": clamped & ok,
        "fixed": fixed & ok, "flipped": flipped & ok, "fallback": fallback, "euclidean": edge,
    }


# ---------------------------------------------------------------- public operations


def unfold_patch(mesh: Mesh, tri: int) -> PatchParametrization:
    faces, opp = _patch_points(mesh)
    f = faces[tri:tri + 1]
    P = mesh.vertices[f]
    if np.linalg.norm(np.cross(P[0, 1] - P[0, 0], P[0, 2] - P[0, 0])) <= 0:
        raise ValueError(f"triangle {tri} is degenerate")
    qmask = opp[tri:tri + 1] >= 0
    Q = mesh.vertices[np.where(qmask, opp[tri:tri + 1], 0)]
    lay, uv, mask = _unfold(P, Q, qmask)
    ids = np.concatenate([f[0], opp[tri]])
    m = mask[0]
    return PatchParametrization(tri, uv[0][m], ids[m], int(m[3:].sum()), lay[0][m])


def fit_quadratic(p: PatchParametrization, positions: np.ndarray) -> QuadraticPatch | None:
    """Interpolating quadratic; ``None`` signals fallback to the Euclidean metric."""
    positions = np.asarray(positions, float)
    n = len(p.uv)
    if n < 5 or n > 6:
        return None
    uv = np.zeros((1, 6, 2))
    X = np.zeros((1, 6, 3))
    mask = np.zeros((1, 6), bool)
    uv[0, :n] = p.uv
    X[0, :n] = positions
    mask[0, :n] = True
    coeffs, ok = _fit(uv, X, mask)
    if not ok[0]:
        return None
    return QuadraticPatch(coeffs[0], BARYCENTER, n)


def pre_metric(q: QuadraticPatch, mean_edge: float = 1.0) -> SymmetricForm2:
    """Normalized equi-affine pre-metric at the barycenter.

    ``mean_edge`` is the triangle's mean 3D edge length and sets the clamp
    on |det gbar|.
    """
    eps = np.array([DET_CLAMP * mean_edge ** 6])
    _, g, clamped = _pre_metric(q.coeffs[None], eps)
    return SymmetricForm2(*map(float, g[0]), tag="normalized", clamped=bool(clamped[0]))


def raw_pre_metric(q: QuadraticPatch) -> SymmetricForm2:
    """Unnormalized gbar_ij = det(x_u, x_v, x_ij)."""
    gbar, _, _ = _pre_metric(q.coeffs[None], np.ones(1))
    return SymmetricForm2(*map(float, gbar[0]), tag="pre_metric")


def fix_metric(s: SymmetricForm2, eps_abs: float = ABS_FLOOR) -> MetricTensor:
    G, gam, fixed, flipped = _fix(np.array([[s.g11, s.g12, s.g22]], float), eps_abs)
    return MetricTensor(*map(float, G[0]), eigenvalues=tuple(map(float, gam[0])),
                        fixed=bool(fixed[0]), flipped=bool(flipped[0]))


def triangle_edge_lengths(g: MetricTensor) -> tuple[float, float, float]:
    """Lengths of the canonical edges (0,0)-(1,0), (0,0)-(0,1), (1,0)-(0,1)."""
    L = _canonical_lengths(np.array([[g.g11, g.g12, g.g22]]))[0]
    return float(L[0]), float(L[1]), float(L[2])


def euclidean_edge_lengths(mesh: Mesh) -> EdgeLengths:
    L = mesh.edge_vectors_length()
    counts = (mesh.edge_faces >= 0).sum(axis=1)
    return EdgeLengths(L, counts, EUCLIDEAN, {"triangles": mesh.n_faces})


def _count_violations(mesh: Mesh, lengths: np.ndarray) -> int:
    L = lengths[mesh.face_edges]
    s = L.sum(axis=1)
    return int((2 * L.max(axis=1) >= s).sum())


def assemble_edge_lengths(mesh: Mesh, metric: str = EQUI_AFFINE) -> EdgeLengths:
    """Per-edge lengths; interior edges average their two per-triangle values."""
    if metric == EUCLIDEAN:
        return euclidean_edge_lengths(mesh)
    if metric != EQUI_AFFINE:
        raise ValueError(f"unknown metric '{metric}', expected one of {METRICS}")
    t = triangle_metrics(mesh)
    per_tri = t["lengths"]
    fb = t["fallback"]
    if fb.any() and (~fb).any():
        # keep fallback triangles in the same units as the rest of the mesh
        ratio = np.median(per_tri[~fb] / t["euclidean"][~fb])
        per_tri = per_tri.copy()
        per_tri[fb] = t["euclidean"][fb] * ratio
    # canonical edges (v0v1, v0v2, v1v2) are opposite corners (2, 1, 0)
    eids = mesh.face_edges[:, [2, 1, 0]].ravel()
    total = np.bincount(eids, weights=per_tri.ravel(), minlength=mesh.n_edges)
    counts = np.bincount(eids, minlength=mesh.n_edges)
    lengths = total / np.maximum(counts, 1)
    report = {
        "triangles": mesh.n_faces,
        "clamped": int(t["clamped"].sum()),
        "fixed": int(t["fixed"].sum()),
        "flipped": int(t["flipped"].sum()),
        "fallback": int(fb.sum()),
        "triangle_inequality_violations": _count_violations(mesh, lengths),
    }
    flags = np.stack([t["clamped"], t["fixed"], t["flipped"], fb], axis=1)
    return EdgeLengths(lengths, counts, EQUI_AFFINE, report, t["forms"], flags)


def edge_lengths(mesh: Mesh, metric: str) -> EdgeLengths:
    return assemble_edge_lengths(mesh, metric)


def write_metric_csv(path, el: EdgeLengths) -> None:
    """Per-triangle tensors and flags (debug dump)."""
    if el.triangle_forms is None:
        raise ValueError("no per-triangle tensors recorded for this metric")
    rows = ["triangle,g11,g12,g22,clamped,fixed,flipped,fallback"]
    for i, (g, fl) in enumerate(zip(el.triangle_forms, el.triangle_flags)):
        rows.append(f"{i}," + ",".join(repr(float(x)) for x in g[:3]) + "," + ",".join(str(int(x)) for x in fl))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def write_edge_csv(path, mesh: Mesh, el: EdgeLengths) -> None:
    rows = ["edge,v0,v1,length,contributors"]
    for i, ((a, b), L, c) in enumerate(zip(mesh.edges, el.lengths, el.counts)):
        rows.append(f"{i},{a},{b},{float(L)!r},{int(c)}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
