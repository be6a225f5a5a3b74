"""Canonical forms: Euclidean embeddings of geodesic distance matrices."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .geodesics import DistanceMatrix


@dataclass(frozen=True, eq=False)
class CanonicalForm:
    coords: np.ndarray  # (k, m), centred
    stress: float
    metric: str = ""
    samples: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.coords.shape[0]

    @property
    def m(self) -> int:
        return self.coords.shape[1]


def stress(X: np.ndarray, D: np.ndarray) -> float:
    """Raw least-squares stress sum_{i<j} (|x_i - x_j| - d_ij)^2."""
    return float(((pdist(X) - squareform(D, checks=False)) ** 2).sum())


def _matrix(dm) -> tuple[np.ndarray, str, np.ndarray | None]:
    if isinstance(dm, DistanceMatrix):
        return dm.D, dm.metric, dm.samples
    return np.asarray(dm, float), "", None


def classical_mds(dm, m: int = 3) -> CanonicalForm:
    """Torgerson scaling: top-m eigenpairs of -J D^2 J / 2.

    Negative eigenvalues are dropped; their total magnitude is reported in
    ``info['negative_mass']`` relative to the positive mass.
    """
    D, metric, samples = _matrix(dm)
    if m < 1:
        raise ValueError("embedding dimension must be >= 1")
    k = len(D)
    if not np.allclose(D, D.T, atol=1e-12 * max(D.max(), 1.0)):
        raise ValueError("distance matrix must be symmetric")
    J = np.eye(k) - 1.0 / k
    B = -0.5 * J @ (D ** 2) @ J
    w, V = np.linalg.eigh(0.5 * (B + B.T))
    w, V = w[::-1], V[:, ::-1]
    scale = max(abs(w).max(), 1e-300)
    pos = w > 1e-12 * scale
    r = min(m, int(pos.sum()))
    X = np.zeros((k, m))
    X[:, :r] = V[:, :r] * np.sqrt(w[:r])
    if r < m:
        warnings.warn(f"only {r} positive eigenvalues; padding {m - r} zero coordinates", stacklevel=2)
    X -= X.mean(axis=0)
    neg = float(-w[w < 0].sum() / max(w[w > 0].sum(), 1e-300))
    return CanonicalForm(X, stress(X, D), metric, samples,
                         {"eigenvalues": w[:m].tolist(), "negative_mass": neg})


def _guttman(X: np.ndarray, D: np.ndarray) -> np.ndarray:
    k = len(X)
    dist = squareform(pdist(X))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dist > 0, D / dist, 0.0)
    B = -ratio
    np.fill_diagonal(B, 0.0)
    np.fill_diagonal(B, -B.sum(axis=1))
    return B @ X / k


def smacof(dm, init: CanonicalForm, max_iters: int = 500, tol: float = 1e-6) -> CanonicalForm:
    """Stress majorization from ``init``; ``info['history']`` holds the stress after every iteration."""
    D, metric, samples = _matrix(dm)
    X = np.array(init.coords, float)
    if X.shape[0] != len(D):
        raise ValueError(f"init has {X.shape[0]} points, distance matrix has {len(D)}")
    X -= X.mean(axis=0)
    s = stress(X, D)
    history = [s]
    it = 0
    while it < max_iters and s > 0:
        X_new = _guttman(X, D)
        s_new = stress(X_new, D)
        it += 1
        # majorization guarantees s_new <= s up to rounding
        if s_new > s:
            break
        X, s_prev, s = X_new, s, s_new
        history.append(s)
        if (s_prev - s) / s_prev < tol:
            break
    X -= X.mean(axis=0)
    return CanonicalForm(X, s, metric or init.metric, samples if samples is not None else init.samples,
                         {"history": history, "iterations": it})


def canonical_form(dm: DistanceMatrix, m: int = 3, refine: bool = True,
                   max_iters: int = 500, tol: float = 1e-6) -> CanonicalForm:
    """Max-normalized classical scaling, optionally refined by SMACOF."""
    dm = dm.normalized()
    cf = classical_mds(dm, m)
    return smacof(dm, cf, max_iters, tol) if refine else cf


def procrustes_align(a, b, allow_reflection: bool = True):
    """Rigid map (R, t) minimizing |a R^T + t - b|; rmsd is divided by b's diameter.

    Returns (rotation, translation, normalized rmsd).
    """
    A = a.coords if isinstance(a, CanonicalForm) else np.asarray(a, float)
    B = b.coords if isinstance(b, CanonicalForm) else np.asarray(b, float)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    diam = pdist(B).max() if len(B) > 1 else 0.0
    if diam <= 0:
        raise ValueError("target configuration is degenerate (all points coincide)")
    ca, cb = A.mean(axis=0), B.mean(axis=0)
    H = (A - ca).T @ (B - cb)
    U, S, Vt = np.linalg.svd(H)
    d = np.ones(len(S))
    if not allow_reflection and np.linalg.det(U @ Vt) < 0:
        d[-1] = -1.0
    R = (U * d) @ Vt  # maps row vectors: a @ R
    R = R.T
    t = cb - ca @ R.T
    resid = A @ R.T + t - B
    rmsd = float(np.sqrt((resid ** 2).sum(axis=1).mean()))
    return R, t, rmsd / diam


def write_form_csv(path, cf: CanonicalForm) -> None:
    ids = cf.samples if cf.samples is not None else np.arange(cf.k)
    rows = ["point," + ",".join(f"z{j}" for j in range(cf.m))]
    rows += [f"{int(i)}," + ",".join(repr(float(x)) for x in z) for i, z in zip(ids, cf.coords)]
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
