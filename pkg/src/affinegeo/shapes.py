"""Synthetic test shapes."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .mesh import Mesh

MAX_SUBDIVISIONS = 7


def _icosahedron():
    t = (1.0 + 5.0 ** 0.5) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def generate_icosphere(subdivisions: int = 3, radius: float = 1.0) -> Mesh:
    """Loop-style subdivided icosahedron projected to a sphere (10*4**s + 2 vertices).

    Faces are oriented outward. The vertex set is symmetric under each
    coordinate-plane reflection.
    """
    if not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise ValueError(f"subdivisions must be in [0, {MAX_SUBDIVISIONS}], got {subdivisions}")
    v, f = _icosahedron()
    verts = [row for row in v]
    for _ in range(subdivisions):
        midpoint = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            k = midpoint.get(key)
            if k is None:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                k = midpoint[key] = len(verts) - 1
            return k

        nf = np.empty((4 * len(f), 3), np.int64)
        for i, (a, b, c) in enumerate(f):
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf[4 * i:4 * i + 4] = [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        f = nf
    return Mesh(radius * np.array(verts), f)


def radial_bumps(mesh: Mesh, centers, height: float, width: float) -> Mesh:
    """Push vertices outward along their radial direction by Gaussian bumps.

    ``centers`` are unit directions; ``width`` is the angular std-dev in radians.
    """
    v = mesh.vertices
    r = np.linalg.norm(v, axis=1, keepdims=True)
    dirs = v / r
    scale = np.ones(len(v))
    for c in np.atleast_2d(centers):
        c = np.asarray(c, float) / np.linalg.norm(c)
        ang = np.arccos(np.clip(dirs @ c, -1.0, 1.0))
        scale += height * np.exp(-0.5 * (ang / width) ** 2)
    return mesh.with_vertices(v * scale[:, None])


def symmetric_test_shape(subdivisions: int = 3) -> tuple[Mesh, np.ndarray]:
    """Ellipsoid with a mirror pair of bumps plus one bump on the mirror plane.

    The only intended symmetry is the reflection x -> -x; the third bump
    breaks the ellipsoid's other mirror planes. Returns (mesh, perm) where
    ``perm[v]`` is the image of vertex v.
    """
    base = generate_icosphere(subdivisions)
    centers = [[0.55, 0.6, 0.58], [-0.55, 0.6, 0.58], [0.0, -0.5, -0.8]]
    bumped = radial_bumps(base, centers, height=0.35, width=0.35)
    mesh = bumped.with_vertices(bumped.vertices * np.array([1.3, 1.0, 0.8]))
    return mesh, mirror_permutation(mesh, axis=0)


def asymmetric_test_shape(subdivisions: int = 3, seed: int = 0, n_bumps: int = 6) -> Mesh:
    """Ellipsoid with randomly placed bumps of random heights (no intended symmetry)."""
    rng = np.random.default_rng(seed)
    base = generate_icosphere(subdivisions)
    centers = rng.normal(size=(n_bumps, 3))
    v = base.vertices.copy()
    dirs = v / np.linalg.norm(v, axis=1, keepdims=True)
    scale = np.ones(len(v))
    for c, h in zip(centers, rng.uniform(0.15, 0.4, n_bumps)):
        c = c / np.linalg.norm(c)
        ang = np.arccos(np.clip(dirs @ c, -1.0, 1.0))
        scale += h * np.exp(-0.5 * (ang / 0.35) ** 2)
    return base.with_vertices(v * scale[:, None] * np.array([1.3, 1.0, 0.8]))


def mirror_permutation(mesh: Mesh, axis: int = 0, tol: float = 1e-9) -> np.ndarray:
    """Vertex permutation realising the reflection of ``axis``; raises if the vertex set is not symmetric."""
    v = mesh.vertices
    m = v.copy()
    m[:, axis] *= -1
    dist, idx = cKDTree(v).query(m)
    if dist.max() > tol * max(mesh.bbox_diagonal(), 1.0):
        raise ValueError("vertex set is not mirror symmetric")
    return idx


def flat_grid(n: int = 4, size: float = 1.0) -> Mesh:
    """Planar n x n grid in z=0 split into right triangles."""
    xs = np.linspace(0.0, size, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    v = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    f = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            f += [[a, b, c], [a, c, d]]
    return Mesh(v, np.array(f))
