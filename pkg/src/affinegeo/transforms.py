"""Volume-preserving (equi-affine) maps of the embedding space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

DET_TOL = 1e-9


class TransformError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EquiAffineTransform:
    """x -> A x + b with det A = 1."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float).reshape(3, 3)
        b = np.zeros(3) if self.b is None else np.array(self.b, dtype=float).reshape(3)
        det = float(np.linalg.det(A))
        if not abs(det - 1.0) <= DET_TOL:
            raise TransformError(f"transform is not equi-affine: det(A) = {det:.12g}")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def identity(cls) -> "EquiAffineTransform":
        return cls(np.eye(3), np.zeros(3))

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.A))

    def compose(self, inner: "EquiAffineTransform") -> "EquiAffineTransform":
        """self after inner: x -> A1 (A2 x + b2) + b1."""
        return EquiAffineTransform(self.A @ inner.A, self.A @ inner.b + self.b)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.A.T + self.b


def apply_transform(mesh: Mesh, t: EquiAffineTransform) -> Mesh:
    return mesh.with_vertices(t.apply(mesh.vertices))


def _rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def _axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    k = axis / np.linalg.norm(axis)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def random_equiaffine(seed: int, strength: float) -> EquiAffineTransform:
    """Deterministic random equi-affine map whose distortion grows with ``strength``.

    A = R(strength * angle) @ (I + strength * S) @ diag(exp(strength * a)),
    with S strictly upper triangular, sum(a) = 0, and fixed magnitudes
    |a| = 0.25, |S|_F = 0.2 so only directions are random. det A = 1 up to
    rounding; over seeds cond(A) is about 1.5 at strength 1 and 2.7-4 at strength 3.
    """
    if strength < 0:
        raise ValueError("strength must be non-negative")
    rng = np.random.default_rng(seed)
    a = rng.normal(size=3)
    a -= a.mean()
    a *= 0.25 / np.linalg.norm(a)
    shear = np.triu(rng.normal(size=(3, 3)), k=1)
    shear *= 0.2 / np.linalg.norm(shear)
    axis = rng.normal(size=3)
    angle = rng.uniform(-np.pi, np.pi) / 3
    b = rng.normal(scale=0.5, size=3)
    A = _axis_angle(axis, strength * angle) @ (np.eye(3) + strength * shear) @ np.diag(np.exp(strength * a))
    # remove the residual rounding in the determinant
    A = A / np.cbrt(np.linalg.det(A))
    return EquiAffineTransform(A, strength * b)


def equiaffine_with_condition(cond: float, seed: int = 0) -> EquiAffineTransform:
    """Equi-affine map with singular values (sqrt(c), 1, 1/sqrt(c)) between random rotations."""
    if cond < 1:
        raise ValueError("condition number must be >= 1")
    rng = np.random.default_rng(seed)
    s = np.array([np.sqrt(cond), 1.0, 1.0 / np.sqrt(cond)])
    A = _rotation(rng) @ np.diag(s) @ _rotation(rng)
    A = A / np.cbrt(np.linalg.det(A))
    return EquiAffineTransform(A, rng.normal(scale=0.5, size=3))
