"""Triangle mesh container with derived adjacency and validation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Base class for mesh problems."""


class MeshFormatError(MeshError):
    """The input file could not be parsed."""


class MeshValidationError(MeshError):
    """The mesh violates a structural invariant (index range, manifoldness, degeneracy)."""


DEGENERATE_AREA_FACTOR = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable embedded triangle mesh.

    ``edges`` holds sorted vertex pairs, ``face_edges[f, c]`` is the edge
    opposite corner ``c`` of face ``f`` and ``face_neighbors[f, c]`` the face
    across that edge (-1 on the boundary).
    """

    vertices: np.ndarray
    faces: np.ndarray
    edges: np.ndarray = field(init=False, repr=False)
    edge_faces: np.ndarray = field(init=False, repr=False)
    face_edges: np.ndarray = field(init=False, repr=False)
    face_neighbors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshValidationError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshValidationError(f"faces must have shape (m, 3), got {f.shape}")
        if not np.issubdtype(f.dtype, np.integer):
            if not np.all(np.equal(np.mod(f, 1), 0)):
                raise MeshValidationError("face indices must be integers")
        f = f.astype(np.int64)
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f))
        self._validate_indices()
        self._build_adjacency()
        self._validate_geometry()

    def _validate_indices(self):
        v, f = self.vertices, self.faces
        bad = np.flatnonzero(~np.isfinite(v).all(axis=1))
        if bad.size:
            raise MeshValidationError(f"vertex {bad[0]} has a non-finite position {v[bad[0]].tolist()}")
        out = np.flatnonzero(((f < 0) | (f >= len(v))).any(axis=1))
        if out.size:
            raise MeshValidationError(
                f"face {out[0]} references vertex out of range: {f[out[0]].tolist()} (vertex count {len(v)})"
            )
        rep = np.flatnonzero((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2]))
        if rep.size:
            raise MeshValidationError(f"face {rep[0]} repeats a vertex: {f[rep[0]].tolist()}")

    def _build_adjacency(self):
        f = self.faces
        m = len(f)
        # edge opposite corner c joins corners c+1 and c+2
        a = np.stack([f[:, 1], f[:, 2], f[:, 0]], axis=1).ravel()
        b = np.stack([f[:, 2], f[:, 0], f[:, 1]], axis=1).ravel()
        pairs = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)
        if m:
            edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        else:
            edges = np.zeros((0, 2), np.int64)
            inverse = np.zeros(0, np.int64)
            counts = np.zeros(0, np.int64)
        inverse = inverse.reshape(-1)
        over = np.flatnonzero(counts > 2)
        if over.size:
            e = edges[over[0]]
            raise MeshValidationError(
                f"non-manifold edge ({e[0]}, {e[1]}) shared by {counts[over[0]]} faces"
            )
        face_edges = inverse.reshape(m, 3)
        edge_faces = np.full((len(edges), 2), -1, np.int64)
        face_of = np.repeat(np.arange(m), 3)
        order = np.argsort(inverse, kind="stable")
        se = inverse[order]
        second = np.zeros(len(se), bool)
        second[1:] = se[1:] == se[:-1]
        edge_faces[se, second.astype(np.int64)] = face_of[order]
        other = np.where(edge_faces[face_edges, 0] == np.arange(m)[:, None],
                         edge_faces[face_edges, 1], edge_faces[face_edges, 0])
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "edge_faces", _frozen(edge_faces))
        object.__setattr__(self, "face_edges", _frozen(face_edges))
        object.__setattr__(self, "face_neighbors", _frozen(other))

    def _validate_geometry(self):
        if not len(self.faces):
            return
        areas = self.face_areas()
        tol = DEGENERATE_AREA_FACTOR * self.bbox_diagonal() ** 2
        bad = np.flatnonzero(areas <= tol)
        if bad.size:
            raise MeshValidationError(
                f"face {bad[0]} {self.faces[bad[0]].tolist()} is degenerate (area {areas[bad[0]]:.3e})"
            )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def is_closed(self) -> bool:
        return bool(len(self.edges)) and bool((self.edge_faces[:, 1] >= 0).all())

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_faces[:, 1] < 0)

    def face_areas(self) -> np.ndarray:
        p = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    def edge_vectors_length(self) -> np.ndarray:
        """Euclidean length of every edge."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    def bbox_diagonal(self) -> float:
        if not len(self.vertices):
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def signed_volume(self) -> float:
        p = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)

    def vertex_neighbors(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (indptr, indices) of vertex-vertex adjacency through edges."""
        n = self.n_vertices
        u = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        w = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.lexsort((w, u))
        indptr = np.zeros(n + 1, np.int64)
        np.add.at(indptr, u + 1, 1)
        return np.cumsum(indptr), w[order]

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        return Mesh(vertices, self.faces)


def mesh_stats(mesh: Mesh) -> dict:
    """Counts, area, bounding-box diagonal and (closed meshes only) enclosed volume."""
    out = {
        "vertex_count": mesh.n_vertices,
        "face_count": mesh.n_faces,
        "total_area": float(mesh.face_areas().sum()),
        "bbox_diagonal": mesh.bbox_diagonal(),
    }
    if mesh.is_closed:
        out["enclosed_volume"] = abs(mesh.signed_volume())
    return out
