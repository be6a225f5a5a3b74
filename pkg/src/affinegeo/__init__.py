"""Equi-affine invariant geodesic distances on triangle meshes."""

__version__ = "0.1.0"

from .mesh import Mesh, MeshError, MeshFormatError, MeshValidationError, mesh_stats
from .io import load_mesh, save_mesh
from .shapes import generate_icosphere
from .transforms import (EquiAffineTransform, TransformError, apply_transform, equiaffine_with_condition,
                         random_equiaffine)
from .metric import EQUI_AFFINE, EUCLIDEAN, EdgeLengths, assemble_edge_lengths
from .geodesics import DistanceMap, DistanceMatrix, MarchingSolver, distance_matrix, fmm_distance
from .tessellation import VoronoiDiagram, farthest_point_sample, voronoi
from .canonical import CanonicalForm, canonical_form, procrustes_align
from .matching import Correspondence, SymmetryNotFound, detect_symmetry, gh_match
from .harness import invariance_report
