import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from affinegeo import Mesh, apply_transform, assemble_edge_lengths, generate_icosphere
from affinegeo.metric import (
    MetricTensor, PatchParametrization, SymmetricForm2, euclidean_edge_lengths, fit_quadratic, fix_metric,
    pre_metric, raw_pre_metric, triangle_edge_lengths, triangle_metrics, unfold_patch, write_edge_csv,
    write_metric_csv,
)
from affinegeo.shapes import flat_grid, symmetric_test_shape
from affinegeo.transforms import random_equiaffine

UV6 = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [-1, 0.5], [0.5, -1.0]])


def patch_from(fn, uv=UV6):
    p = PatchParametrization(0, uv, np.arange(len(uv)), len(uv) - 3)
    X = np.c_[uv, fn(uv[:, 0], uv[:, 1])]
    return p, X


def test_paraboloid_pre_metric_identity():
    q = fit_quadratic(*patch_from(lambda u, v: (u * u + v * v) / 2))
    np.testing.assert_allclose(q.coeffs[2, 3:], [0.0, 0.5, 0.5], atol=1e-9)
    raw = raw_pre_metric(q)
    np.testing.assert_allclose(raw.matrix(), np.eye(2), atol=1e-9)
    assert abs(raw.det) == pytest.approx(1.0, abs=1e-9)
    g = pre_metric(q)
    np.testing.assert_allclose(g.matrix(), np.eye(2), atol=1e-9)
    assert g.tag == "normalized" and not g.clamped


def test_saddle_pre_metric():
    q = fit_quadratic(*patch_from(lambda u, v: (u * u - v * v) / 2))
    np.testing.assert_allclose(raw_pre_metric(q).matrix(), np.diag([1.0, -1.0]), atol=1e-9)
    np.testing.assert_allclose(pre_metric(q).matrix(), np.diag([1.0, -1.0]), atol=1e-9)


def test_general_quadric_matches_hand_determinants():
    # x = (u, v, a u^2 + b uv + c v^2) at the barycenter: x_u=(1,0,.), x_v=(0,1,.), x_ij=(0,0,h_ij)
    a, b, c = 0.7, -0.3, 1.9
    q = fit_quadratic(*patch_from(lambda u, v: a * u * u + b * u * v + c * v * v))
    np.testing.assert_allclose(raw_pre_metric(q).matrix(), [[2 * a, b], [b, 2 * c]], atol=1e-9)


def test_plane_is_clamped():
    p, X = patch_from(lambda u, v: 0 * u)
    q = fit_quadratic(p, X)
    np.testing.assert_allclose(q.coeffs[:, 3:], 0.0, atol=1e-9)
    g = pre_metric(q)
    assert g.clamped
    np.testing.assert_allclose(g.matrix(), 0.0, atol=1e-9)


def test_fit_interpolates_points():
    rng = np.random.default_rng(0)
    p = PatchParametrization(0, UV6, np.arange(6), 3)
    X = rng.normal(size=(6, 3))
    q = fit_quadratic(p, X)
    np.testing.assert_allclose(q.evaluate(UV6), X, atol=1e-9)


def test_five_points_drop_uv_term():
    uv = UV6[[0, 1, 2, 4, 5]]
    q = fit_quadratic(*patch_from(lambda u, v: u * u + 2 * v * v, uv))
    assert q.n_points == 5
    assert q.coeffs[2, 3] == 0.0
    np.testing.assert_allclose(q.coeffs[2, 4:], [1.0, 2.0], atol=1e-9)


def test_four_point_patch_falls_back():
    two = Mesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.2]]), np.array([[0, 1, 2], [1, 3, 2]]))
    p = unfold_patch(two, 0)
    assert p.n_neighbors == 1 and len(p.uv) == 4
    assert fit_quadratic(p, two.vertices[p.vertex_ids]) is None


def test_singular_system_falls_back():
    uv = np.array([[0, 0], [1, 0], [0, 1], [2, 0], [3, 0], [4, 0.0]])
    p = PatchParametrization(0, uv, np.arange(6), 3)
    assert fit_quadratic(p, np.c_[uv, np.zeros(6)]) is None


def test_unfold_flat_patch_is_affine_image():
    g = flat_grid(4)
    tri = int(np.flatnonzero((g.face_neighbors >= 0).all(axis=1))[0])
    p = unfold_patch(g, tri)
    assert p.n_neighbors == 3
    np.testing.assert_allclose(p.uv[:3], [[0, 0], [1, 0], [0, 1]], atol=1e-12)
    xy = g.vertices[p.vertex_ids, :2]
    # oracle: the planar affine map sending the central triangle to the canonical one
    M = np.linalg.solve(np.c_[xy[:3], np.ones(3)], np.array([[0, 0], [1, 0], [0, 1.0]]))
    np.testing.assert_allclose(p.uv, np.c_[xy, np.ones(len(xy))] @ M, atol=1e-9)


def test_hinge_preserves_edge_lengths(sphere3):
    m = sphere3
    edges = {tuple(e) for e in m.edges.tolist()}
    for tri in (0, 17, 640, 1279):
        p = unfold_patch(m, tri)
        checked = 0
        for i in range(len(p.vertex_ids)):
            for j in range(i + 1, len(p.vertex_ids)):
                a, b = sorted((int(p.vertex_ids[i]), int(p.vertex_ids[j])))
                if (a, b) in edges and (i < 3 or j < 3):
                    d3 = np.linalg.norm(m.vertices[a] - m.vertices[b])
                    assert np.linalg.norm(p.layout[i] - p.layout[j]) == pytest.approx(d3, rel=1e-9)
                    checked += 1
        assert checked == 9


def test_unfold_points_distinct(sphere3):
    for tri in range(0, sphere3.n_faces, 53):
        uv = unfold_patch(sphere3, tri).uv
        d = np.linalg.norm(uv[:, None] - uv[None], axis=2) + np.eye(len(uv))
        assert d.min() > 1e-9


def test_fix_indefinite():
    g = fix_metric(SymmetricForm2(1.0, 0.0, -1.0))
    np.testing.assert_allclose(g.matrix(), np.eye(2), atol=1e-12)
    assert g.fixed


def test_fix_pd_unchanged():
    s = SymmetricForm2(2.0, 0.3, 1.0)
    g = fix_metric(s)
    np.testing.assert_allclose(g.matrix(), s.matrix(), atol=1e-12)
    assert not g.fixed and not g.flipped


def test_fix_negative_definite_is_flipped_not_fixed():
    g = fix_metric(SymmetricForm2(-2.0, 0.3, -1.0))
    np.testing.assert_allclose(g.matrix(), [[2.0, -0.3], [-0.3, 1.0]], atol=1e-12)
    assert g.flipped and not g.fixed


def test_fix_zero_form():
    g = fix_metric(SymmetricForm2(0.0, 0.0, 0.0), eps_abs=1e-8)
    np.testing.assert_allclose(g.matrix(), 1e-8 * np.eye(2))
    assert g.fixed


forms = st.tuples(*[st.floats(-1e3, 1e3, allow_nan=False) for _ in range(3)])


@settings(max_examples=300, deadline=None)
@given(forms)
@example((2.225073858507e-311, 2.225073858507e-311, 2.225073858507e-311))
def test_fix_is_pd_and_idempotent(f):
    g = fix_metric(SymmetricForm2(*f))
    assert g.g11 > 0 and min(g.eigenvalues) > 0
    np.testing.assert_allclose(sorted(np.linalg.eigvalsh(g.matrix())), sorted(g.eigenvalues), rtol=1e-9, atol=1e-300)
    again = fix_metric(SymmetricForm2(g.g11, g.g12, g.g22))
    np.testing.assert_allclose(again.matrix(), g.matrix(), rtol=1e-9, atol=1e-12 * max(g.eigenvalues))
    assert not again.fixed


@settings(max_examples=200, deadline=None)
@given(forms)
def test_triangle_lengths_strict_inequality(f):
    L = sorted(triangle_edge_lengths(fix_metric(SymmetricForm2(*f))))
    assert all(x > 0 for x in L)
    assert L[2] < L[0] + L[1]


@pytest.mark.parametrize("G, expected", [
    ([[1, 0], [0, 1]], (1, 1, np.sqrt(2))),
    ([[4, 0], [0, 1]], (2, 1, np.sqrt(5))),
    ([[2, 1], [1, 2]], (np.sqrt(2),) * 3),
])
def test_canonical_edge_lengths(G, expected):
    G = np.array(G, float)
    g = MetricTensor(G[0, 0], G[0, 1], G[1, 1], tuple(np.linalg.eigvalsh(G)))
    np.testing.assert_allclose(triangle_edge_lengths(g), expected, atol=1e-12)


def test_euclidean_icosahedron_edges_equal():
    L = euclidean_edge_lengths(generate_icosphere(0)).lengths
    assert len(L) == 30
    np.testing.assert_allclose(L, L[0], rtol=1e-9)


@pytest.mark.parametrize("s", [3, 4])
def test_sphere_mostly_definite(s):
    rep = assemble_edge_lengths(generate_icosphere(s), "equi_affine").report
    assert rep["fixed"] <= 0.01 * rep["triangles"]
    assert rep["fallback"] == 0


def test_unit_sphere_matches_euclidean(sphere4):
    ea = assemble_edge_lengths(sphere4, "equi_affine").lengths
    eu = assemble_edge_lengths(sphere4, "euclidean").lengths
    np.testing.assert_allclose(ea, eu, rtol=1e-3)


def test_scaling_exponent(sphere3):
    L1 = assemble_edge_lengths(sphere3, "equi_affine").lengths
    L2 = assemble_edge_lengths(sphere3.with_vertices(2.0 * sphere3.vertices), "equi_affine").lengths
    np.testing.assert_allclose(L2 / L1, 2.0 ** 0.75, rtol=1e-9)


def test_invariance_on_bumpy_shape():
    mesh, _ = symmetric_test_shape(3)
    moved = apply_transform(mesh, random_equiaffine(2, 1.5))
    a = assemble_edge_lengths(mesh, "equi_affine").lengths
    b = assemble_edge_lengths(moved, "equi_affine").lengths
    assert np.median(np.abs(b / a - 1)) < 0.02


def test_boundary_edges_single_contributor():
    g = flat_grid(3)
    g = g.with_vertices(g.vertices + np.c_[np.zeros((g.n_vertices, 2)), (g.vertices[:, :2] ** 2).sum(1)])
    L = assemble_edge_lengths(g, "equi_affine")
    boundary = (g.edge_faces < 0).any(axis=1)
    assert set(L.counts[boundary]) == {1} and set(L.counts[~boundary]) == {2}
    assert (L.lengths > 0).all()


def test_fallback_triangles_counted():
    two = Mesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.2]]), np.array([[0, 1, 2], [1, 3, 2]]))
    L = assemble_edge_lengths(two, "equi_affine")
    assert L.report["fallback"] == 2
    np.testing.assert_allclose(L.lengths, two.edge_vectors_length())


def test_averaging_is_order_independent(sphere3):
    rng = np.random.default_rng(0)
    perm = rng.permutation(sphere3.n_faces)
    shuffled = Mesh(sphere3.vertices, sphere3.faces[perm])
    a = assemble_edge_lengths(sphere3, "equi_affine")
    b = assemble_edge_lengths(shuffled, "equi_affine")
    ia = {tuple(e): l for e, l in zip(sphere3.edges.tolist(), a.lengths)}
    for e, l in zip(shuffled.edges.tolist(), b.lengths):
        assert ia[tuple(e)] == pytest.approx(l, rel=1e-12)


def test_unknown_metric(sphere3):
    with pytest.raises(ValueError, match="unknown metric"):
        assemble_edge_lengths(sphere3, "riemann")


def test_csv_dumps(tmp_path):
    m = generate_icosphere(1)
    L = assemble_edge_lengths(m, "equi_affine")
    write_metric_csv(tmp_path / "t.csv", L)
    write_edge_csv(tmp_path / "e.csv", m, L)
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "triangle,g11,g12,g22,clamped,fixed,flipped,fallback"
    assert len(rows) == m.n_faces + 1
    assert len((tmp_path / "e.csv").read_text().splitlines()) == m.n_edges + 1
    float(rows[1].split(",")[1])


def test_relabel_permutes_lengths(sphere3):
    base = triangle_metrics(sphere3)["lengths"]
    rolled = triangle_metrics(sphere3, sphere3.faces[:, [1, 2, 0]])["lengths"]
    # corners (v1, v2, v0): edges v1v2, v1v0, v2v0
    np.testing.assert_allclose(rolled, base[:, [2, 0, 1]], rtol=1e-6)
