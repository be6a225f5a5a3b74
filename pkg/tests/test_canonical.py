import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform
from scipy.spatial.transform import Rotation

from affinegeo.canonical import CanonicalForm, canonical_form, classical_mds, procrustes_align, smacof, stress, write_form_csv
from affinegeo.geodesics import DistanceMatrix


def euclid(points):
    return squareform(pdist(points))


def test_collinear_gaps():
    D = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0.0]])
    x = np.sort(classical_mds(D, m=1).coords[:, 0])
    np.testing.assert_allclose(np.diff(x), [1, 1], atol=1e-9)


def test_realizable_3d():
    P = np.random.default_rng(0).normal(size=(20, 3))
    cf = classical_mds(euclid(P), 3)
    assert cf.stress <= 1e-9
    np.testing.assert_allclose(cf.coords.mean(axis=0), 0, atol=1e-12)


def test_two_points_padded():
    D = np.array([[0, 5.0], [5.0, 0]])
    with pytest.warns(UserWarning, match="padding"):
        cf = classical_mds(D, 3)
    assert np.linalg.norm(cf.coords[0] - cf.coords[1]) == pytest.approx(5.0)
    np.testing.assert_array_equal(cf.coords[:, 1:], 0.0)


def test_asymmetric_rejected():
    with pytest.raises(ValueError, match="symmetric"):
        classical_mds(np.array([[0, 1.0], [2.0, 0]]))


def test_smacof_fixed_point():
    P = np.random.default_rng(1).normal(size=(12, 3))
    D = euclid(P)
    init = classical_mds(D, 3)
    out = smacof(D, init)
    assert abs(out.stress - init.stress) <= 1e-12


def test_smacof_from_random_init():
    rng = np.random.default_rng(2)
    D = euclid(rng.normal(size=(10, 3)))
    init = CanonicalForm(rng.normal(size=(10, 3)), 0.0)
    s0 = stress(init.coords, D)
    out = smacof(D, init, max_iters=500, tol=1e-12)
    assert out.stress <= 1e-6 * s0
    assert out.info["iterations"] <= 500


@pytest.mark.parametrize("seed", range(10))
def test_smacof_monotone(seed):
    rng = np.random.default_rng(seed)
    D = euclid(rng.normal(size=(15, 5)))  # not realizable in 2D
    h = smacof(D, CanonicalForm(rng.normal(size=(15, 2)), 0.0)).info["history"]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(h, h[1:]))


def test_mds_permutation_equivariance():
    rng = np.random.default_rng(3)
    D = euclid(rng.normal(size=(25, 3)))
    perm = rng.permutation(25)
    a = classical_mds(D, 3).coords
    b = classical_mds(D[np.ix_(perm, perm)], 3).coords
    _, _, rmsd = procrustes_align(b, a[perm])
    assert rmsd <= 1e-9


def test_canonical_form_normalizes():
    P = np.random.default_rng(4).normal(size=(30, 3))
    dm = DistanceMatrix(np.arange(30), 7.0 * euclid(P), "euclidean")
    cf = canonical_form(dm)
    assert pdist(cf.coords).max() == pytest.approx(1.0, rel=1e-6)
    np.testing.assert_array_equal(cf.samples, np.arange(30))
    assert cf.metric == "euclidean"


def test_procrustes_identity():
    P = np.random.default_rng(5).normal(size=(10, 3))
    R, t, rmsd = procrustes_align(P, P)
    np.testing.assert_allclose(R, np.eye(3), atol=1e-12)
    assert rmsd <= 1e-12


def test_procrustes_recovers_rotation():
    P = np.random.default_rng(6).normal(size=(10, 3))
    R0 = Rotation.from_euler("xyz", [0.3, -1.1, 2.0]).as_matrix()
    Q = P @ R0.T + [1.0, 2.0, -3.0]
    R, t, rmsd = procrustes_align(P, Q)
    np.testing.assert_allclose(R, R0, atol=1e-6)
    np.testing.assert_allclose(t, [1.0, 2.0, -3.0], atol=1e-9)
    assert rmsd <= 1e-9


def test_procrustes_reflection():
    P = np.random.default_rng(7).normal(size=(10, 3))
    M = P * [-1, 1, 1]
    assert procrustes_align(P, M, allow_reflection=False)[2] > 1e-3
    assert procrustes_align(P, M, allow_reflection=True)[2] <= 1e-9


def test_form_csv(tmp_path):
    cf = classical_mds(euclid(np.eye(4)), 3)
    write_form_csv(tmp_path / "f.csv", cf)
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "point,z0,z1,z2" and len(rows) == 5
