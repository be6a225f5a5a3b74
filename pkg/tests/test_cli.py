import json

import jsonschema
import pytest

from affinegeo import generate_icosphere, save_mesh
from affinegeo.cli import run
from affinegeo.harness import REPORT_SCHEMA
from affinegeo.shapes import symmetric_test_shape


@pytest.fixture(scope="module")
def meshes(tmp_path_factory):
    d = tmp_path_factory.mktemp("meshes")
    save_mesh(generate_icosphere(4), d / "s4.off")
    save_mesh(generate_icosphere(2), d / "s2.off")
    save_mesh(symmetric_test_shape(2)[0], d / "mirror.ply")
    return d


def manifest(out, cmd):
    return json.loads((out / f"{cmd}.manifest.json").read_text())


def test_distance_smoke(meshes, tmp_path):
    assert run(["distance", "--mesh", str(meshes / "s4.off"), "--metric", "euclidean", "--source", "0",
                "--out", str(tmp_path)]) == 0
    assert (tmp_path / "distance.csv").read_text().startswith("vertex,distance\n0,0.0\n")
    assert (tmp_path / "distance.ply").read_text().startswith("ply\n")
    m = manifest(tmp_path, "distance")
    assert m["schema"] == 1 and len(m["inputs"]["mesh"]["sha256"]) == 64
    assert m["config"]["metric"] == "euclidean" and m["config"]["threads"] == 1
    assert sorted(m["outputs"]) == ["distance.csv", "distance.ply"]
    assert "seconds" in json.loads((tmp_path / "distance.timings.json").read_text())


def test_invariance_report(meshes, tmp_path):
    assert run(["invariance", "--mesh", str(meshes / "s4.off"), "--strength", "2", "--seed", "7", "--k", "100",
                "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "invariance.report.json").read_text())
    jsonschema.validate(rep, REPORT_SCHEMA)
    for metric in ("equi_affine", "euclidean"):
        assert set(rep["metrics"][metric]) >= {"histogram_l1", "voronoi_agreement", "canonical_rmsd",
                                               "identity_distortion"}


def test_det_rejected(meshes, tmp_path, capsys):
    assert run(["transform", "--mesh", str(meshes / "s2.off"), "--det", "2", "--out", str(tmp_path)]) == 1
    assert "determinant" in capsys.readouterr().err


def test_usage_errors_exit_2(capsys):
    assert run([]) == 2
    assert run(["bogus"]) == 2
    assert run(["distance", "--k", "x", "--mesh", "a.off"]) == 2


@pytest.mark.parametrize("args, field", [
    (["distance", "--mesh", "missing.off"], "mesh"),
    (["voronoi", "--k", "0"], "k"),
    (["match", "--k", "500", "--mesh-y", "{s2}"], "k"),
    (["distance", "--source", "99999"], "source"),
    (["symmetry", "--min-displacement", "1.5"], "min_displacement"),
    (["distance", "--metric", "manhattan"], "metric"),
])
def test_validation_errors_name_field(meshes, tmp_path, capsys, args, field):
    args = [a.replace("{s2}", str(meshes / "s2.off")) for a in args]
    if "--mesh" not in args:
        args += ["--mesh", str(meshes / "s2.off")]
    assert run(args + ["--out", str(tmp_path)]) == 1
    assert f"error: {field}" in capsys.readouterr().err


def test_env_tolerance_override(meshes, tmp_path, monkeypatch):
    from affinegeo import metric
    monkeypatch.setenv("AFFINEGEO_EIG_FLOOR", "1e-3")
    assert run(["metric", "--mesh", str(meshes / "s2.off"), "--out", str(tmp_path)]) == 0
    assert manifest(tmp_path, "metric")["config"]["tolerances"] == {"EIG_FLOOR": 1e-3}
    assert metric.EIG_FLOOR == 1e-6
    monkeypatch.setenv("AFFINEGEO_EIG_FLOOR", "abc")
    assert run(["metric", "--mesh", str(meshes / "s2.off"), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("cmd, extra", [
    ("transform", ["--strength", "1.5", "--seed", "3"]),
    ("metric", []),
    ("voronoi", ["--k", "12"]),
    ("canonical", ["--k", "40"]),
    ("symmetry", ["--k", "30"]),
    ("match", ["--k", "30", "--mesh-y", "{s2}"]),
])
def test_outputs_deterministic(meshes, tmp_path, cmd, extra):
    mesh = meshes / ("mirror.ply" if cmd == "symmetry" else "s2.off")
    args = [cmd, "--mesh", str(mesh), "--out", str(tmp_path)] + [e.replace("{s2}", str(meshes / "s2.off")) for e in extra]
    assert run(args) == 0
    names = manifest(tmp_path, cmd)["outputs"] + [f"{cmd}.manifest.json"]
    first = {n: (tmp_path / n).read_bytes() for n in names}
    assert run(args + ["--threads", "1"]) == 0
    assert {n: (tmp_path / n).read_bytes() for n in names} == first


def test_symmetry_cli_finds_mirror(meshes, tmp_path):
    assert run(["symmetry", "--mesh", str(meshes / "mirror.ply"), "--k", "30", "--out", str(tmp_path)]) == 0
    res = manifest(tmp_path, "symmetry")["results"]
    assert res["found"] and res["distortion"] <= 0.05
