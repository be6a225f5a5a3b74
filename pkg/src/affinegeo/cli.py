"""Command-line front end.

Every subcommand writes its data files plus ``<command>.manifest.json`` into
``--out``. Manifests carry no wall-clock data so identical inputs give
byte-identical outputs; timings go to ``<command>.timings.json``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import metric as metric_mod
from .canonical import canonical_form, write_form_csv
from .geodesics import (MarchingSolver, colormap, distance_matrix, write_distance_csv)
from .harness import invariance_report
from .io import format_ply, format_ply_points, load_mesh, save_mesh
from .matching import SymmetryNotFound, detect_symmetry, gh_match, write_correspondence_csv
from .mesh import MeshError, mesh_stats
from .metric import METRICS, assemble_edge_lengths, write_edge_csv, write_metric_csv
from .tessellation import farthest_point_sample, label_colors, voronoi, write_labels_csv
from .transforms import TransformError, apply_transform, random_equiaffine

SCHEMA = 1

# environment overrides for default tolerances
ENV_TOLERANCES = {
    "AFFINEGEO_DET_CLAMP": (metric_mod, "DET_CLAMP"),
    "AFFINEGEO_EIG_FLOOR": (metric_mod, "EIG_FLOOR"),
    "AFFINEGEO_ABS_FLOOR": (metric_mod, "ABS_FLOOR"),
}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    command: str
    out: str = "."
    mesh: str | None = None
    mesh_y: str | None = None
    metric: str = metric_mod.EQUI_AFFINE
    k: int = 100
    seed: int = 0
    strength: float = 1.0
    det: float = 1.0
    bins: int = 50
    source: list = field(default_factory=lambda: [0])
    dim: int = 3
    restarts: int = 32
    min_displacement: float = 0.2
    threads: int = 1
    smacof_tol: float = 1e-6
    smacof_iters: int = 500
    tolerances: dict = field(default_factory=dict)

    def validate(self):
        if self.command == "transform" and abs(self.det - 1.0) > 1e-9:
            raise ConfigError("det", f"transform is not equi-affine: determinant = {self.det:g} (must be 1)")
        needs_mesh = self.command in ("transform", "metric", "distance", "voronoi", "canonical",
                                      "match", "symmetry", "invariance")
        if needs_mesh:
            if not self.mesh:
                raise ConfigError("mesh", "an input mesh is required")
            if not Path(self.mesh).is_file():
                raise ConfigError("mesh", f"file not found: {self.mesh}")
        if self.command == "match":
            if not self.mesh_y or not Path(self.mesh_y).is_file():
                raise ConfigError("mesh_y", f"file not found: {self.mesh_y}")
        if self.metric not in METRICS:
            raise ConfigError("metric", f"must be one of {METRICS}")
        if self.k < 1:
            raise ConfigError("k", "must be >= 1")
        if self.command in ("match", "symmetry") and self.k > 100:
            raise ConfigError("k", "matching is limited to k <= 100")
        if self.bins < 2:
            raise ConfigError("bins", "must be >= 2")
        if self.strength < 0:
            raise ConfigError("strength", "must be non-negative")
        if self.dim < 1:
            raise ConfigError("dim", "must be >= 1")
        if self.restarts < 1:
            raise ConfigError("restarts", "must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        if not 0 <= self.min_displacement < 1:
            raise ConfigError("min_displacement", "must be in [0, 1)")
        if self.smacof_tol <= 0:
            raise ConfigError("smacof_tol", "must be positive")
        if any(s < 0 for s in self.source):
            raise ConfigError("source", "vertex ids must be non-negative")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


class Run:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.results: dict = {}
        self.timings: dict = {}

    def path(self, suffix: str) -> Path:
        p = self.out / f"{self.cfg.command}{suffix}"
        self.outputs.append(p.name)
        return p

    def timed(self, name, fn, *args, **kw):
        t0 = time.perf_counter()
        r = fn(*args, **kw)
        self.timings[name] = time.perf_counter() - t0
        return r

    def finish(self):
        inputs = {}
        for key in ("mesh", "mesh_y"):
            p = getattr(self.cfg, key)
            if p:
                inputs[key] = {"path": str(p), "sha256": _sha256(p)}
        manifest = {
            "schema": SCHEMA,
            "tool": f"affinegeo {__version__}",
            "command": self.cfg.command,
            "inputs": inputs,
            "config": asdict(self.cfg),
            "outputs": sorted(self.outputs),
            "results": self.results,
        }
        _dump(self.out / f"{self.cfg.command}.manifest.json", manifest)
        _dump(self.out / f"{self.cfg.command}.timings.json", {"schema": SCHEMA, "seconds": self.timings})


def _lengths(run: Run, mesh, metric):
    L = run.timed(f"metric_{metric}", assemble_edge_lengths, mesh, metric)
    run.results.setdefault("length_report", {})[metric] = L.report
    return L


def cmd_transform(run: Run):
    cfg = run.cfg
    mesh = load_mesh(cfg.mesh)
    t = random_equiaffine(cfg.seed, cfg.strength)
    moved = apply_transform(mesh, t)
    save_mesh(moved, run.path(".off"))
    run.results.update({"A": t.A, "b": t.b, "cond": t.condition_number,
                        "stats_before": mesh_stats(mesh), "stats_after": mesh_stats(moved)})


def cmd_metric(run: Run):
    mesh = load_mesh(run.cfg.mesh)
    L = _lengths(run, mesh, run.cfg.metric)
    write_edge_csv(run.path(".edges.csv"), mesh, L)
    if L.triangle_forms is not None:
        write_metric_csv(run.path(".triangles.csv"), L)


def cmd_distance(run: Run):
    cfg = run.cfg
    mesh = load_mesh(cfg.mesh)
    if max(cfg.source) >= mesh.n_vertices:
        raise ConfigError("source", f"vertex id out of range (mesh has {mesh.n_vertices} vertices)")
    L = _lengths(run, mesh, cfg.metric)
    solver = MarchingSolver(mesh, L)
    dmap = run.timed("fmm", solver.distance_map, cfg.source)
    write_distance_csv(run.path(".csv"), dmap)
    run.path(".ply").write_text(format_ply(mesh, colormap(dmap.distances)))
    d = dmap.distances[np.isfinite(dmap.distances)]
    run.results.update({"max_distance": float(d.max()), "report": dmap.report})


def cmd_voronoi(run: Run):
    cfg = run.cfg
    mesh = load_mesh(cfg.mesh)
    L = _lengths(run, mesh, cfg.metric)
    solver = MarchingSolver(mesh, L)
    k = min(cfg.k, mesh.n_vertices)
    seeds = run.timed("fps", farthest_point_sample, mesh, L, k, cfg.source[0], solver)
    vd = run.timed("voronoi", voronoi, mesh, L, seeds, solver)
    write_labels_csv(run.path(".csv"), vd)
    run.path(".ply").write_text(format_ply(mesh, label_colors(vd.labels, k)))
    run.results.update({"seeds": seeds, "cell_sizes": vd.cell_sizes()})


def cmd_canonical(run: Run):
    cfg = run.cfg
    mesh = load_mesh(cfg.mesh)
    L = _lengths(run, mesh, cfg.metric)
    solver = MarchingSolver(mesh, L)
    samples = run.timed("fps", farthest_point_sample, mesh, L, min(cfg.k, mesh.n_vertices), cfg.source[0], solver)
    dm = run.timed("distances", distance_matrix, mesh, L, samples, cfg.threads, solver)
    cf = run.timed("mds", canonical_form, dm, cfg.dim, True, cfg.smacof_iters, cfg.smacof_tol)
    write_form_csv(run.path(".csv"), cf)
    run.path(".ply").write_text(format_ply_points(cf.coords))
    run.results.update({"stress": cf.stress, "iterations": cf.info.get("iterations"),
                        "max_asymmetry": dm.max_asymmetry})


def cmd_match(run: Run):
    cfg = run.cfg
    mx, my = load_mesh(cfg.mesh), load_mesh(cfg.mesh_y)
    Lx, Ly = _lengths(run, mx, cfg.metric), assemble_edge_lengths(my, cfg.metric)
    sx, sy = MarchingSolver(mx, Lx), MarchingSolver(my, Ly)
    k = min(cfg.k, mx.n_vertices, my.n_vertices)
    px = farthest_point_sample(mx, Lx, k, cfg.source[0], sx)
    py = farthest_point_sample(my, Ly, k, cfg.source[0], sy)
    dX = distance_matrix(mx, Lx, px, cfg.threads, sx).normalized()
    dY = distance_matrix(my, Ly, py, cfg.threads, sy).normalized()
    c = run.timed("match", gh_match, dX, dY, cfg.restarts, cfg.seed, cfg.threads)
    write_correspondence_csv(run.path(".csv"), c, px, py)
    # matched cells share a colour on both shapes
    vx = voronoi(mx, Lx, px, sx)
    vy = voronoi(my, Ly, py, sy)
    col = np.zeros(k, np.int64)
    col[c.pairs[:, 1]] = c.pairs[:, 0]
    run.path(".x.ply").write_text(format_ply(mx, label_colors(vx.labels, k)))
    ylab = np.where(vy.labels >= 0, col[np.maximum(vy.labels, 0)], -1)
    run.path(".y.ply").write_text(format_ply(my, label_colors(ylab, k)))
    run.results.update({"distortion": c.distortion, "gh_estimate": c.gh_estimate,
                        "x_covered": c.x_covered, "y_covered": c.y_covered})


def cmd_symmetry(run: Run):
    cfg = run.cfg
    mesh = load_mesh(cfg.mesh)
    L = _lengths(run, mesh, cfg.metric)
    try:
        c = run.timed("symmetry", detect_symmetry, mesh, L, min(cfg.k, mesh.n_vertices),
                      cfg.min_displacement, cfg.restarts, cfg.seed, None, cfg.threads)
    except SymmetryNotFound as e:
        run.results.update({"found": False, "message": str(e)})
        print("no symmetry found", file=sys.stderr)
        return
    write_correspondence_csv(run.path(".csv"), c, c.info["samples"], c.info["targets"])
    run.results.update({"found": True, "distortion": c.distortion,
                        "mean_displacement": c.info["mean_displacement"]})


def cmd_invariance(run: Run):
    cfg = run.cfg
    mesh = load_mesh(cfg.mesh)
    t = random_equiaffine(cfg.seed, cfg.strength)
    rep = run.timed("invariance", invariance_report, mesh, t, cfg.k, cfg.bins, threads=cfg.threads)
    _dump(run.path(".report.json"), rep)
    run.results.update({m: {s: rep["metrics"][m][s] for s in
                            ("histogram_l1", "voronoi_agreement", "canonical_rmsd", "identity_distortion")}
                        for m in rep["metrics"]})


COMMANDS = {
    "transform": (cmd_transform, "apply a random equi-affine transform to a mesh"),
    "metric": (cmd_metric, "per-edge lengths and per-triangle tensors"),
    "distance": (cmd_distance, "fast-marching distance map from source vertices"),
    "voronoi": (cmd_voronoi, "geodesic Voronoi cells of k farthest-point seeds"),
    "canonical": (cmd_canonical, "MDS canonical form of k farthest-point samples"),
    "match": (cmd_match, "minimum-distortion correspondence between two meshes"),
    "symmetry": (cmd_symmetry, "intrinsic symmetry detection"),
    "invariance": (cmd_invariance, "before/after invariance report for both metrics"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="affinegeo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"affinegeo {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--mesh", required=True)
        if name == "match":
            s.add_argument("--mesh-y", required=True, dest="mesh_y")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--metric", default=metric_mod.EQUI_AFFINE, help=f"one of {METRICS}")
        s.add_argument("--k", type=int, default=50 if name in ("match", "symmetry") else 100)
        s.add_argument("--seed", type=int, default=0, help="RNG / transform seed")
        s.add_argument("--threads", type=int, default=1)
        if name in ("transform", "invariance"):
            s.add_argument("--strength", type=float, default=1.0)
        if name == "transform":
            s.add_argument("--det", type=float, default=1.0,
                           help="requested determinant of the linear part; only 1 is accepted")
        if name == "invariance":
            s.add_argument("--bins", type=int, default=50)
        if name in ("distance", "voronoi", "canonical", "match"):
            s.add_argument("--source", type=int, nargs="+", default=[0],
                           help="source vertex ids (first one seeds sampling)")
        if name == "canonical":
            s.add_argument("--dim", type=int, default=3)
            s.add_argument("--smacof-tol", type=float, default=1e-6, dest="smacof_tol")
            s.add_argument("--smacof-iters", type=int, default=500, dest="smacof_iters")
        if name in ("match", "symmetry"):
            s.add_argument("--restarts", type=int, default=32)
        if name == "symmetry":
            s.add_argument("--min-displacement", type=float, default=0.2, dest="min_displacement")
    return p


def _apply_env_tolerances() -> dict:
    applied = {}
    for var, (mod, attr) in ENV_TOLERANCES.items():
        val = os.environ.get(var)
        if val is None:
            continue
        try:
            x = float(val)
        except ValueError:
            raise ConfigError(var, f"not a number: {val!r}") from None
        if x < 0:
            raise ConfigError(var, "must be non-negative")
        setattr(mod, attr, x)
        applied[attr] = x
    return applied


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    cfg = RunConfig(**{k: v for k, v in vars(args).items() if v is not None})
    saved = {attr: getattr(mod, attr) for mod, attr in ENV_TOLERANCES.values()}
    try:
        cfg.tolerances = _apply_env_tolerances()
        cfg.validate()
        r = Run(cfg)
        COMMANDS[cfg.command][0](r)
        r.finish()
    except (ConfigError, MeshError, TransformError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    finally:
        for mod, attr in ENV_TOLERANCES.values():
            setattr(mod, attr, saved[attr])
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
