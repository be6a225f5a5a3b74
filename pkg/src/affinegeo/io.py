"""OFF / ASCII PLY / OBJ reading and OFF / ASCII PLY writing."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh, MeshFormatError

FORMATS = ("off", "ply", "obj")


def _format_from_path(path: Path) -> str:
    ext = path.suffix.lower().lstrip(".")
    if ext not in FORMATS:
        raise MeshFormatError(f"cannot infer mesh format from extension '{path.suffix}'")
    return ext


def _norm_format(fmt: str | None, path: Path) -> str:
    if fmt is None:
        return _format_from_path(path)
    fmt = fmt.lower()
    if fmt in ("ply-ascii", "ply_ascii"):
        fmt = "ply"
    if fmt not in FORMATS:
        raise MeshFormatError(f"unsupported mesh format '{fmt}'")
    return fmt


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_off(text: str) -> Mesh:
    lines = _content_lines(text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MeshFormatError("empty OFF file") from None
    tokens = header.split()
    if tokens[0] != "OFF":
        raise MeshFormatError(f"line {lineno}: expected 'OFF' header, got '{tokens[0]}'")
    counts = tokens[1:]
    if not counts:
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshFormatError("OFF file ends before the counts line") from None
        counts = line.split()
    try:
        nv, nf = int(counts[0]), int(counts[1])
    except (ValueError, IndexError):
        raise MeshFormatError(f"line {lineno}: malformed counts line") from None

    verts = np.empty((nv, 3))
    for i in range(nv):
        try:
            lineno, line = next(lines)
            verts[i] = [float(t) for t in line.split()[:3]]
        except StopIteration:
            raise MeshFormatError(f"OFF file ends after {i} of {nv} vertices") from None
        except ValueError:
            raise MeshFormatError(f"line {lineno}: malformed vertex {i}") from None
    faces = []
    for i in range(nf):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshFormatError(f"OFF file ends after {i} of {nf} faces") from None
        tok = line.split()
        try:
            k = int(tok[0])
            idx = [int(t) for t in tok[1:1 + k]]
        except ValueError:
            raise MeshFormatError(f"line {lineno}: malformed face {i}") from None
        if k != 3 or len(idx) != 3:
            raise MeshFormatError(f"line {lineno}: face {i} is not a triangle")
        faces.append(idx)
    return Mesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


def parse_ply(text: str) -> Mesh:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshFormatError("missing 'ply' magic line")
    elements: list[list] = []  # [name, count, [properties]]
    i = 1
    while True:
        if i >= len(lines):
            raise MeshFormatError("PLY header has no 'end_header'")
        tok = lines[i].split()
        i += 1
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise MeshFormatError(f"only ASCII PLY is supported, got '{tok[1]}'")
        elif tok[0] == "element":
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise MeshFormatError(f"line {i}: property before any element")
            elements[-1][2].append(tok[1:])
        elif tok[0] == "end_header":
            break
        else:
            raise MeshFormatError(f"line {i}: unexpected header keyword '{tok[0]}'")

    body = [ln for ln in lines[i:] if ln.strip()]
    pos = 0
    verts = faces = None
    for name, count, props in elements:
        rows = body[pos:pos + count]
        if len(rows) < count:
            raise MeshFormatError(f"PLY body ends inside element '{name}'")
        pos += count
        if name == "vertex":
            names = [p[-1] for p in props]
            try:
                cols = [names.index(c) for c in ("x", "y", "z")]
            except ValueError:
                raise MeshFormatError("PLY vertex element lacks x/y/z") from None
            try:
                data = np.array([[float(t) for t in r.split()] for r in rows]).reshape(count, -1)
            except ValueError:
                raise MeshFormatError("malformed PLY vertex row") from None
            verts = data[:, cols]
        elif name == "face":
            faces = []
            for j, r in enumerate(rows):
                tok = r.split()
                try:
                    k = int(tok[0])
                    idx = [int(t) for t in tok[1:1 + k]]
                except ValueError:
                    raise MeshFormatError(f"malformed PLY face {j}") from None
                if k != 3 or len(idx) != 3:
                    raise MeshFormatError(f"PLY face {j} is not a triangle")
                faces.append(idx)
    if verts is None:
        raise MeshFormatError("PLY file has no vertex element")
    return Mesh(verts, np.array(faces or [], dtype=np.int64).reshape(-1, 3))


def parse_obj(text: str) -> Mesh:
    verts, faces = [], []
    for lineno, line in _content_lines(text):
        tok = line.split()
        if tok[0] == "v":
            try:
                verts.append([float(t) for t in tok[1:4]])
            except ValueError:
                raise MeshFormatError(f"line {lineno}: malformed vertex") from None
        elif tok[0] == "f":
            if len(tok) != 4:
                raise MeshFormatError(f"line {lineno}: face is not a triangle")
            idx = []
            for t in tok[1:]:
                try:
                    k = int(t.split("/")[0])
                except ValueError:
                    raise MeshFormatError(f"line {lineno}: malformed face index '{t}'") from None
                idx.append(k - 1 if k > 0 else len(verts) + k)
            faces.append(idx)
    return Mesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


_PARSERS = {"off": parse_off, "ply": parse_ply, "obj": parse_obj}


def load_mesh(path, format: str | None = None) -> Mesh:
    """Read a triangle mesh; the format defaults to the file extension."""
    path = Path(path)
    fmt = _norm_format(format, path)
    return _PARSERS[fmt](path.read_text())


def format_off(mesh: Mesh) -> str:
    out = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} {mesh.n_edges}"]
    out += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    return "\n".join(out) + "\n"


def format_ply(mesh: Mesh, colors: np.ndarray | None = None) -> str:
    out = ["ply", "format ascii 1.0", f"element vertex {mesh.n_vertices}",
           "property double x", "property double y", "property double z"]
    if colors is not None:
        colors = np.asarray(colors)
        if colors.shape != (mesh.n_vertices, 3):
            raise ValueError(f"colors must have shape ({mesh.n_vertices}, 3)")
        colors = np.clip(np.round(colors), 0, 255).astype(int)
        out += ["property uchar red", "property uchar green", "property uchar blue"]
    out += [f"element face {mesh.n_faces}", "property list uchar int vertex_indices", "end_header"]
    for i, v in enumerate(mesh.vertices):
        row = " ".join(repr(float(c)) for c in v)
        if colors is not None:
            row += " " + " ".join(str(c) for c in colors[i])
        out.append(row)
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    return "\n".join(out) + "\n"


def format_ply_points(points: np.ndarray) -> str:
    """Point-cloud PLY (no faces); used for canonical-form export."""
    points = np.asarray(points, dtype=float)
    if points.shape[1] < 3:
        points = np.hstack([points, np.zeros((len(points), 3 - points.shape[1]))])
    out = ["ply", "format ascii 1.0", f"element vertex {len(points)}",
           "property double x", "property double y", "property double z", "end_header"]
    out += [" ".join(repr(float(c)) for c in p[:3]) for p in points]
    return "\n".join(out) + "\n"


def save_mesh(mesh: Mesh, path, format: str | None = None, colors: np.ndarray | None = None) -> None:
    path = Path(path)
    fmt = _norm_format(format, path)
    if fmt == "off":
        if colors is not None:
            raise ValueError("vertex colors are only written to PLY")
        text = format_off(mesh)
    elif fmt == "ply":
        text = format_ply(mesh, colors)
    else:
        raise MeshFormatError("OBJ is an input-only format")
    path.write_text(text)
