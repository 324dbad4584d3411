"""Mesh and state file formats.

* ASCII Gmsh MSH 2.2: ``$Nodes`` and ``$Elements`` sections, triangles
  (type 2) and tetrahedra (type 4).  Other element types are skipped.
* JSON meshes ``{"points": [[x, y(, z)], ...], "cells": [[i, j, k(, l)], ...]}``.
* JSON states ``{"psi_re": [...], "psi_im": [...]}`` and a ``|psi|^2`` CSV.
"""
import json
import logging
import warnings

import numpy as np

from ..errors import ParseError
from .mesh import Mesh

__all__ = [
    "MeshFormatWarning",
    "read_msh",
    "load_mesh_msh",
    "write_msh",
    "load_mesh_json",
    "write_mesh_json",
    "load_mesh",
    "write_state_json",
    "read_state_json",
    "write_density_csv",
]

log = logging.getLogger(__name__)

#: number of nodes per element for the MSH element types we know about
_NODES_PER_TYPE = {1: 2, 2: 3, 3: 4, 4: 4, 5: 8, 6: 6, 7: 5, 8: 3, 9: 6, 10: 9, 11: 10, 15: 1}
_SUPPORTED = {2: 3, 4: 4}


class MeshFormatWarning(UserWarning):
    """Unsupported content was skipped while reading a mesh file."""


def read_msh(path):
    """Parse an ASCII MSH 2.x file.

    Returns ``(points, cells, skipped)`` where ``skipped`` counts the elements
    of unsupported types, and lower-dimensional simplices are dropped when
    tetrahedra are present.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines):
            pos += 1
            text = lines[pos - 1].strip()
            if text:
                return text
        raise ParseError("unexpected end of file", pos)

    nodes = None
    elements = None
    seen_format = False
    while pos < len(lines):
        text = lines[pos].strip()
        pos += 1
        if not text:
            continue
        if text == "$MeshFormat":
            fields = next_line().split()
            try:
                version = float(fields[0])
                filetype = int(fields[1])
            except (IndexError, ValueError):
                raise ParseError("malformed $MeshFormat header", pos) from None
            if not 2.0 <= version < 3.0:
                raise ParseError(f"unsupported MSH version {fields[0]}", pos)
            if filetype != 0:
                raise ParseError("binary MSH files are not supported", pos)
            if next_line() != "$EndMeshFormat":
                raise ParseError("expected $EndMeshFormat", pos)
            seen_format = True
        elif text == "$Nodes":
            nodes = _read_nodes(next_line, lambda: pos)
        elif text == "$Elements":
            elements = _read_elements(next_line, lambda: pos)
        elif text.startswith("$") and not text.startswith("$End"):
            end = "$End" + text[1:]
            while next_line() != end:
                pass
        else:
            raise ParseError(f"unexpected content {text[:40]!r}", pos)
    if not seen_format:
        raise ParseError("missing $MeshFormat section", 1)
    if nodes is None:
        raise ParseError("missing $Nodes section", len(lines))
    if elements is None:
        raise ParseError("missing $Elements section", len(lines))

    tags, coords = nodes
    index = {t: k for k, t in enumerate(tags)}
    skipped = 0
    by_type = {2: [], 4: []}
    for lineno, etype, node_tags in elements:
        if etype not in _SUPPORTED:
            skipped += 1
            continue
        try:
            by_type[etype].append([index[t] for t in node_tags])
        except KeyError as exc:
            raise ParseError(f"element references unknown node {exc.args[0]}", lineno) from None
    if by_type[4]:
        cells = np.array(by_type[4], dtype=np.int64)
        if by_type[2]:
            log.info("ignoring %d boundary triangles of a tetrahedral mesh", len(by_type[2]))
    elif by_type[2]:
        cells = np.array(by_type[2], dtype=np.int64)
    else:
        raise ParseError("no triangles or tetrahedra found", len(lines))
    points = coords
    if cells.shape[1] == 3 and np.all(points[:, 2] == 0):
        points = points[:, :2]
    if skipped:
        warnings.warn(f"skipped {skipped} elements of unsupported type", MeshFormatWarning,
                      stacklevel=2)
    return points, cells, skipped


def _read_nodes(next_line, lineno):
    try:
        count = int(next_line())
    except ValueError:
        raise ParseError("malformed node count", lineno()) from None
    tags = []
    coords = np.empty((count, 3))
    for k in range(count):
        fields = next_line().split()
        try:
            tags.append(int(fields[0]))
            coords[k] = [float(v) for v in fields[1:4]]
        except (ValueError, IndexError):
            raise ParseError("malformed node line", lineno()) from None
        if len(fields) != 4:
            raise ParseError("node line must have 4 fields", lineno())
    if next_line() != "$EndNodes":
        raise ParseError("expected $EndNodes", lineno())
    return tags, coords


def _read_elements(next_line, lineno):
    try:
        count = int(next_line())
    except ValueError:
        raise ParseError("malformed element count", lineno()) from None
    out = []
    for _ in range(count):
        fields = next_line().split()
        try:
            values = [int(v) for v in fields]
        except ValueError:
            raise ParseError("malformed element line", lineno()) from None
        if len(values) < 3:
            raise ParseError("element line too short", lineno())
        etype, ntags = values[1], values[2]
        node_tags = values[3 + ntags:]
        expected = _NODES_PER_TYPE.get(etype)
        if expected is not None and len(node_tags) != expected:
            raise ParseError(f"element of type {etype} needs {expected} nodes, "
                             f"got {len(node_tags)}", lineno())
        out.append((lineno(), etype, node_tags))
    if next_line() != "$EndElements":
        raise ParseError("expected $EndElements", lineno())
    return out


def load_mesh_msh(path):
    points, cells, _ = read_msh(path)
    return Mesh(points, cells)


def write_msh(mesh, path):
    """Write ``mesh`` as ASCII MSH 2.2 with round-trip exact coordinates."""
    etype = 2 if mesh.cells.shape[1] == 3 else 4
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write(f"$Nodes\n{mesh.n_nodes}\n")
        for k, p in enumerate(mesh.points):
            xyz = list(p) + [0.0] * (3 - len(p))
            fh.write(f"{k + 1} {' '.join(repr(float(v)) for v in xyz)}\n")
        fh.write("$EndNodes\n")
        fh.write(f"$Elements\n{len(mesh.cells)}\n")
        for k, c in enumerate(mesh.cells):
            fh.write(f"{k + 1} {etype} 2 0 1 {' '.join(str(int(v) + 1) for v in c)}\n")
        fh.write("$EndElements\n")


def load_mesh_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    try:
        points = np.array(data["points"], dtype=float)
        cells = np.array(data["cells"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"JSON mesh needs numeric 'points' and 'cells' ({exc})") from None
    return Mesh(points, cells)


def write_mesh_json(mesh, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"points": mesh.points.tolist(), "cells": mesh.cells.tolist()}, fh)


def load_mesh(path):
    """Dispatch on the file extension (``.msh`` or ``.json``)."""
    path = str(path)
    if path.endswith(".msh"):
        return load_mesh_msh(path)
    if path.endswith(".json"):
        return load_mesh_json(path)
    raise ParseError(f"unknown mesh file type: {path}")


def write_state_json(psi, path):
    psi = np.asarray(psi)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"psi_re": psi.real.tolist(), "psi_im": psi.imag.tolist()}, fh)


def read_state_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return np.array(data["psi_re"]) + 1j * np.array(data["psi_im"])


def write_density_csv(mesh, psi, path):
    psi = np.asarray(psi)
    with open(path, "w", encoding="utf-8") as fh:
        cols = ["x", "y", "z"][: mesh.dim]
        fh.write(",".join(["node"] + cols + ["density"]) + "\n")
        for k, (p, v) in enumerate(zip(mesh.points, np.abs(psi) ** 2)):
            fh.write(",".join([str(k)] + [repr(float(c)) for c in p] + [repr(float(v))]) + "\n")
