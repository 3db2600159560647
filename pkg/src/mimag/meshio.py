"""Mesh serialization: a self-describing text format and legacy VTK export.

The text format lists nodes, faces (with boundary tags and periodic
partners) and cell-node loops in labelled sections, enough to rebuild the
mesh exactly.  VTK output writes the cells as polygons with optional cell
data, readable by ParaView and friends.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .mesh import (DIRICHLET, INTERIOR, NEUMANN, PERIODIC, Mesh,
                   build_mesh_from_cells, pair_periodic_faces, with_boundary)

_TAG_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet",
              NEUMANN: "neumann", PERIODIC: "periodic"}
_TAG_CODES = {v: k for k, v in _TAG_NAMES.items()}


def write_mesh_text(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write("# mimag mesh, text format v1\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for p in mesh.nodes:
            fh.write(f"{p[0]!r} {p[1]!r}\n")
        fh.write(f"cells {mesh.n_cells}\n")
        for c in range(mesh.n_cells):
            loop = mesh.cell_node_ids(c)
            fh.write(" ".join(str(int(v)) for v in loop) + "\n")
        fh.write(f"faces {mesh.n_faces}\n")
        fh.write("# node_a node_b tag periodic_partner\n")
        for f in range(mesh.n_faces):
            a, b = mesh.face_nodes[f]
            tag = _TAG_NAMES[int(mesh.boundary_kind[f])]
            fh.write(f"{a} {b} {tag} {int(mesh.periodic_partner[f])}\n")


def read_mesh_text(path) -> Mesh:
    lines = [ln.strip() for ln in open(path)
             if ln.strip() and not ln.startswith("#")]
    pos = 0

    def expect(word):
        nonlocal pos
        kw, count = lines[pos].split()
        if kw != word:
            raise ValueError(f"expected section {word!r}, found {kw!r}")
        pos += 1
        return int(count)

    n_nodes = expect("nodes")
    nodes = np.array([[float(v) for v in lines[pos + i].split()]
                      for i in range(n_nodes)])
    pos += n_nodes
    n_cells = expect("cells")
    loops = [[int(v) for v in lines[pos + i].split()] for i in range(n_cells)]
    pos += n_cells
    n_faces = expect("faces")

    mesh = build_mesh_from_cells(nodes, loops, boundary="neumann")
    if n_faces != mesh.n_faces:
        raise ValueError("face count mismatch between file and rebuilt mesh")

    key = {}
    for f in range(mesh.n_faces):
        a, b = sorted(map(int, mesh.face_nodes[f]))
        key[(a, b)] = f
    kind = mesh.boundary_kind.copy()
    partner_file = {}
    file_face = []
    for i in range(n_faces):
        a, b, tag, partner = lines[pos + i].split()
        f = key[tuple(sorted((int(a), int(b))))]
        file_face.append(f)
        kind[f] = _TAG_CODES[tag]
        partner_file[f] = int(partner)

    import dataclasses
    mesh = dataclasses.replace(mesh, boundary_kind=kind)
    pairs = [(f, file_face[p]) for f, p in partner_file.items()
             if p >= 0 and f < file_face[p]]
    if pairs:
        # Re-derive the pairing via congruence translations recorded per pair.
        partner = mesh.periodic_partner.copy()
        for f, g in pairs:
            partner[f] = g
            partner[g] = f
        face_dof = -np.ones(mesh.n_faces, dtype=np.int64)
        dof_face = []
        for f in range(mesh.n_faces):
            if face_dof[f] != -1:
                continue
            d = len(dof_face)
            face_dof[f] = d
            if partner[f] != -1:
                face_dof[partner[f]] = d
            dof_face.append(f)
        mesh = dataclasses.replace(
            mesh, periodic_partner=partner, face_dof=face_dof,
            n_dofs=len(dof_face), dof_face=np.asarray(dof_face, dtype=np.int64))
    return mesh


def write_vtk(mesh: Mesh, path, cell_data: Optional[dict] = None,
              title: str = "mimag") -> None:
    """Legacy ASCII VTK unstructured grid with polygon cells.

    ``cell_data`` maps names to per-cell arrays: (n_cells,) scalars or
    (n_cells, 3) vectors.
    """
    cell_data = cell_data or {}
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for p in mesh.nodes:
            fh.write(f"{p[0]} {p[1]} 0.0\n")
        sizes = [len(mesh.cell_node_ids(c)) for c in range(mesh.n_cells)]
        fh.write(f"CELLS {mesh.n_cells} {mesh.n_cells + sum(sizes)}\n")
        for c in range(mesh.n_cells):
            loop = mesh.cell_node_ids(c)
            fh.write(f"{len(loop)} " + " ".join(str(int(v)) for v in loop) + "\n")
        fh.write(f"CELL_TYPES {mesh.n_cells}\n")
        for _ in range(mesh.n_cells):
            fh.write("7\n")  # VTK_POLYGON
        if cell_data:
            fh.write(f"CELL_DATA {mesh.n_cells}\n")
            for name, arr in cell_data.items():
                arr = np.asarray(arr)
                if arr.ndim == 1:
                    fh.write(f"SCALARS {name} double\nLOOKUP_TABLE default\n")
                    for v in arr:
                        fh.write(f"{v}\n")
                else:
                    fh.write(f"VECTORS {name} double\n")
                    for v in arr:
                        z = v[2] if arr.shape[1] > 2 else 0.0
                        fh.write(f"{v[0]} {v[1]} {z}\n")
