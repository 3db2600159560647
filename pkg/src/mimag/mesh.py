"""2D polygonal meshes and the mesh families used by the experiments.

A :class:`Mesh` stores nodes, geometric faces (edges) and cells in flat
numpy arrays.  Cell-face incidence is CSR-packed: ``cell_ptr`` delimits each
cell's slice of ``cell_faces`` / ``cell_signs``.  Every geometric face
carries one globally oriented unit normal; the per-cell outward normal is
``sign * normal``.  Periodic boundaries are realized by mapping the two
paired geometric faces onto a single degree of freedom (``face_dof``), so
flux continuity across a periodic seam is structural, exactly as for an
interior face.

Meshes are immutable after construction; generators return new instances.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2
PERIODIC = 3

_KIND_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet",
               NEUMANN: "neumann", PERIODIC: "periodic"}
_KIND_CODES = {v: k for k, v in _KIND_NAMES.items()}


class MeshError(ValueError):
    """Raised when construction produces an invalid mesh."""


@dataclass(frozen=True)
class UniformGridInfo:
    """Present when the mesh is a uniform rectangular grid of cells.

    Enables the condensed solver paths; ``cell_index[j, i]`` maps grid
    coordinates (row j, column i) to the cell id.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    origin: tuple[float, float]
    cell_index: np.ndarray  # (ny, nx) int


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray            # (n_nodes, 2)
    face_nodes: np.ndarray       # (n_faces, 2) node ids
    face_normal: np.ndarray      # (n_faces, 2) unit, global orientation
    face_centroid: np.ndarray    # (n_faces, 2)
    face_length: np.ndarray      # (n_faces,)
    face_cells: np.ndarray       # (n_faces, 2): [plus cell, minus cell], -1 if absent
    cell_ptr: np.ndarray         # (n_cells + 1,)
    cell_faces: np.ndarray       # packed geometric face ids, CCW order
    cell_signs: np.ndarray       # packed +-1, outward normal = sign * face_normal
    cell_node_ptr: np.ndarray    # (n_cells + 1,)
    cell_nodes: np.ndarray       # packed node ids, CCW loops
    cell_centroid: np.ndarray    # (n_cells, 2)
    cell_area: np.ndarray        # (n_cells,)
    cell_diameter: np.ndarray    # (n_cells,)
    boundary_kind: np.ndarray    # (n_faces,) uint8
    periodic_partner: np.ndarray  # (n_faces,) partner face id or -1
    face_dof: np.ndarray         # (n_faces,) flux/edge dof id (periodic pairs share)
    n_dofs: int
    dof_face: np.ndarray         # (n_dofs,) primary geometric face of each dof
    uniform: Optional[UniformGridInfo] = None

    @property
    def n_cells(self) -> int:
        return self.cell_area.shape[0]

    @property
    def n_faces(self) -> int:
        return self.face_length.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def h(self) -> float:
        """Characteristic mesh size: the maximum cell diameter."""
        return float(self.cell_diameter.max())

    def cell_face_slice(self, cell: int) -> slice:
        return slice(self.cell_ptr[cell], self.cell_ptr[cell + 1])

    def cell_face_ids(self, cell: int) -> np.ndarray:
        return self.cell_faces[self.cell_face_slice(cell)]

    def cell_face_signs(self, cell: int) -> np.ndarray:
        return self.cell_signs[self.cell_face_slice(cell)]

    def cell_node_ids(self, cell: int) -> np.ndarray:
        return self.cell_nodes[self.cell_node_ptr[cell]:self.cell_node_ptr[cell + 1]]

    def cell_outward_normals(self, cell: int) -> np.ndarray:
        f = self.cell_face_ids(cell)
        return self.face_normal[f] * self.cell_face_signs(cell)[:, None]

    def is_boundary_dof(self) -> np.ndarray:
        """Boolean mask over dofs: True for Dirichlet/Neumann boundary dofs."""
        kind = self.boundary_kind[self.dof_face]
        return (kind == DIRICHLET) | (kind == NEUMANN)

    def dirichlet_dofs(self) -> np.ndarray:
        return np.nonzero(self.boundary_kind[self.dof_face] == DIRICHLET)[0]

    def total_area(self) -> float:
        return float(self.cell_area.sum())


def _polygon_area_centroid(pts: np.ndarray) -> tuple[float, np.ndarray]:
    # Shift to the vertex mean first: keeps the shoelace sums accurate for
    # small cells far from the origin.
    shift = pts.mean(axis=0)
    x = pts[:, 0] - shift[0]
    y = pts[:, 1] - shift[1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-300:
        raise MeshError("degenerate cell with zero area")
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return area, np.array([cx + shift[0], cy + shift[1]])


def build_mesh_from_cells(
    nodes: np.ndarray,
    cell_loops: Sequence[Sequence[int]],
    boundary: str = "neumann",
    uniform: Optional[UniformGridInfo] = None,
) -> Mesh:
    """Assemble a mesh from node coordinates and CCW node loops.

    Faces are recovered by matching consecutive node pairs of the loops;
    a node pair shared by two loops becomes an interior face.  Loops given
    clockwise are flipped.  ``boundary`` tags every boundary face
    ("dirichlet" or "neumann"); periodic seams are paired afterwards with
    :func:`pair_periodic_faces`.
    """
    nodes = np.asarray(nodes, dtype=float)
    n_cells = len(cell_loops)

    loops: list[np.ndarray] = []
    areas = np.empty(n_cells)
    centroids = np.empty((n_cells, 2))
    diameters = np.empty(n_cells)
    for c, loop in enumerate(cell_loops):
        loop = np.asarray(loop, dtype=np.int64)
        pts = nodes[loop]
        area, centroid = _polygon_area_centroid(pts)
        if area < 0.0:
            loop = loop[::-1]
            pts = pts[::-1]
            area = -area
        loops.append(loop)
        areas[c] = area
        centroids[c] = centroid
        d = pts[:, None, :] - pts[None, :, :]
        diameters[c] = np.sqrt((d * d).sum(axis=2).max())

    face_key: dict[tuple[int, int], int] = {}
    face_nodes: list[tuple[int, int]] = []
    face_of_pair: list[list[int]] = []  # per face, adjacent cell ids
    cell_faces_l: list[int] = []
    cell_ptr = np.zeros(n_cells + 1, dtype=np.int64)
    cell_nodes_l: list[int] = []
    cell_node_ptr = np.zeros(n_cells + 1, dtype=np.int64)

    for c, loop in enumerate(loops):
        n = len(loop)
        cell_node_ptr[c + 1] = cell_node_ptr[c] + n
        cell_nodes_l.extend(int(v) for v in loop)
        cell_ptr[c + 1] = cell_ptr[c] + n
        for k in range(n):
            a, b = int(loop[k]), int(loop[(k + 1) % n])
            key = (a, b) if a < b else (b, a)
            f = face_key.get(key)
            if f is None:
                f = len(face_nodes)
                face_key[key] = f
                face_nodes.append((a, b))
                face_of_pair.append([])
            if len(face_of_pair[f]) >= 2:
                raise MeshError(f"face {key} adjacent to more than two cells")
            face_of_pair[f].append(c)
            cell_faces_l.append(f)

    fn = np.asarray(face_nodes, dtype=np.int64)
    p0 = nodes[fn[:, 0]]
    p1 = nodes[fn[:, 1]]
    tang = p1 - p0
    length = np.sqrt((tang * tang).sum(axis=1))
    if np.any(length <= 0.0):
        raise MeshError("face with zero length")
    normal = np.column_stack([tang[:, 1], -tang[:, 0]]) / length[:, None]
    # Canonical global orientation: normal points into the +x (or +y) halfplane.
    flip = (normal[:, 0] < -1e-14) | ((np.abs(normal[:, 0]) <= 1e-14) & (normal[:, 1] < 0))
    normal[flip] *= -1.0
    centroid_f = 0.5 * (p0 + p1)

    # Per (cell, local face) outward sign relative to the canonical normal.
    cell_faces_a = np.asarray(cell_faces_l, dtype=np.int64)
    cell_signs_a = np.empty_like(cell_faces_a, dtype=np.int8)
    face_cells = -np.ones((len(fn), 2), dtype=np.int64)
    pos = 0
    for c, loop in enumerate(loops):
        n = len(loop)
        pts = nodes[loop]
        nxt = np.roll(pts, -1, axis=0)
        edge = nxt - pts
        out = np.column_stack([edge[:, 1], -edge[:, 0]])
        for k in range(n):
            f = cell_faces_a[pos]
            s = 1 if out[k] @ normal[f] > 0.0 else -1
            cell_signs_a[pos] = s
            slot = 0 if s == 1 else 1
            if face_cells[f, slot] != -1:
                raise MeshError(f"face {f} claimed twice with the same orientation")
            face_cells[f, slot] = c
            pos += 1

    n_adj = np.array([len(a) for a in face_of_pair])
    kind = np.where(n_adj == 1,
                    _KIND_CODES[boundary],
                    INTERIOR).astype(np.uint8)

    n_faces = len(fn)
    face_dof = np.arange(n_faces, dtype=np.int64)
    mesh = Mesh(
        nodes=nodes,
        face_nodes=fn,
        face_normal=normal,
        face_centroid=centroid_f,
        face_length=length,
        face_cells=face_cells,
        cell_ptr=cell_ptr,
        cell_faces=cell_faces_a,
        cell_signs=cell_signs_a,
        cell_node_ptr=cell_node_ptr,
        cell_nodes=np.asarray(cell_nodes_l, dtype=np.int64),
        cell_centroid=centroids,
        cell_area=areas,
        cell_diameter=diameters,
        boundary_kind=kind,
        periodic_partner=-np.ones(n_faces, dtype=np.int64),
        face_dof=face_dof,
        n_dofs=n_faces,
        dof_face=face_dof.copy(),
        uniform=uniform,
    )
    return mesh


def pair_periodic_faces(mesh: Mesh, translations: Sequence[np.ndarray],
                        tol: float = 1e-9) -> Mesh:
    """Pair boundary faces congruent under the given translations.

    For each translation t, a boundary face with centroid x is paired with
    the boundary face at x + t.  Paired faces share a single flux/edge dof;
    the involution and congruence are enforced.
    """
    bnd = np.nonzero(mesh.face_cells.min(axis=1) == -1)[0]
    centroids = mesh.face_centroid[bnd]
    scale = max(1.0, float(np.abs(mesh.nodes).max()))
    key = {tuple(np.round(c / (tol * scale)).astype(np.int64)): f
           for c, f in zip(centroids, bnd)}
    partner = mesh.periodic_partner.copy()
    kind = mesh.boundary_kind.copy()
    for t in translations:
        t = np.asarray(t, dtype=float)
        for c, f in zip(centroids, bnd):
            if partner[f] != -1:
                continue
            k2 = tuple(np.round((c + t) / (tol * scale)).astype(np.int64))
            g = key.get(k2)
            if g is None or g == f:
                continue
            if abs(mesh.face_length[f] - mesh.face_length[g]) > tol * scale:
                raise MeshError("periodic pair is not congruent")
            if abs(mesh.face_normal[f] @ mesh.face_normal[g]) < 1.0 - 1e-12:
                raise MeshError("periodic pair normals differ")
            partner[f] = g
            partner[g] = f
            kind[f] = PERIODIC
            kind[g] = PERIODIC

    unmatched = bnd[(kind[bnd] == PERIODIC) & (partner[bnd] == -1)]
    if unmatched.size:
        raise MeshError("periodic pairing left unmatched faces")

    # Merge each pair onto one dof (primary = smaller face id).
    face_dof = -np.ones(mesh.n_faces, dtype=np.int64)
    dof_face = []
    for f in range(mesh.n_faces):
        if face_dof[f] != -1:
            continue
        d = len(dof_face)
        face_dof[f] = d
        g = partner[f]
        if g != -1:
            face_dof[g] = d
        dof_face.append(f)

    return dataclasses.replace(
        mesh,
        periodic_partner=partner,
        boundary_kind=kind,
        face_dof=face_dof,
        n_dofs=len(dof_face),
        dof_face=np.asarray(dof_face, dtype=np.int64),
    )


def with_boundary(mesh: Mesh, boundary: str) -> Mesh:
    """Retag all non-periodic boundary faces."""
    kind = mesh.boundary_kind.copy()
    mask = (mesh.face_cells.min(axis=1) == -1) & (kind != PERIODIC)
    kind[mask] = _KIND_CODES[boundary]
    return dataclasses.replace(mesh, boundary_kind=kind)


def check_mesh(mesh: Mesh, closure_tol: float = 1e-12, nr_tol: float = 1e-12) -> None:
    """Verify the structural and geometric mesh invariants; raise on failure.

    Checks positivity of measures, adjacency consistency, the polygon
    closure identity sum_f |f| n_out = 0, the divergence-theorem identity
    N^T R = |E| I, and that periodic pairing is a congruent involution.
    """
    errors: list[str] = []
    if np.any(mesh.cell_area <= 0):
        errors.append("non-positive cell area")
    if np.any(mesh.face_length <= 0):
        errors.append("non-positive face length")

    n_adj = (mesh.face_cells != -1).sum(axis=1)
    interior = mesh.boundary_kind == INTERIOR
    if np.any(n_adj[interior] != 2):
        errors.append("interior face without two cells")
    if np.any(n_adj[~interior] != 1):
        errors.append("boundary face without exactly one cell")

    for c in range(mesh.n_cells):
        f = mesh.cell_face_ids(c)
        s = mesh.cell_face_signs(c)
        ln = mesh.face_length[f]
        nrm = mesh.face_normal[f] * s[:, None]
        closure = (ln[:, None] * nrm).sum(axis=0)
        perim = ln.sum()
        if np.abs(closure).max() > closure_tol * perim:
            errors.append(f"cell {c}: closure residual {np.abs(closure).max():.3e}")
            break
    eye = np.eye(2)
    for c in range(mesh.n_cells):
        f = mesh.cell_face_ids(c)
        s = mesh.cell_face_signs(c)
        N = mesh.face_normal[f] * s[:, None]
        R = mesh.face_length[f][:, None] * (mesh.face_centroid[f] - mesh.cell_centroid[c])
        resid = N.T @ R - mesh.cell_area[c] * eye
        # Floor accounts for coordinate roundoff in the face-centroid offsets.
        floor = 64 * np.finfo(float).eps * mesh.face_length[f].sum() * mesh.cell_diameter[c]
        if np.abs(resid).max() > nr_tol * mesh.cell_area[c] + floor:
            errors.append(f"cell {c}: N^T R identity residual {np.abs(resid).max():.3e}")
            break

    per = np.nonzero(mesh.boundary_kind == PERIODIC)[0]
    for f in per:
        g = mesh.periodic_partner[f]
        if g == -1 or mesh.periodic_partner[g] != f:
            errors.append(f"periodic pairing is not an involution at face {f}")
            break
        if abs(mesh.face_length[f] - mesh.face_length[g]) > 1e-9:
            errors.append(f"periodic faces {f},{g} not congruent")
            break
        if mesh.face_dof[f] != mesh.face_dof[g]:
            errors.append(f"periodic faces {f},{g} do not share a dof")
            break

    if errors:
        raise MeshError("; ".join(errors))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def build_uniform_quad_mesh(
    nx: int,
    ny: int,
    extent: tuple[float, float] = (1.0, 1.0),
    origin: tuple[float, float] = (0.0, 0.0),
    boundary: str = "neumann",
) -> Mesh:
    """Uniform nx-by-ny mesh of rectangular cells over an axis-aligned box."""
    if nx < 1 or ny < 1:
        raise MeshError("cell counts must be at least 1")
    hx = extent[0] / nx
    hy = extent[1] / ny
    xs = origin[0] + hx * np.arange(nx + 1)
    ys = origin[1] + hy * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    loops = []
    cell_index = np.empty((ny, nx), dtype=np.int64)
    for j in range(ny):
        for i in range(nx):
            cell_index[j, i] = len(loops)
            loops.append([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])

    info = UniformGridInfo(nx=nx, ny=ny, hx=hx, hy=hy,
                           origin=(float(origin[0]), float(origin[1])),
                           cell_index=cell_index)
    return build_mesh_from_cells(nodes, loops, boundary=boundary, uniform=info)


def make_periodic(mesh: Mesh) -> Mesh:
    """Pair opposite boundary faces of a rectangular-domain mesh."""
    if mesh.uniform is None:
        lo = mesh.nodes.min(axis=0)
        hi = mesh.nodes.max(axis=0)
        ext = hi - lo
    else:
        u = mesh.uniform
        ext = np.array([u.nx * u.hx, u.ny * u.hy])
    return pair_periodic_faces(mesh, [np.array([ext[0], 0.0]), np.array([0.0, ext[1]])])


def build_diagonal_strip_mesh(n: int, h: float, boundary: str = "neumann") -> Mesh:
    """A 1-by-n row of square cells with shift-periodic identification.

    Right/left ends are periodic; the top face of cell i is paired with the
    bottom face of cell i+1 (translation (h, -h)).  The result is the exact
    quotient of the uniform n-by-n periodic mesh by the diagonal shift
    symmetry (i, j) -> (i+1, j-1): any field depending only on i+j evolves
    identically here and on the full mesh, at 1/n of the cost.
    """
    mesh = build_uniform_quad_mesh(n, 1, extent=(n * h, h), boundary=boundary)
    return pair_periodic_faces(
        mesh, [np.array([n * h, 0.0]), np.array([h, -h]), np.array([h - n * h, -h])]
    )


def perturb_random(mesh: Mesh, amplitude: float, seed: int) -> Mesh:
    """Randomly displace nodes of a uniform quad mesh by amplitude*xi*h.

    xi ~ U[-1, 1] per node per coordinate.  Boundary nodes move only
    tangentially and the displacement is mirrored onto the opposite side so
    the mesh stays periodic-compatible; corners are fixed.  Deterministic
    for a given seed.
    """
    if mesh.uniform is None:
        raise MeshError("perturb_random requires a uniform quad mesh")
    if not (0.0 <= amplitude < 0.5):
        raise MeshError("amplitude must lie in [0, 0.5)")
    u = mesh.uniform
    h = max(u.hx, u.hy)
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-1.0, 1.0, size=mesh.nodes.shape)

    lo = np.array(u.origin)
    hi = lo + np.array([u.nx * u.hx, u.ny * u.hy])
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    tol = 1e-12 * max(1.0, np.abs(hi).max())
    on_left = np.abs(x - lo[0]) < tol
    on_right = np.abs(x - hi[0]) < tol
    on_bottom = np.abs(y - lo[1]) < tol
    on_top = np.abs(y - hi[1]) < tol

    xi[on_left | on_right, 0] = 0.0
    xi[on_bottom | on_top, 1] = 0.0

    # Mirror the tangential displacement onto the paired side (same row/col).
    nxp, nyp = u.nx + 1, u.ny + 1
    idx = np.arange(mesh.n_nodes).reshape(nyp, nxp)
    xi[idx[:, -1]] = xi[idx[:, 0]]
    xi[idx[-1, :]] = xi[idx[0, :]]

    nodes = mesh.nodes + amplitude * h * xi
    return _rebuild_geometry(mesh, nodes, uniform=None)


def distort_smooth(mesh: Mesh) -> Mesh:
    """Apply the smooth unit-square distortion x += 0.1 sin(2 pi x) sin(2 pi y)."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    bump = 0.1 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    nodes = mesh.nodes + bump[:, None]
    return _rebuild_geometry(mesh, nodes, uniform=None)


def _rebuild_geometry(mesh: Mesh, nodes: np.ndarray,
                      uniform: Optional[UniformGridInfo]) -> Mesh:
    """Recompute all geometric data after a node displacement (same topology)."""
    loops = [mesh.cell_node_ids(c) for c in range(mesh.n_cells)]
    for c, loop in enumerate(loops):
        pts = nodes[loop]
        x, y = pts[:, 0], pts[:, 1]
        signed = 0.5 * (x * np.roll(y, -1) - np.roll(x, -1) * y).sum()
        if signed <= 0.0:
            raise MeshError(
                f"node displacement tangled cell {c} (signed area {signed:.3e})")
    rebuilt = build_mesh_from_cells(nodes, loops, boundary="neumann", uniform=uniform)
    # Topology is unchanged, so face numbering from identical loops matches.
    rebuilt = dataclasses.replace(
        rebuilt,
        boundary_kind=mesh.boundary_kind.copy(),
        periodic_partner=mesh.periodic_partner.copy(),
        face_dof=mesh.face_dof.copy(),
        n_dofs=mesh.n_dofs,
        dof_face=mesh.dof_face.copy(),
    )
    return rebuilt


def build_circular_logical_mesh(n: int, boundary: str = "dirichlet") -> Mesh:
    """Logically square n-by-n mesh mapped onto the disk of radius 0.5.

    Uses the elliptical square-to-disk blend; the four corner cells of the
    logical grid become near-triangular quadrilaterals.
    """
    if n < 2:
        raise MeshError("n must be at least 2")
    u = np.linspace(-1.0, 1.0, n + 1)
    U, V = np.meshgrid(u, u, indexing="xy")
    X = U * np.sqrt(np.maximum(0.0, 1.0 - 0.5 * V * V))
    Y = V * np.sqrt(np.maximum(0.0, 1.0 - 0.5 * U * U))
    nodes = np.column_stack([0.5 + 0.5 * X.ravel(), 0.5 + 0.5 * Y.ravel()])

    def nid(i, j):
        return j * (n + 1) + i

    loops = [[nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)]
             for j in range(n) for i in range(n)]
    return build_mesh_from_cells(nodes, loops, boundary=boundary)


def build_polygonal_mesh(n: int, seed: int = 0, lloyd_iterations: int = 30,
                         boundary: str = "dirichlet") -> Mesh:
    """Centroidal-Voronoi-style polygonal tessellation of the unit square.

    n*n generators are relaxed with Lloyd iterations; the resulting clipped
    Voronoi cells give a shape-regular mixed-polygon mesh with h ~ 1/n.
    Deterministic for a given seed.
    """
    from shapely.geometry import MultiPoint, box
    from shapely.ops import voronoi_diagram
    from shapely.strtree import STRtree

    if n < 2:
        raise MeshError("n must be at least 2")
    rng = np.random.default_rng(seed)
    g = (np.arange(n) + 0.5) / n
    GX, GY = np.meshgrid(g, g, indexing="xy")
    pts = np.column_stack([GX.ravel(), GY.ravel()])
    pts += rng.uniform(-0.3, 0.3, size=pts.shape) / n
    square = box(0.0, 0.0, 1.0, 1.0)

    def voronoi_cells(p: np.ndarray) -> list:
        diagram = voronoi_diagram(MultiPoint(p), envelope=square)
        cells = [geom.intersection(square) for geom in diagram.geoms]
        tree = STRtree(cells)
        from shapely.geometry import Point
        ordered = [None] * len(p)
        for i, q in enumerate(p):
            for j in tree.query(Point(q)):
                if cells[j].contains(Point(q)) or cells[j].distance(Point(q)) < 1e-12:
                    ordered[i] = cells[j]
                    break
        if any(c is None or c.is_empty for c in ordered):
            raise MeshError("Voronoi cell assignment failed")
        return ordered

    for _ in range(lloyd_iterations):
        cells = voronoi_cells(pts)
        pts = np.array([[c.centroid.x, c.centroid.y] for c in cells])
    cells = voronoi_cells(pts)

    # Snap vertices onto a fine grid so shared edges match exactly.
    snap = 1e-9
    node_id: dict[tuple[int, int], int] = {}
    nodes: list[tuple[float, float]] = []
    loops = []
    for c in cells:
        ring = np.asarray(c.exterior.coords)[:-1]
        loop = []
        for p in ring:
            key = (int(round(p[0] / snap)), int(round(p[1] / snap)))
            i = node_id.get(key)
            if i is None:
                i = len(nodes)
                node_id[key] = i
                nodes.append((key[0] * snap, key[1] * snap))
            if not loop or loop[-1] != i:
                loop.append(i)
        if loop and loop[0] == loop[-1]:
            loop.pop()
        if len(loop) < 3:
            raise MeshError("degenerate Voronoi cell")
        loops.append(loop)
    return build_mesh_from_cells(np.asarray(nodes), loops, boundary=boundary)


def build_locally_refined_mesh(
    base_n: int,
    levels: int,
    region: tuple[float, float],
    bands: Optional[Sequence[tuple[float, float]]] = None,
    boundary: str = "dirichlet",
) -> Mesh:
    """Uniform unit-square mesh refined in nested vertical bands.

    Cells whose column midpoint falls strictly inside ``bands[l]`` are split
    once per level; bands must be nested so level jumps are at most one.
    Coarse cells facing a finer column acquire the hanging node as an extra
    (collinear) vertex and become degenerate pentagons.  With ``bands``
    omitted, all ``levels`` levels use ``region``, which is only valid for
    ``levels <= 1``.
    """
    if levels < 0:
        raise MeshError("levels must be non-negative")
    if bands is None:
        bands = [region] * levels
    if len(bands) != levels:
        raise MeshError("need one band per refinement level")

    # All node coordinates are integer multiples of 1/(2 * base_n * 2^levels),
    # so nodes are keyed by exact integers and shared edges match exactly.
    unit = 2 * base_n * (1 << levels)
    scale = 1.0 / unit

    # Partition [0,1] into vertical strips with a per-strip level
    # (integer x-bounds in `unit` units).
    strip_w0 = unit // base_n
    strips: list[tuple[int, int, int]] = [
        (i * strip_w0, (i + 1) * strip_w0, 0) for i in range(base_n)
    ]
    for lvl, (b0, b1) in enumerate(bands, start=1):
        out = []
        for (x0, x1, lv) in strips:
            mid = 0.5 * (x0 + x1) * scale
            if lv == lvl - 1 and b0 < mid < b1:
                xm = (x0 + x1) // 2
                out.append((x0, xm, lvl))
                out.append((xm, x1, lvl))
            else:
                out.append((x0, x1, lv))
        strips = out
    for (_, _, la), (_, _, lb) in zip(strips[:-1], strips[1:]):
        if abs(la - lb) > 1:
            raise MeshError("bands are not nested: level jump exceeds one")

    node_id: dict[tuple[int, int], int] = {}
    nodes: list[tuple[float, float]] = []

    def nid(ix: int, iy: int) -> int:
        i = node_id.get((ix, iy))
        if i is None:
            i = len(nodes)
            node_id[(ix, iy)] = i
            nodes.append((ix * scale, iy * scale))
        return i

    loops = []
    levels_of = [lv for (_, _, lv) in strips]
    for s, (x0, x1, lv) in enumerate(strips):
        rows = base_n * (1 << lv)
        dy = unit // rows
        finer_left = s > 0 and levels_of[s - 1] > lv
        finer_right = s + 1 < len(strips) and levels_of[s + 1] > lv
        for j in range(rows):
            y0, y1 = j * dy, (j + 1) * dy
            ym = (y0 + y1) // 2
            loop = [nid(x0, y0), nid(x1, y0)]
            if finer_right:
                loop.append(nid(x1, ym))
            loop.append(nid(x1, y1))
            loop.append(nid(x0, y1))
            if finer_left:
                loop.append(nid(x0, ym))
            loops.append(loop)
    return build_mesh_from_cells(np.asarray(nodes), loops, boundary=boundary)
