"""Demagnetization field of cuboid-cell magnetizations.

The field generated by a uniformly magnetized cuboid is evaluated at cell
centers through the analytic corner sum of the face-charge surface
integrals.  On a uniform grid this yields a lattice of 3x3 tensors indexed
by the cell offset; the field application is then an aperiodic convolution,
done either brute-force (the oracle) or with zero-padded FFTs.

For a single cell through the film thickness the out-of-plane couplings
K_xz, K_yz vanish identically (the corner terms cancel pairwise), so thin
films need only four spectra.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.fft import next_fast_len

from .mesh import Mesh

_CORNER_SIGNS = [(sx, sy, sz) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]


def demag_tensor_entry(offset: tuple[int, int, int],
                       spacing: tuple[float, float, float]) -> np.ndarray:
    """3x3 coupling tensor between two grid cells a lattice offset apart.

    Corner sum over the eight source-cell corners; for lattice offsets every
    log argument is bounded below by (h/2)^2 / (2R), so no singularity guard
    is needed.  The self tensor (offset zero) has trace -1.
    """
    K = _demag_lattice(np.array([[offset[0]]]), np.array([[offset[1]]]),
                       np.array([[offset[2]]]), spacing)
    return K[..., 0, 0].reshape(3, 3)


def _demag_lattice(oi: np.ndarray, oj: np.ndarray, ok: np.ndarray,
                   spacing: tuple[float, float, float]) -> np.ndarray:
    """Tensor components on broadcastable integer offset arrays -> (3,3,...)."""
    hx, hy, hz = spacing
    rx = oi * hx
    ry = oj * hy
    rz = ok * hz
    shape = np.broadcast_shapes(rx.shape, ry.shape, rz.shape)
    K = np.zeros((3, 3) + shape)
    for sx, sy, sz in _CORNER_SIGNS:
        X = rx - sx * hx / 2.0
        Y = ry - sy * hy / 2.0
        Z = rz - sz * hz / 2.0
        R = np.sqrt(X * X + Y * Y + Z * Z)
        s = float(sx * sy * sz)
        K[0, 0] += s * np.arctan(Y * Z / (X * R))
        K[1, 1] += s * np.arctan(X * Z / (Y * R))
        K[2, 2] += s * np.arctan(X * Y / (Z * R))
        K[0, 1] -= s * np.log(Z + R)
        K[0, 2] -= s * np.log(Y + R)
        K[1, 2] -= s * np.log(X + R)
    K[1, 0] = K[0, 1]
    K[2, 0] = K[0, 2]
    K[2, 1] = K[1, 2]
    return K / (4.0 * np.pi)


_PAIRS = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]


@dataclass
class DemagKernel:
    """Offset lattice of demag tensors plus cached spectra for one grid."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    lattice: np.ndarray          # (3, 3, 2nx-1, 2ny-1, 2nz-1), offset-ordered
    _spectra: Optional[dict] = None
    _fft_shape: Optional[tuple] = None

    @classmethod
    def build(cls, dims: tuple[int, int, int],
              spacing: tuple[float, float, float]) -> "DemagKernel":
        nx, ny, nz = dims
        oi = np.arange(-(nx - 1), nx)[:, None, None]
        oj = np.arange(-(ny - 1), ny)[None, :, None]
        ok = np.arange(-(nz - 1), nz)[None, None, :]
        lattice = _demag_lattice(oi, oj, ok, spacing)
        return cls(dims=dims, spacing=tuple(float(s) for s in spacing),
                   lattice=lattice)

    def tensor(self, offset: tuple[int, int, int]) -> np.ndarray:
        nx, ny, nz = self.dims
        return self.lattice[:, :, offset[0] + nx - 1, offset[1] + ny - 1,
                            offset[2] + nz - 1]

    # -- FFT application -----------------------------------------------------

    def _prepare_spectra(self) -> None:
        nx, ny, nz = self.dims
        shape = tuple(next_fast_len(2 * n - 1) if n > 1 else 1
                      for n in (nx, ny, nz))
        self._fft_shape = shape
        self._spectra = {}
        offs = [np.arange(-(n - 1), n) for n in (nx, ny, nz)]
        for (u, v) in _PAIRS:
            comp = self.lattice[u, v]
            if np.abs(comp).max() == 0.0:
                self._spectra[(u, v)] = None
                continue
            wrapped = np.zeros(shape)
            ix = offs[0] % shape[0]
            iy = offs[1] % shape[1]
            iz = offs[2] % shape[2]
            wrapped[np.ix_(ix, iy, iz)] = comp
            self._spectra[(u, v)] = np.fft.rfftn(wrapped)

    def apply_fft(self, m: np.ndarray) -> np.ndarray:
        """Stray field of a (nx, ny, nz, 3) magnetization via FFT convolution."""
        nx, ny, nz = self.dims
        if m.shape != (nx, ny, nz, 3):
            raise ValueError(f"magnetization shape {m.shape} does not match "
                             f"the kernel grid {self.dims}")
        if self._spectra is None:
            self._prepare_spectra()
        shape = self._fft_shape
        Fm = []
        for c in range(3):
            pad = np.zeros(shape)
            pad[:nx, :ny, :nz] = m[..., c]
            Fm.append(np.fft.rfftn(pad))
        out = np.empty((nx, ny, nz, 3))
        for u in range(3):
            acc = None
            for v in range(3):
                spec = self._spectra[(u, v) if u <= v else (v, u)]
                if spec is None:
                    continue
                term = spec * Fm[v]
                acc = term if acc is None else acc + term
            if acc is None:
                out[..., u] = 0.0
            else:
                out[..., u] = np.fft.irfftn(acc, s=shape)[:nx, :ny, :nz]
        return out

    def apply_direct_convolution(self, m: np.ndarray) -> np.ndarray:
        """Brute-force O(N^2) lattice convolution; the oracle for apply_fft."""
        nx, ny, nz = self.dims
        if m.shape != (nx, ny, nz, 3):
            raise ValueError("magnetization shape mismatch")
        out = np.zeros((nx, ny, nz, 3))
        for i in range(nx):
            for j in range(ny):
                for k_ in range(nz):
                    # block[u, v, p, q, r] = K_{i-p, j-q, k-r}[u, v]
                    blk = self.lattice[:, :, i:i + nx, j:j + ny, k_:k_ + nz]
                    blk = blk[:, :, ::-1, ::-1, ::-1]
                    out[i, j, k_] = np.einsum("uvpqr,pqrv->u", blk, m)
        return out

    # -- cache ----------------------------------------------------------------

    def cache_key(self) -> str:
        ident = repr((self.dims, self.spacing)).encode()
        return hashlib.sha256(ident).hexdigest()[:16]

    def save(self, directory) -> Path:
        path = Path(directory) / f"demag_{self.cache_key()}.npz"
        np.savez_compressed(path, dims=np.asarray(self.dims),
                            spacing=np.asarray(self.spacing),
                            lattice=self.lattice)
        return path

    @classmethod
    def load_or_build(cls, dims, spacing, directory=None) -> "DemagKernel":
        if directory is not None:
            probe = cls(dims=tuple(dims), spacing=tuple(float(s) for s in spacing),
                        lattice=np.zeros(0))
            path = Path(directory) / f"demag_{probe.cache_key()}.npz"
            if path.exists():
                data = np.load(path)
                return cls(dims=tuple(int(d) for d in data["dims"]),
                           spacing=tuple(float(s) for s in data["spacing"]),
                           lattice=data["lattice"])
        kernel = cls.build(tuple(dims), tuple(spacing))
        if directory is not None:
            Path(directory).mkdir(parents=True, exist_ok=True)
            kernel.save(directory)
        return kernel


class StrayFieldOperator:
    """Grid-aware wrapper: cell-ordered magnetization in, stray field out."""

    def __init__(self, mesh: Mesh, thickness: float, cache_dir=None):
        if mesh.uniform is None:
            raise ValueError("the FFT stray field requires a uniform grid mesh")
        u = mesh.uniform
        self.mesh = mesh
        self.grid = (u.nx, u.ny, 1)
        self.kernel = DemagKernel.load_or_build(
            self.grid, (u.hx, u.hy, thickness), cache_dir)
        # cell_index[j, i] -> cell id; scatter/gather maps
        self._cells = u.cell_index.T.reshape(u.nx, u.ny, 1)

    def apply(self, m: np.ndarray) -> np.ndarray:
        grid_m = m[self._cells]
        h = self.kernel.apply_fft(grid_m)
        out = np.empty_like(m)
        out[self._cells.ravel()] = h.reshape(-1, 3)
        return out


def apply_direct(mesh: Mesh, m: np.ndarray, thickness: float,
                 quad_order: int = 8) -> np.ndarray:
    """Direct boundary-integral stray field on a general polygonal mesh.

    Cells are prisms of the given thickness; cellwise-constant m has zero
    divergence, so only boundary charges contribute: side faces carry the
    in-plane normal charge m.n, the caps carry +-m_z.  All integrals use
    tensorized Gauss-Legendre rules of the given order; accuracy improves
    with the order, approaching the analytic kernel on uniform grids.
    """
    gl_x, gl_w = np.polynomial.legendre.leggauss(quad_order)
    half_t = 0.5 * thickness
    n_cells = mesh.n_cells
    targets = np.column_stack([mesh.cell_centroid, np.zeros(n_cells)])

    out = np.zeros((n_cells, 3))

    # side faces: for each geometric face, charge density (m_plus - m_minus).n
    for f in range(mesh.n_faces):
        cp, cm = mesh.face_cells[f]
        n2 = mesh.face_normal[f]
        sigma = np.zeros(3)
        if cp >= 0:
            sigma += m[cp]
        if cm >= 0:
            sigma -= m[cm]
        charge = sigma[0] * n2[0] + sigma[1] * n2[1]
        if charge == 0.0:
            continue
        a, b = mesh.nodes[mesh.face_nodes[f]]
        mid = 0.5 * (a + b)
        halfv = 0.5 * (b - a)
        pts_l = mid[None, :] + gl_x[:, None] * halfv[None, :]
        w_l = gl_w * np.linalg.norm(halfv)
        pts_z = half_t * gl_x
        w_z = gl_w * half_t
        P = np.empty((quad_order, quad_order, 3))
        P[..., 0] = pts_l[:, None, 0]
        P[..., 1] = pts_l[:, None, 1]
        P[..., 2] = pts_z[None, :]
        W = w_l[:, None] * w_z[None, :]
        d = targets[:, None, None, :] - P[None, :, :, :]
        r3 = (d ** 2).sum(axis=-1) ** 1.5
        out += charge * np.einsum("eqr,eqrc->ec", W[None, :, :] / r3, d)

    # caps: charge +-m_z on the top/bottom polygons (refined fan triangulation)
    tri_x, tri_w = _triangle_rule(max(1, quad_order // 4))
    for c in range(n_cells):
        mz = m[c, 2]
        if mz == 0.0:
            continue
        loop = mesh.nodes[mesh.cell_node_ids(c)]
        centre = mesh.cell_centroid[c]
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            v1, v2 = a - centre, b - centre
            area2 = v1[0] * v2[1] - v1[1] * v2[0]
            if area2 == 0.0:
                continue
            pts2 = centre[None, :] + tri_x[:, 0:1] * v1[None, :] \
                + tri_x[:, 1:2] * v2[None, :]
            w = tri_w * area2  # signed triangle area times rule weights
            for zsign in (1.0, -1.0):
                P = np.column_stack([pts2, np.full(len(w), zsign * half_t)])
                d = targets[:, None, :] - P[None, :, :]
                r3 = (d ** 2).sum(axis=-1) ** 1.5
                out += (mz * zsign) * np.einsum(
                    "eq,eqc->ec", w[None, :] / r3, d)

    return out / (4.0 * np.pi)


def _triangle_rule(subdivisions: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Degree-5 seven-point rule, uniformly refined on the reference triangle.

    Weights sum to the reference area 1/2; ``subdivisions`` splits each edge
    so accuracy scales with the requested quadrature order.
    """
    a1 = 0.0597158717
    b1 = 0.4701420641
    a2 = 0.7974269853
    b2 = 0.1012865073
    base = np.array([
        [1 / 3, 1 / 3],
        [a1, b1], [b1, a1], [b1, b1],
        [a2, b2], [b2, a2], [b2, b2],
    ])
    bw = np.array([0.225, 0.1323941527, 0.1323941527, 0.1323941527,
                   0.1259391805, 0.1259391805, 0.1259391805]) * 0.5
    if subdivisions <= 1:
        return base, bw
    s = subdivisions
    pts, w = [], []
    for i in range(s):
        for j in range(s - i):
            # lower sub-triangle with origin (i, j)/s
            o = np.array([i, j]) / s
            pts.append(o[None, :] + base / s)
            w.append(bw / s ** 2)
            if i + j < s - 1:
                # upper sub-triangle: reflected through the shared hypotenuse
                top = np.array([i + 1, j + 1]) / s
                pts.append(top[None, :] - base / s)
                w.append(bw / s ** 2)
    return np.vstack(pts), np.concatenate(w)
