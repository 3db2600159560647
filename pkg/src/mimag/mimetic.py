"""Mimetic inner products and discrete divergence/gradient operators.

Per cell E with n faces, the geometry enters through two n-by-2 matrices:
``N`` (rows: outward unit normals) and ``R`` (rows: |f| (x_f - x_E)).  They
satisfy N^T R = |E| I.  Two independently constructed families solve the
consistency equations:

    M N = R        M  = (1/|E|) R R^T + gamma  (I - N (N^T N)^-1 N^T)
    M^-1 R = N     M~ = (1/|E|) N N^T + gamma~ (I - R (R^T R)^-1 R^T)

With scalar stabilization these are in general *not* mutual inverses.  The
solver uses only ``M~`` (written ``Minv`` below); the flux inner product
that makes the discrete Green identity exact is induced by its true inverse
``inv(Minv)``, which is itself a solution of M N = R.  That induced matrix
backs the flux norms and the exchange energy.

Cells are grouped by face count so all local matrices assemble as batched
einsums; the exchange constant ``eta`` is folded into ``Minv`` (and hence
into fluxes) at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .mesh import DIRICHLET, NEUMANN, Mesh


def assemble_NR(mesh: Mesh, cell: int) -> tuple[np.ndarray, np.ndarray]:
    """Outward-normal and scaled-offset matrices (N, R) for one cell."""
    f = mesh.cell_face_ids(cell)
    s = mesh.cell_face_signs(cell)
    if np.any(mesh.face_length[f] <= 0):
        raise ValueError(f"cell {cell} has a degenerate face")
    N = mesh.face_normal[f] * s[:, None]
    R = mesh.face_length[f][:, None] * (mesh.face_centroid[f] - mesh.cell_centroid[cell])
    return N, R


def inner_product_matrix(N: np.ndarray, R: np.ndarray, area: float,
                         gamma: float) -> np.ndarray:
    """Flux inner-product matrix M = (1/|E|) R R^T + gamma (I - P_N)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    n = N.shape[0]
    NtN = N.T @ N
    if abs(np.linalg.det(NtN)) < 1e-14 * max(1.0, np.trace(NtN)) ** 2:
        raise ValueError("singular N^T N: cell has fewer than two independent normals")
    PN = N @ np.linalg.solve(NtN, N.T)
    M = (R @ R.T) / area + gamma * (np.eye(n) - PN)
    return 0.5 * (M + M.T)


def inverse_inner_product_matrix(N: np.ndarray, R: np.ndarray, area: float,
                                 gamma_tilde: float) -> np.ndarray:
    """Inverse-family matrix M^-1 = (1/|E|) N N^T + gamma~ (I - P_R)."""
    if gamma_tilde <= 0:
        raise ValueError("gamma_tilde must be positive")
    n = R.shape[0]
    RtR = R.T @ R
    if abs(np.linalg.det(RtR)) < 1e-14 * max(1.0, np.trace(RtR)) ** 2:
        raise ValueError("singular R^T R")
    PR = R @ np.linalg.solve(RtR, R.T)
    W = (N @ N.T) / area + gamma_tilde * (np.eye(n) - PR)
    return 0.5 * (W + W.T)


def is_m_matrix(m_inv: np.ndarray, face_lengths: Optional[np.ndarray] = None,
                tol: float = 1e-13) -> tuple[bool, bool]:
    """Check the two renormalization-lemma hypotheses on M^-1.

    Returns ``(m_matrix_flag, positivity_flag)``: (a) M^-1 is an M-matrix
    (non-positive off-diagonal entries and positive definite), (b) the
    vector M^-1 C e has strictly positive entries, with C = diag(|f_i|)
    (identity when face lengths are omitted).  The conditions are sufficient
    for monotone energy, not necessary; the solver runs either way.
    """
    A = np.asarray(m_inv, dtype=float)
    n = A.shape[0]
    scale = np.abs(A).max()
    off = A - np.diag(np.diag(A))
    z_matrix = bool(np.all(off <= tol * scale))
    spd = bool(np.linalg.eigvalsh(A).min() > 0)
    c = np.ones(n) if face_lengths is None else np.asarray(face_lengths, float)
    positive = bool(np.all(A @ c > 0))
    return z_matrix and spd, positive


def discrete_divergence(area: float, face_lengths: np.ndarray,
                        flux: np.ndarray) -> np.ndarray:
    """DIV_E of an outward-oriented per-face flux: (1/|E|) sum |f| p_f."""
    return np.tensordot(face_lengths, flux, axes=(0, 0)) / area


def local_gradient(m_inv: np.ndarray, face_lengths: np.ndarray,
                   m_cell: np.ndarray, m_faces: np.ndarray) -> np.ndarray:
    """Mimetic gradient M^-1 (|f_i| (m_f_i - m_E))_i, per component."""
    return m_inv @ (face_lengths[:, None] * (m_faces - m_cell[None, :]))


@dataclass(frozen=True)
class LocalInnerProduct:
    """Per-cell mimetic data: geometry matrices and both inner products."""

    N: np.ndarray
    R: np.ndarray
    M: np.ndarray
    M_inv: np.ndarray
    gamma: float
    gamma_tilde: float
    area: float


# ---------------------------------------------------------------------------
# discrete fields
# ---------------------------------------------------------------------------

@dataclass
class CellVectorField:
    """One 3-vector per cell (magnetization and friends)."""

    mesh: Mesh
    data: np.ndarray  # (n_cells, 3)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "CellVectorField":
        return cls(mesh, np.zeros((mesh.n_cells, 3)))

    def unit_norm_violation(self) -> float:
        return float(np.abs(np.sqrt((self.data ** 2).sum(axis=1)) - 1.0).max())

    def average(self) -> np.ndarray:
        return self.data.mean(axis=0)


@dataclass
class EdgeVectorField:
    """One 3-vector per face dof (auxiliary edge magnetization)."""

    mesh: Mesh
    data: np.ndarray  # (n_dofs, 3)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "EdgeVectorField":
        return cls(mesh, np.zeros((mesh.n_dofs, 3)))


@dataclass
class FluxField:
    """Per-face-dof flux scalars for each component, stored once.

    The stored value is oriented along the dof's global normal; the
    outward-oriented per-cell view applies the cell-face signs, so the
    continuity constraint p_{E1,f} + p_{E2,f} = 0 holds structurally.
    """

    mesh: Mesh
    data: np.ndarray  # (n_dofs, 3)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "FluxField":
        return cls(mesh, np.zeros((mesh.n_dofs, 3)))

    def cell_view(self, cell: int) -> np.ndarray:
        """Outward-oriented (n_faces_of_cell, 3) flux values."""
        sl = self.mesh.cell_face_slice(cell)
        dofs = self.mesh.face_dof[self.mesh.cell_faces[sl]]
        return self.data[dofs] * self.mesh.cell_signs[sl][:, None]


# ---------------------------------------------------------------------------
# per-mesh operator cache
# ---------------------------------------------------------------------------

@dataclass
class _CellGroup:
    n: int
    cells: np.ndarray        # (k,)
    geo: np.ndarray          # (k, n) geometric face ids
    sign: np.ndarray         # (k, n)
    dof: np.ndarray          # (k, n)
    length: np.ndarray       # (k, n)
    area: np.ndarray         # (k,)
    N: np.ndarray            # (k, n, 2)
    R: np.ndarray            # (k, n, 2)
    Minv: np.ndarray         # (k, n, n), eta-scaled
    T: np.ndarray            # (k, n, n)  C Minv C
    gamma: np.ndarray        # (k,)
    gamma_tilde: np.ndarray  # (k,)
    M_energy: Optional[np.ndarray] = None
    M_direct: Optional[np.ndarray] = None


class MimeticOperators:
    """All per-cell matrices and assembled global operators for one mesh.

    Assembly is done once; the data is immutable afterwards and safe to
    share.  ``gamma_mode`` selects the scalar stabilization: "trace"
    (scaled trace of the leading term, the experiments' default), "unit"
    (gamma = |E|, gamma~ = 1/|E|) or "gamma0" (gamma~ = gamma0 tr(N N^T)/|E|
    for the accuracy-vs-gamma0 study).
    """

    def __init__(self, mesh: Mesh, eta: float = 1.0, gamma_mode: str = "trace",
                 gamma0: float = 1.0):
        if eta <= 0:
            raise ValueError("eta must be positive")
        if gamma_mode not in ("trace", "unit", "gamma0"):
            raise ValueError(f"unknown gamma_mode {gamma_mode!r}")
        self.mesh = mesh
        self.eta = float(eta)
        self.gamma_mode = gamma_mode
        self.gamma0 = float(gamma0)
        self.groups: list[_CellGroup] = []
        self._group_of_cell = np.empty(mesh.n_cells, dtype=np.int64)
        self._pos_in_group = np.empty(mesh.n_cells, dtype=np.int64)
        self._build_groups()
        self._assemble_global()

    # -- assembly -----------------------------------------------------------

    def _build_groups(self) -> None:
        mesh = self.mesh
        counts = np.diff(mesh.cell_ptr)
        for gi, n in enumerate(np.unique(counts)):
            cells = np.nonzero(counts == n)[0]
            idx = mesh.cell_ptr[cells][:, None] + np.arange(n)[None, :]
            geo = mesh.cell_faces[idx]
            sign = mesh.cell_signs[idx].astype(float)
            dof = mesh.face_dof[geo]
            length = mesh.face_length[geo]
            area = mesh.cell_area[cells]
            N = mesh.face_normal[geo] * sign[..., None]
            R = length[..., None] * (mesh.face_centroid[geo]
                                     - mesh.cell_centroid[cells][:, None, :])

            NNt = np.einsum("kic,kjc->kij", N, N)
            RtR = np.einsum("kic,kid->kcd", R, R)
            PR = np.einsum("kic,kcd,kjd->kij", R, np.linalg.inv(RtR), R)
            if self.gamma_mode == "unit":
                gt = 1.0 / area
                ga = area.copy()
            elif self.gamma_mode == "trace":
                gt = np.einsum("kii->k", NNt) / (2.0 * area)
                ga = np.einsum("kic,kic->k", R, R) / (2.0 * area)
            else:
                gt = self.gamma0 * np.einsum("kii->k", NNt) / area
                ga = np.einsum("kic,kic->k", R, R) / (2.0 * area)
            eye = np.eye(int(n))
            Minv = NNt / area[:, None, None] + gt[:, None, None] * (eye - PR)
            Minv = 0.5 * (Minv + Minv.transpose(0, 2, 1)) * self.eta
            T = length[:, :, None] * Minv * length[:, None, :]

            self._group_of_cell[cells] = gi
            self._pos_in_group[cells] = np.arange(len(cells))
            self.groups.append(_CellGroup(
                n=int(n), cells=cells, geo=geo, sign=sign, dof=dof,
                length=length, area=area, N=N, R=R, Minv=Minv, T=T,
                gamma=ga, gamma_tilde=gt,
            ))

    def _assemble_global(self) -> None:
        mesh = self.mesh
        nd, nc = mesh.n_dofs, mesh.n_cells

        rows, cols, data = [], [], []
        drows, dcols, ddata = [], [], []
        frows, fcols, fdata = [], [], []
        for g in self.groups:
            k, n = g.cells.size, g.n
            # T^{ff}: magnetization edge values are unsigned, no orientation.
            rows.append(np.broadcast_to(g.dof[:, :, None], (k, n, n)).ravel())
            cols.append(np.broadcast_to(g.dof[:, None, :], (k, n, n)).ravel())
            data.append(g.T.ravel())
            # T^{fE}
            frows.append(g.dof.ravel())
            fcols.append(np.broadcast_to(g.cells[:, None], (k, n)).ravel())
            fdata.append(-g.T.sum(axis=2).ravel())
            # DIV: outward orientation via signs.
            drows.append(np.broadcast_to(g.cells[:, None], (k, n)).ravel())
            dcols.append(g.dof.ravel())
            ddata.append((g.length * g.sign / g.area[:, None]).ravel())

        self.T_ff = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nd, nd))
        self.T_fE = sp.csr_matrix(
            (np.concatenate(fdata), (np.concatenate(frows), np.concatenate(fcols))),
            shape=(nd, nc))
        self.div = sp.csr_matrix(
            (np.concatenate(ddata), (np.concatenate(drows), np.concatenate(dcols))),
            shape=(nc, nd))

        kind = mesh.boundary_kind[mesh.dof_face]
        self.dirichlet_dofs = np.nonzero(kind == DIRICHLET)[0]
        self.free_dofs = np.nonzero(kind != DIRICHLET)[0]
        self.neumann_dofs = np.nonzero(kind == NEUMANN)[0]

    # -- per-cell access ----------------------------------------------------

    def cell_group(self, cell: int) -> tuple[_CellGroup, int]:
        g = self.groups[self._group_of_cell[cell]]
        return g, int(self._pos_in_group[cell])

    def local(self, cell: int) -> LocalInnerProduct:
        """Full per-cell record with both independently built matrices."""
        g, p = self.cell_group(cell)
        M = inner_product_matrix(g.N[p], g.R[p], g.area[p], float(g.gamma[p]))
        return LocalInnerProduct(
            N=g.N[p].copy(), R=g.R[p].copy(), M=M,
            M_inv=g.Minv[p] / self.eta,
            gamma=float(g.gamma[p]), gamma_tilde=float(g.gamma_tilde[p]),
            area=float(g.area[p]),
        )

    def _energy_matrices(self, g: _CellGroup) -> np.ndarray:
        if g.M_energy is None:
            g.M_energy = np.linalg.inv(g.Minv)
        return g.M_energy

    # -- discrete operators --------------------------------------------------

    def divergence(self, p: np.ndarray) -> np.ndarray:
        """DIV of a dof-stored flux array (n_dofs, 3) -> (n_cells, 3)."""
        return self.div @ p

    def gradient_cellwise(self, m: np.ndarray, m_edges: np.ndarray
                          ) -> list[tuple[_CellGroup, np.ndarray]]:
        """Per-group outward gradient q = Minv C (m_f - m_E), shape (k, n, 3)."""
        out = []
        for g in self.groups:
            x = g.length[:, :, None] * (m_edges[g.dof] - m[g.cells][:, None, :])
            out.append((g, np.einsum("kij,kjc->kic", g.Minv, x)))
        return out

    def flux_field(self, m: np.ndarray, m_edges: np.ndarray) -> np.ndarray:
        """Dof-stored flux p = -GRAD(m, m_edges), averaged over the two sides."""
        p = np.zeros((self.mesh.n_dofs, 3))
        cnt = np.zeros(self.mesh.n_dofs)
        for g, q in self.gradient_cellwise(m, m_edges):
            vals = -q * g.sign[:, :, None]
            np.add.at(p, g.dof.ravel(), vals.reshape(-1, 3))
            np.add.at(cnt, g.dof.ravel(), 1.0)
        return p / cnt[:, None]

    def exchange_energy(self, m: np.ndarray, m_edges: np.ndarray) -> float:
        """(1/2) [p, p]_F for p = -GRAD(m, m_edges), without forming p."""
        e = 0.0
        for g in self.groups:
            x = g.length[:, :, None] * (m_edges[g.dof] - m[g.cells][:, None, :])
            e += 0.5 * np.einsum("kic,kij,kjc->", x, g.Minv, x)
        return float(e)

    def inner_product_Q(self, a: np.ndarray, b: np.ndarray) -> float:
        """[a, b]_Q = sum_E |E| a_E . b_E (summed over components)."""
        return float(np.einsum("e,ec,ec->", self.mesh.cell_area, a, b))

    def norm_Q(self, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner_product_Q(a, a), 0.0)))

    def inner_product_F(self, p: np.ndarray, q: np.ndarray) -> float:
        """[p, q]_F with the inner product induced by inv(Minv), per cell."""
        total = 0.0
        for g in self.groups:
            Me = self._energy_matrices(g)
            pv = p[g.dof] * g.sign[:, :, None]
            qv = q[g.dof] * g.sign[:, :, None]
            total += np.einsum("kic,kij,kjc->", pv, Me, qv)
        return float(total)

    def norm_F(self, p: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner_product_F(p, p), 0.0)))

    def m_matrix_flags(self) -> tuple[np.ndarray, np.ndarray]:
        """Both renormalization-lemma flags for every cell."""
        flag = np.empty(self.mesh.n_cells, dtype=bool)
        pos = np.empty(self.mesh.n_cells, dtype=bool)
        for g in self.groups:
            for p_, c in enumerate(g.cells):
                f1, f2 = is_m_matrix(g.Minv[p_], g.length[p_])
                flag[c], pos[c] = f1, f2
        return flag, pos

    def spectral_bounds(self) -> tuple[float, float]:
        """Measured stability constants: extremes of eig(M_E)/|E| over cells."""
        lo, hi = np.inf, 0.0
        for g in self.groups:
            Me = self._energy_matrices(g)
            w = np.linalg.eigvalsh(Me) / (self.eta * g.area[:, None])
            lo = min(lo, float(w.min()))
            hi = max(hi, float(w.max()))
        return lo, hi

    def dump_local_matrices(self, path, cells=None) -> None:
        """Text dump of per-cell matrices for debugging."""
        cells = range(self.mesh.n_cells) if cells is None else cells
        with open(path, "w") as fh:
            for c in cells:
                lp = self.local(c)
                fh.write(f"# cell {c}  area {lp.area!r}  gamma {lp.gamma!r}"
                         f"  gamma_tilde {lp.gamma_tilde!r}\n")
                for name, mat in (("N", lp.N), ("R", lp.R), ("M", lp.M),
                                  ("Minv", lp.M_inv)):
                    fh.write(f"{name}\n")
                    np.savetxt(fh, mat)
