"""Sparse storage helpers and Krylov solvers for the time-step systems.

Matrices live in scipy CSR storage.  The implicit scheme refills the same
sparsity pattern every step, so :class:`FrozenPatternMatrix` precomputes the
COO-to-CSR scatter once and updates only the value array afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Linear solver failed; carries the residual history."""

    def __init__(self, message: str, residuals: Optional[list[float]] = None):
        super().__init__(message)
        self.residuals = residuals or []


@dataclass(frozen=True)
class SolverConfig:
    """Iterative solver selection.

    method: "bicgstab" (default), "gmres" (restarted) or "cg" (SPD only;
    symmetry is asserted on a sample).  preconditioner: "none", "diagonal"
    or "ilu" (incomplete factorization).
    """

    method: str = "bicgstab"
    tol: float = 1e-10
    max_iter: int = 5000
    preconditioner: str = "diagonal"
    gmres_restart: int = 50
    fallback: bool = True    # retry with restarted GMRES + ILU on failure

    def __post_init__(self):
        if not (0.0 < self.tol < 1.0):
            raise ValueError("tolerance must lie in (0, 1)")
        if self.method not in ("bicgstab", "gmres", "cg"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.preconditioner not in ("none", "diagonal", "ilu"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveStats:
    iterations: int
    residual: float


def _preconditioner(A: sp.csr_matrix, kind: str):
    if kind == "none":
        return None
    if kind == "diagonal":
        d = A.diagonal()
        d = np.where(np.abs(d) > 1e-300, d, 1.0)
        inv = 1.0 / d
        return spla.LinearOperator(A.shape, matvec=lambda x: inv * x)
    ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=10)
    return spla.LinearOperator(A.shape, matvec=ilu.solve)


def solve(A: sp.spmatrix, b: np.ndarray, config: SolverConfig = SolverConfig(),
          x0: Optional[np.ndarray] = None) -> tuple[np.ndarray, SolveStats]:
    """Solve A x = b to ||A x - b|| <= tol ||b||, or raise SolverError."""
    A = A.tocsr()
    n = A.shape[0]
    if A.shape[0] != A.shape[1] or b.shape[0] != n:
        raise ValueError("incompatible shapes")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), SolveStats(0, 0.0)

    if config.method == "cg":
        probe = np.sin(np.arange(n, dtype=float))
        asym = np.linalg.norm(A @ probe - A.T @ probe)
        if asym > 1e-8 * np.linalg.norm(A @ probe):
            raise SolverError("cg requested for a non-symmetric matrix")

    M = _preconditioner(A, config.preconditioner)
    count = {"it": 0}
    residuals: list[float] = []

    if config.method == "gmres":
        def cb(rk):
            count["it"] += 1
            residuals.append(float(rk))
        x, info = spla.gmres(A, b, x0=x0, rtol=config.tol, atol=0.0,
                             maxiter=config.max_iter, M=M,
                             restart=config.gmres_restart,
                             callback=cb, callback_type="pr_norm")
    else:
        def cb(xk):
            count["it"] += 1
        fn = spla.bicgstab if config.method == "bicgstab" else spla.cg
        x, info = fn(A, b, x0=x0, rtol=config.tol, atol=0.0,
                     maxiter=config.max_iter, M=M, callback=cb)

    res = float(np.linalg.norm(A @ x - b))
    if not np.isfinite(res):
        raise SolverError("solver breakdown produced non-finite values", residuals)
    if res > config.tol * bnorm * 1.001:
        raise SolverError(
            f"no convergence in {count['it']} iterations "
            f"(relative residual {res / bnorm:.3e}, target {config.tol:.1e})",
            residuals)
    return x, SolveStats(count["it"], res)


class FrozenPatternMatrix:
    """CSR matrix with a fixed sparsity pattern and cheap value refresh.

    Built once from COO triplets (duplicates are summed); ``set_data`` takes
    values in the *original* triplet order and rebuilds only ``csr.data``.
    """

    def __init__(self, rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        order = np.lexsort((cols, rows))
        r, c = rows[order], cols[order]
        new_group = np.empty(r.size, dtype=bool)
        new_group[0] = True
        new_group[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        uid = np.cumsum(new_group) - 1
        self._scatter = np.empty(rows.size, dtype=np.int64)
        self._scatter[order] = uid
        self._nnz = int(uid[-1]) + 1
        ur, uc = r[new_group], c[new_group]
        indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        np.add.at(indptr, ur + 1, 1)
        np.cumsum(indptr, out=indptr)
        self.csr = sp.csr_matrix((np.zeros(self._nnz), uc, indptr), shape=shape)

    def set_data(self, values: np.ndarray) -> None:
        self.csr.data = np.bincount(self._scatter, weights=values.ravel(),
                                    minlength=self._nnz)

    def matrix(self) -> sp.csr_matrix:
        return self.csr


def export_coordinate_format(A: sp.spmatrix, path) -> None:
    """Write a matrix in MatrixMarket coordinate text format."""
    from scipy.io import mmwrite
    mmwrite(str(path), A.tocoo())
