"""Theta-scheme time stepping for the mixed mimetic Landau-Lifshitz system.

Each step advances cell magnetizations and auxiliary edge magnetizations.
theta = 0 is explicit: edge values are closed by the flux-continuity system
T_ff m~ = -T_fE m, the flux and its divergence follow locally, and the cell
update is pointwise.  theta = 1 is linearly implicit: one sparse solve for
(m_hat, m~) per step with the gyromagnetic/damping matrix lagged at t_j,
then projection onto the unit sphere.

On uniform rectangular grids (and their periodic quotients) the inverse
inner product is diagonal, so the edge unknowns are eliminated exactly and
the implicit solve reduces to a cell-only block system; on general meshes
the full block system is assembled into a frozen sparsity pattern.

All states keep |m_E| = 1 after stepping; the low-order field terms (stray,
external, anisotropy) always enter lagged at t_j.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import FrozenPatternMatrix, SolveStats, SolverConfig, solve
from .mesh import DIRICHLET, NEUMANN, Mesh
from .mimetic import MimeticOperators

ExternalField = Union[None, np.ndarray, Callable[[float], np.ndarray]]


class StepError(RuntimeError):
    pass


class CourantError(StepError):
    pass


@dataclass
class MaterialParams:
    """Dimensionless material data entering the effective field.

    alpha = 0 selects the conservative (Schrodinger-map) limit;
    gyromagnetic = False drops the precession term (harmonic map heat flow).
    h_external may be a constant 3-vector, a per-cell array, or a callable
    of time returning either.  The stray-field operator is attached when
    enabled (see strayfield.StrayFieldOperator).
    """

    alpha: float
    eta: float = 1.0
    q_aniso: float = 0.0
    h_external: ExternalField = None
    stray: Optional[object] = None
    gyromagnetic: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.eta <= 0:
            raise ValueError("eta must be positive")

    def external_at(self, t: float, n_cells: int) -> Optional[np.ndarray]:
        h = self.h_external
        if callable(h):
            h = h(t)
        if h is None:
            return None
        h = np.asarray(h, dtype=float)
        if h.ndim == 1:
            h = np.broadcast_to(h, (n_cells, 3))
        return h


@dataclass(frozen=True)
class ThetaScheme:
    """Time discretization: theta = 0 explicit, theta = 1 linearly implicit."""

    theta: int
    k: float
    courant_guard: Optional[float] = None  # bound on eta k / h^2, explicit only

    def __post_init__(self):
        if self.theta not in (0, 1):
            raise ValueError("theta must be 0 or 1")
        if self.k <= 0:
            raise ValueError("time step must be positive")


@dataclass
class LLState:
    """Snapshot of the evolution; edge values and flux are filled lazily.

    ``m_edges`` holds the edge magnetizations the scheme actually used at
    this time level: the flux-continuity closure for the explicit scheme,
    the linear-solve values for the implicit one.  The exchange energy is
    always evaluated with the closure of the projected ``m`` (cached
    separately), since that is the quantity the renormalization argument
    controls.
    """

    t: float
    m: np.ndarray                       # (n_cells, 3), unit vectors
    m_edges: Optional[np.ndarray] = None  # (n_dofs, 3) scheme-level edges
    p: Optional[np.ndarray] = None        # (n_dofs, 3) flux -GRAD(m, m~)
    _closure_edges: Optional[np.ndarray] = None
    _energy: Optional[float] = None

    def unit_norm_violation(self) -> float:
        return float(np.abs(np.sqrt((self.m ** 2).sum(axis=1)) - 1.0).max())

    def average_m(self) -> np.ndarray:
        return self.m.mean(axis=0)


def low_order_field(m: np.ndarray, alpha: float, h_bar: np.ndarray,
                    gyromagnetic: bool = True) -> np.ndarray:
    """f(m) = -m x h_bar - alpha m x (m x h_bar), evaluated per cell."""
    c = np.cross(m, h_bar)
    f = -alpha * np.cross(m, c)
    if gyromagnetic:
        f -= c
    return f


class LLSolver:
    """Advances the mixed mimetic Landau-Lifshitz discretization in time."""

    def __init__(self, ops: MimeticOperators, params: MaterialParams,
                 scheme: ThetaScheme,
                 solver_config: Optional[SolverConfig] = None,
                 dirichlet: Optional[Callable[[np.ndarray, float], np.ndarray]] = None):
        if abs(params.eta - ops.eta) > 1e-12 * max(params.eta, ops.eta):
            raise ValueError(
                f"material eta {params.eta} does not match the eta folded into "
                f"the operators ({ops.eta})")
        self.ops = ops
        self.mesh = ops.mesh
        self.params = params
        self.scheme = scheme
        self.config = solver_config or SolverConfig()
        self.dirichlet = dirichlet
        mesh = self.mesh

        if ops.dirichlet_dofs.size and dirichlet is None:
            raise ValueError("mesh has Dirichlet faces but no boundary data given")
        self._dir_points = mesh.face_centroid[mesh.dof_face[ops.dirichlet_dofs]]

        # Diagonal-T detection enables exact edge elimination.
        self._tau = None
        if all(np.abs(g.T - g.T * np.eye(g.n)).max() <
               1e-12 * np.abs(g.T).max() for g in ops.groups):
            tau = np.zeros(mesh.n_dofs)
            cnt = np.zeros(mesh.n_dofs)
            for g in ops.groups:
                diag = np.einsum("kii->ki", g.T)
                np.add.at(tau, g.dof.ravel(), diag.ravel())
                np.add.at(cnt, g.dof.ravel(), 1.0)
            self._tau = tau        # sum of the per-side diagonal entries
            self._tau_count = cnt
        self._edge_lu = None
        self._implicit = None
        self._warm = None
        self._courant_warned = False

    # -- boundary data -------------------------------------------------------

    def _dirichlet_values(self, t: float) -> Optional[np.ndarray]:
        if self.ops.dirichlet_dofs.size == 0:
            return None
        return np.asarray(self.dirichlet(self._dir_points, t), dtype=float)

    # -- edge closure ---------------------------------------------------------

    def edge_closure(self, m: np.ndarray, t: float) -> np.ndarray:
        """Solve the flux-continuity system for the edge magnetizations."""
        ops, mesh = self.ops, self.mesh
        dval = self._dirichlet_values(t)
        if self._tau is not None:
            # Diagonal T: every edge value is a tau-weighted cell average.
            num = np.zeros((mesh.n_dofs, 3))
            for g in ops.groups:
                diag = np.einsum("kii->ki", g.T)
                vals = diag[:, :, None] * m[g.cells][:, None, :]
                np.add.at(num, g.dof.ravel(), vals.reshape(-1, 3))
            m_edges = num / self._tau[:, None]
            if dval is not None:
                m_edges[ops.dirichlet_dofs] = dval
            return m_edges

        free = ops.free_dofs
        if self._edge_lu is None:
            Tff = ops.T_ff.tocsc()
            self._edge_lu = spla.splu(Tff[free][:, free])
            self._edge_dir_block = (ops.T_ff[free][:, ops.dirichlet_dofs]
                                    if ops.dirichlet_dofs.size else None)
        rhs = -(ops.T_fE[free] @ m)
        if dval is not None:
            rhs -= self._edge_dir_block @ dval
        m_edges = np.zeros((mesh.n_dofs, 3))
        m_edges[free] = self._edge_lu.solve(rhs)
        if dval is not None:
            m_edges[ops.dirichlet_dofs] = dval
        return m_edges

    def ensure_closure(self, state: LLState) -> LLState:
        if state.m_edges is None:
            state.m_edges = self.edge_closure(state.m, state.t)
            state._closure_edges = state.m_edges
        return state

    def flux(self, state: LLState) -> np.ndarray:
        """Dof-stored flux -GRAD(m, m_edges) at the state's edge values."""
        self.ensure_closure(state)
        if state.p is None:
            state.p = self.ops.flux_field(state.m, state.m_edges)
        return state.p

    def exchange_energy(self, state: LLState) -> float:
        if state._energy is None:
            if state._closure_edges is None:
                state._closure_edges = self.edge_closure(state.m, state.t)
            state._energy = self.ops.exchange_energy(state.m, state._closure_edges)
        return state._energy

    def energies(self, state: LLState) -> dict:
        """Exchange, stray, Zeeman and anisotropy contributions plus total."""
        p = self.params
        out = {"exchange": self.exchange_energy(state)}
        area = self.mesh.cell_area
        if p.stray is not None:
            hs = p.stray.apply(state.m)
            out["stray"] = -0.5 * float(np.einsum("e,ec,ec->", area, hs, state.m))
        he = p.external_at(state.t, self.mesh.n_cells)
        if he is not None:
            out["zeeman"] = -float(np.einsum("e,ec,ec->", area, he, state.m))
        if p.q_aniso:
            out["anisotropy"] = 0.5 * p.q_aniso * float(
                (area[:, None] * state.m[:, 1:] ** 2).sum())
        out["total"] = sum(out.values())
        return out

    # -- common pieces --------------------------------------------------------

    def _h_bar(self, m: np.ndarray, t: float) -> Optional[np.ndarray]:
        p = self.params
        h = None
        he = p.external_at(t, self.mesh.n_cells)
        if he is not None:
            h = he.copy()
        if p.stray is not None:
            hs = p.stray.apply(m)
            h = hs if h is None else h + hs
        if p.q_aniso:
            aniso = np.zeros_like(m)
            aniso[:, 1] = -p.q_aniso * m[:, 1]
            aniso[:, 2] = -p.q_aniso * m[:, 2]
            h = aniso if h is None else h + aniso
        return h

    def _project(self, m_hat: np.ndarray) -> np.ndarray:
        norm = np.sqrt((m_hat ** 2).sum(axis=1))
        if norm.min() < 0.5:
            raise StepError(
                f"projection guard: |m_hat| dropped to {norm.min():.3f}; "
                "time step too large or solver failure")
        return m_hat / norm[:, None]

    def initial_state(self, m0: np.ndarray, t: float = 0.0) -> LLState:
        m0 = np.asarray(m0, dtype=float)
        norm = np.sqrt((m0 ** 2).sum(axis=1))
        if np.abs(norm - 1.0).max() > 1e-8:
            raise ValueError("initial magnetization must be unit length per cell")
        return LLState(t=t, m=m0 / norm[:, None])

    # -- explicit scheme ------------------------------------------------------

    def _divergence_of_gradient(self, m: np.ndarray, m_edges: np.ndarray) -> np.ndarray:
        """DIV of p = -GRAD(m, m~), cellwise, without storing the flux."""
        D = np.zeros((self.mesh.n_cells, 3))
        for g, q in self.ops.gradient_cellwise(m, m_edges):
            D[g.cells] = -np.einsum("ki,kic->kc", g.length, q) / g.area[:, None]
        return D

    def explicit_step(self, state: LLState) -> LLState:
        scheme, params = self.scheme, self.params
        if scheme.theta != 0:
            raise StepError("explicit_step requires theta = 0")
        ratio = params.eta * scheme.k / self.mesh.h ** 2
        if scheme.courant_guard is not None and ratio > scheme.courant_guard:
            raise CourantError(
                f"eta k / h^2 = {ratio:.3e} exceeds the guard {scheme.courant_guard:.3e}")
        self.ensure_closure(state)
        D = self._divergence_of_gradient(state.m, state.m_edges)
        m = state.m
        rhs = self.params.alpha * ((m * D).sum(axis=1)[:, None] * m - D)
        if params.gyromagnetic:
            rhs += np.cross(m, D)
        h_bar = self._h_bar(m, state.t)
        if h_bar is not None:
            rhs += low_order_field(m, params.alpha, h_bar, params.gyromagnetic)
        m_new = self._project(m + scheme.k * rhs)
        return LLState(t=state.t + scheme.k, m=m_new)

    # -- implicit scheme ------------------------------------------------------

    def _gyro_matrix(self, m: np.ndarray) -> np.ndarray:
        """A_hat = alpha (I - m m^T) - skew(m), per cell, (n_cells, 3, 3)."""
        nc = m.shape[0]
        a = self.params.alpha
        A = np.zeros((nc, 3, 3))
        A[:, 0, 0] = A[:, 1, 1] = A[:, 2, 2] = a
        A -= a * m[:, :, None] * m[:, None, :]
        if self.params.gyromagnetic:
            A[:, 0, 1] += m[:, 2]
            A[:, 1, 0] -= m[:, 2]
            A[:, 0, 2] -= m[:, 1]
            A[:, 2, 0] += m[:, 1]
            A[:, 1, 2] += m[:, 0]
            A[:, 2, 1] -= m[:, 0]
        return A

    def _build_implicit(self) -> None:
        if self._tau is not None:
            self._implicit = _CondensedImplicit(self)
        else:
            self._implicit = _BlockImplicit(self)

    def implicit_step(self, state: LLState) -> tuple[LLState, SolveStats]:
        if self.scheme.theta != 1:
            raise StepError("implicit_step requires theta = 1")
        if self._implicit is None:
            self._build_implicit()
        m = state.m
        A_hat = self._gyro_matrix(m)
        b_cell = m.copy()
        h_bar = self._h_bar(m, state.t)
        if h_bar is not None:
            b_cell += self.scheme.k * low_order_field(
                m, self.params.alpha, h_bar, self.params.gyromagnetic)
        dval = self._dirichlet_values(state.t + self.scheme.k)
        m_hat, m_edges, stats = self._implicit.solve(A_hat, b_cell, dval)
        if m_edges is None:
            # Condensed path: the eliminated edge values are the closure of
            # the unprojected solution.
            m_edges = self.edge_closure(m_hat, state.t + self.scheme.k)
        m_new = self._project(m_hat)
        new = LLState(t=state.t + self.scheme.k, m=m_new, m_edges=m_edges)
        return new, stats

    def step(self, state: LLState) -> LLState:
        if self.scheme.theta == 0:
            return self.explicit_step(state)
        new, _ = self.implicit_step(state)
        return new

    # -- driver ---------------------------------------------------------------

    def run(self, m0: Union[np.ndarray, LLState], final_time: float,
            callbacks: Sequence[Callable[[int, LLState], None]] = (),
            record_every: int = 0,
            stop_condition: Optional[Callable[[int, LLState], bool]] = None,
            ) -> "Trajectory":
        """Advance J = round(T/k) steps, invoking callbacks after each step.

        When ``record_every`` is positive, (t, <m>, exchange energy) triples
        are collected every that many steps (and at both ends).
        """
        state = m0 if isinstance(m0, LLState) else self.initial_state(m0)
        k = self.scheme.k
        steps = final_time / k
        n_steps = int(round(steps)) if abs(steps - round(steps)) < 1e-9 else int(steps)
        traj = Trajectory()
        if record_every:
            traj.record(state, self)
        prev_energy = None
        for j in range(n_steps):
            state = self.step(state)
            if record_every and ((j + 1) % record_every == 0 or j + 1 == n_steps):
                traj.record(state, self)
                if (self.scheme.theta == 0 and self.scheme.courant_guard is None
                        and prev_energy is not None
                        and traj.exchange_energy[-1] > 1.05 * prev_energy
                        and not self._courant_warned):
                    warnings.warn("exchange energy is growing; the explicit step "
                                  "likely violates the stability threshold")
                    self._courant_warned = True
                prev_energy = traj.exchange_energy[-1]
            for cb in callbacks:
                cb(j + 1, state)
            if stop_condition is not None and stop_condition(j + 1, state):
                break
        traj.final_state = state
        return traj


class Trajectory:
    """Recorded time series plus the final state."""

    def __init__(self):
        self.t: list[float] = []
        self.average_m: list[np.ndarray] = []
        self.exchange_energy: list[float] = []
        self.final_state: Optional[LLState] = None

    def record(self, state: LLState, solver: LLSolver) -> None:
        self.t.append(state.t)
        self.average_m.append(state.average_m())
        self.exchange_energy.append(solver.exchange_energy(state))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (np.asarray(self.t), np.asarray(self.average_m),
                np.asarray(self.exchange_energy))


# ---------------------------------------------------------------------------
# implicit system backends
# ---------------------------------------------------------------------------

class _CondensedImplicit:
    """Cell-only implicit system after exact elimination of diagonal-T edges.

    For every interior face the edge value is the tau-weighted average of
    the two adjacent cells, which yields a face coupling weight
    w_f = tau_1 tau_2 / (tau_1 + tau_2); Dirichlet faces couple with their
    full one-sided weight to the boundary value.
    """

    def __init__(self, solver: LLSolver):
        self.solver = solver
        ops, mesh = solver.ops, solver.mesh
        k = solver.scheme.k

        rows_c, cols_c, w_int = [], [], []
        sigma = np.zeros(mesh.n_cells)
        dir_cell, dir_dof, dir_w = [], [], []
        kind = mesh.boundary_kind[mesh.dof_face]

        side_tau = np.zeros((mesh.n_dofs, 2))
        side_cell = -np.ones((mesh.n_dofs, 2), dtype=np.int64)
        fill = np.zeros(mesh.n_dofs, dtype=np.int64)
        for g in ops.groups:
            diag = np.einsum("kii->ki", g.T)
            for row in range(g.cells.size):
                for i in range(g.n):
                    d = g.dof[row, i]
                    s = fill[d]
                    side_tau[d, s] = diag[row, i]
                    side_cell[d, s] = g.cells[row]
                    fill[d] += 1

        for d in range(mesh.n_dofs):
            c0, c1 = side_cell[d]
            t0, t1 = side_tau[d]
            if kind[d] == DIRICHLET:
                dir_cell.append(c0)
                dir_dof.append(d)
                dir_w.append(t0)
                sigma[c0] += t0
            elif c1 == -1:
                continue  # homogeneous Neumann: no coupling
            else:
                w = t0 * t1 / (t0 + t1)
                sigma[c0] += w
                sigma[c1] += w
                rows_c.extend((c0, c1))
                cols_c.extend((c1, c0))
                w_int.extend((w, w))

        self.k_over_area = k / mesh.cell_area
        self.sigma = sigma
        self.nbr_rows = np.asarray(rows_c, dtype=np.int64)
        self.nbr_cols = np.asarray(cols_c, dtype=np.int64)
        self.nbr_w = np.asarray(w_int)
        self.dir_cell = np.asarray(dir_cell, dtype=np.int64)
        self.dir_dof = np.asarray(dir_dof, dtype=np.int64)
        self.dir_w = np.asarray(dir_w)
        self.dir_pos = {int(d): i for i, d in
                        enumerate(solver.ops.dirichlet_dofs)}
        nc = mesh.n_cells
        bi = np.arange(3)
        rr = (3 * np.arange(nc)[:, None, None] + bi[None, :, None])
        cc = (3 * np.arange(nc)[:, None, None] + bi[None, None, :])
        rows = [np.broadcast_to(rr, (nc, 3, 3)).ravel()]
        cols = [np.broadcast_to(cc, (nc, 3, 3)).ravel()]
        ne = self.nbr_rows.size
        rr = (3 * self.nbr_rows[:, None, None] + bi[None, :, None])
        cc = (3 * self.nbr_cols[:, None, None] + bi[None, None, :])
        rows.append(np.broadcast_to(rr, (ne, 3, 3)).ravel())
        cols.append(np.broadcast_to(cc, (ne, 3, 3)).ravel())
        self.pattern = FrozenPatternMatrix(
            np.concatenate(rows), np.concatenate(cols), (3 * nc, 3 * nc))
        self._x_warm = None

    def solve(self, A_hat: np.ndarray, b_cell: np.ndarray,
              dval: Optional[np.ndarray]) -> tuple[np.ndarray, SolveStats]:
        nc = b_cell.shape[0]
        koa = self.k_over_area
        eye = np.eye(3)
        diag_blocks = eye[None] + (koa * self.sigma)[:, None, None] * A_hat
        nbr_blocks = -(koa[self.nbr_rows] * self.nbr_w)[:, None, None] \
            * A_hat[self.nbr_rows]
        self.pattern.set_data(np.concatenate(
            [diag_blocks.ravel(), nbr_blocks.ravel()]))
        b = b_cell.copy()
        if dval is not None and self.dir_cell.size:
            vals = dval[[self.dir_pos[int(d)] for d in self.dir_dof]]
            contrib = (koa[self.dir_cell, None] * self.dir_w[:, None]
                       * np.einsum("kij,kj->ki", A_hat[self.dir_cell], vals))
            np.add.at(b, self.dir_cell, contrib)
        x, stats = solve(self.pattern.matrix(), b.ravel(),
                         self.solver.config, x0=self._x_warm)
        self._x_warm = x
        return x.reshape(nc, 3), None, stats


class _BlockImplicit:
    """Full (cells + free edges) implicit block system on general meshes."""

    def __init__(self, solver: LLSolver):
        self.solver = solver
        ops, mesh = solver.ops, solver.mesh
        k = solver.scheme.k
        nc = mesh.n_cells
        free = ops.free_dofs
        self.free = free
        nf = free.size
        self.n = 3 * (nc + nf)
        dof_pos = -np.ones(mesh.n_dofs, dtype=np.int64)
        dof_pos[free] = np.arange(nf)
        dir_pos = -np.ones(mesh.n_dofs, dtype=np.int64)
        dir_pos[ops.dirichlet_dofs] = np.arange(ops.dirichlet_dofs.size)

        # Per-cell coefficients: c_E = (k/|E|) e^T T e, w_E = (k/|E|) e^T T.
        bi = np.arange(3)

        def block(rows_ent, cols_ent):
            rr = 3 * rows_ent[:, None, None] + bi[None, :, None]
            cc = 3 * cols_ent[:, None, None] + bi[None, None, :]
            shape = (rows_ent.size, 3, 3)
            return (np.broadcast_to(rr, shape).ravel(),
                    np.broadcast_to(cc, shape).ravel())

        rows, cols = [], []
        # variable part first: cell-cell diagonal, then cell-edge
        r, c = block(np.arange(nc), np.arange(nc))
        rows.append(r), cols.append(c)

        ef_cell, ef_dofpos, ef_w = [], [], []       # cell-edge (free)
        efd_cell, efd_dirpos, efd_w = [], [], []    # cell-edge (Dirichlet)
        self.cE = np.zeros(nc)
        fe_rows, fe_cells, fe_vals = [], [], []     # edge-cell, constant
        ff_rows, ff_cols, ff_vals = [], [], []      # edge-edge, constant
        fd_rows, fd_dirpos, fd_vals = [], [], []    # edge rows vs Dirichlet cols

        for g in ops.groups:
            koa = k / g.area
            w = np.einsum("kij->kj", g.T)           # e^T T per local face
            self.cE[g.cells] = koa * w.sum(axis=1)
            for row in range(g.cells.size):
                cell = g.cells[row]
                for i in range(g.n):
                    d = g.dof[row, i]
                    fp = dof_pos[d]
                    if fp >= 0:
                        ef_cell.append(cell)
                        ef_dofpos.append(fp)
                        ef_w.append(koa[row] * w[row, i])
                    else:
                        efd_cell.append(cell)
                        efd_dirpos.append(dir_pos[d])
                        efd_w.append(koa[row] * w[row, i])
                Te = g.T[row].sum(axis=1)
                for i in range(g.n):
                    d = g.dof[row, i]
                    fp = dof_pos[d]
                    if fp < 0:
                        continue
                    fe_rows.append(fp)
                    fe_cells.append(cell)
                    fe_vals.append(-Te[i])
                    for jloc in range(g.n):
                        dj = g.dof[row, jloc]
                        jp = dof_pos[dj]
                        if jp >= 0:
                            ff_rows.append(fp)
                            ff_cols.append(jp)
                            ff_vals.append(g.T[row, i, jloc])
                        else:
                            fd_rows.append(fp)
                            fd_dirpos.append(dir_pos[dj])
                            fd_vals.append(g.T[row, i, jloc])

        self.ef_cell = np.asarray(ef_cell, dtype=np.int64)
        self.ef_w = np.asarray(ef_w)
        ef_dofpos = np.asarray(ef_dofpos, dtype=np.int64)
        r, c = block(self.ef_cell, nc + ef_dofpos)
        rows.append(r), cols.append(c)
        self.n_var = nc * 9 + self.ef_cell.size * 9

        # constant part: edge-cell and edge-edge, component-diagonal
        fe_rows = np.asarray(fe_rows, dtype=np.int64)
        fe_cells = np.asarray(fe_cells, dtype=np.int64)
        fe_vals = np.asarray(fe_vals)
        ff_rows = np.asarray(ff_rows, dtype=np.int64)
        ff_cols = np.asarray(ff_cols, dtype=np.int64)
        ff_vals = np.asarray(ff_vals)

        def diag3(rows_ent, cols_ent):
            rr = 3 * rows_ent[:, None] + bi[None, :]
            cc = 3 * cols_ent[:, None] + bi[None, :]
            return rr.ravel(), cc.ravel()

        r, c = diag3(nc + fe_rows, fe_cells)
        rows.append(r), cols.append(c)
        r, c = diag3(nc + ff_rows, nc + ff_cols)
        rows.append(r), cols.append(c)
        self.const_data = np.concatenate([
            np.repeat(fe_vals, 3), np.repeat(ff_vals, 3)])

        self.pattern = FrozenPatternMatrix(
            np.concatenate(rows), np.concatenate(cols), (self.n, self.n))

        self.efd_cell = np.asarray(efd_cell, dtype=np.int64)
        self.efd_dirpos = np.asarray(efd_dirpos, dtype=np.int64)
        self.efd_w = np.asarray(efd_w)
        self.edge_dir = (sp.csr_matrix(
            (np.asarray(fd_vals), (np.asarray(fd_rows), np.asarray(fd_dirpos))),
            shape=(nf, max(1, ops.dirichlet_dofs.size)))
            if fd_rows else None)
        self._x_warm = None
        self.nc, self.nf = nc, nf

    def solve(self, A_hat: np.ndarray, b_cell: np.ndarray,
              dval: Optional[np.ndarray]) -> tuple[np.ndarray, SolveStats]:
        nc, nf = self.nc, self.nf
        eye = np.eye(3)
        diag_blocks = eye[None] + self.cE[:, None, None] * A_hat
        ef_blocks = -self.ef_w[:, None, None] * A_hat[self.ef_cell]
        self.pattern.set_data(np.concatenate([
            diag_blocks.ravel(), ef_blocks.ravel(), self.const_data]))

        b = np.zeros(self.n)
        bc = b_cell.copy()
        if dval is not None:
            if self.efd_cell.size:
                contrib = (self.efd_w[:, None] * np.einsum(
                    "kij,kj->ki", A_hat[self.efd_cell], dval[self.efd_dirpos]))
                np.add.at(bc, self.efd_cell, contrib)
            if self.edge_dir is not None:
                b[3 * nc:] = (-(self.edge_dir @ dval)).ravel()
        b[:3 * nc] = bc.ravel()

        x, stats = solve(self.pattern.matrix(), b, self.solver.config,
                         x0=self._x_warm)
        self._x_warm = x
        m_edges = np.zeros((self.solver.mesh.n_dofs, 3))
        m_edges[self.free] = x[3 * nc:].reshape(nf, 3)
        if dval is not None:
            m_edges[self.solver.ops.dirichlet_dofs] = dval
        return x[:3 * nc].reshape(nc, 3), m_edges, stats
