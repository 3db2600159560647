"""Closed-form solutions, discrete projections and error norms.

Two reference solutions drive the verification experiments: a traveling
plane-wave solution of the exchange-only dynamics on the unit square
(periodic or Dirichlet data), and a one-dimensional steady transition layer
balanced by a manufactured external field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .mimetic import MimeticOperators


@dataclass(frozen=True)
class ExactSolutionParams:
    """Plane-wave solution parameters; alpha > 0 (d and g divide by it)."""

    alpha: float
    beta: float = np.pi / 12
    kappa: float = 2 * np.pi

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def d(self, t: float) -> float:
        e = np.exp(4 * self.kappa ** 2 * self.alpha * t)
        return np.sqrt(np.sin(self.beta) ** 2 + e * np.cos(self.beta) ** 2)

    def g(self, t: float) -> float:
        e = np.exp(2 * self.kappa ** 2 * self.alpha * t)
        return np.log((self.d(t) + e * np.cos(self.beta))
                      / (1 + np.cos(self.beta))) / self.alpha


def exact_solution(x: np.ndarray, t: float, params: ExactSolutionParams) -> np.ndarray:
    """Unit-length plane-wave magnetization at points x (..., 2)."""
    x = np.asarray(x, dtype=float)
    d = params.d(t)
    g = params.g(t)
    phase = params.kappa * (x[..., 0] + x[..., 1]) + g
    sb, cb = np.sin(params.beta), np.cos(params.beta)
    ez = np.exp(2 * params.kappa ** 2 * params.alpha * t)
    m = np.empty(x.shape[:-1] + (3,))
    m[..., 0] = sb * np.cos(phase) / d
    m[..., 1] = sb * np.sin(phase) / d
    m[..., 2] = ez * cb / d
    return m


def exact_solution_jacobian(x: np.ndarray, t: float,
                            params: ExactSolutionParams) -> np.ndarray:
    """Spatial Jacobian J[..., u, d] = d m_u / d x_d."""
    x = np.asarray(x, dtype=float)
    d = params.d(t)
    g = params.g(t)
    phase = params.kappa * (x[..., 0] + x[..., 1]) + g
    sb = np.sin(params.beta)
    J = np.zeros(x.shape[:-1] + (3, 2))
    dx = -params.kappa * sb * np.sin(phase) / d
    dy = params.kappa * sb * np.cos(phase) / d
    J[..., 0, 0] = dx
    J[..., 0, 1] = dx
    J[..., 1, 0] = dy
    J[..., 1, 1] = dy
    return J


@dataclass(frozen=True)
class SteadySolutionParams:
    """In-plane transition layer m = (sin phi, cos phi, 0)."""

    b: float = 1.0
    s: float = 20.0

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("s must be positive")

    def phi(self, x1):
        u = np.exp(-self.s * np.pi * (np.asarray(x1) - self.b / 2))
        return np.pi / (1.0 + u)

    def phi_prime(self, x1):
        sp = self.s * np.pi
        u = np.exp(-sp * (np.asarray(x1) - self.b / 2))
        return np.pi * sp * u / (1.0 + u) ** 2

    def phi_second(self, x1):
        sp = self.s * np.pi
        u = np.exp(-sp * (np.asarray(x1) - self.b / 2))
        return np.pi * sp ** 2 * u * (u - 1.0) / (1.0 + u) ** 3


def steady_solution(x: np.ndarray,
                    params: SteadySolutionParams = SteadySolutionParams()) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    phi = params.phi(x[..., 0])
    m = np.zeros(x.shape[:-1] + (3,))
    m[..., 0] = np.sin(phi)
    m[..., 1] = np.cos(phi)
    return m


def steady_solution_jacobian(x: np.ndarray,
                             params: SteadySolutionParams = SteadySolutionParams()
                             ) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    phi = params.phi(x[..., 0])
    dphi = params.phi_prime(x[..., 0])
    J = np.zeros(x.shape[:-1] + (3, 2))
    J[..., 0, 0] = dphi * np.cos(phi)
    J[..., 1, 0] = -dphi * np.sin(phi)
    return J


def steady_external_field(x: np.ndarray,
                          params: SteadySolutionParams = SteadySolutionParams()
                          ) -> np.ndarray:
    """Manufactured field making the transition layer an equilibrium.

    Componentwise h_e = -Lap m, so the effective field Lap m + h_e vanishes
    identically on the exact solution.
    """
    x = np.asarray(x, dtype=float)
    phi = params.phi(x[..., 0])
    d1 = params.phi_prime(x[..., 0])
    d2 = params.phi_second(x[..., 0])
    h = np.zeros(x.shape[:-1] + (3,))
    h[..., 0] = d1 ** 2 * np.sin(phi) - d2 * np.cos(phi)
    h[..., 1] = d1 ** 2 * np.cos(phi) + d2 * np.sin(phi)
    return h


# ---------------------------------------------------------------------------
# projections onto the discrete spaces
# ---------------------------------------------------------------------------

def project_to_cells(fn, mesh: Mesh) -> np.ndarray:
    """Cell interpolant by centroid sampling: m^I_E = m(x_E)."""
    return np.asarray(fn(mesh.cell_centroid), dtype=float)


def project_flux(jacobian_fn, mesh: Mesh, eta: float = 1.0) -> np.ndarray:
    """Flux interpolant p^I: -eta (grad m) . n at face-dof centroids."""
    pts = mesh.face_centroid[mesh.dof_face]
    nrm = mesh.face_normal[mesh.dof_face]
    J = np.asarray(jacobian_fn(pts), dtype=float)
    return -eta * np.einsum("kud,kd->ku", J, nrm)


def error_norms(m_h: np.ndarray, m_i: np.ndarray, p_h: np.ndarray,
                p_i: np.ndarray, ops: MimeticOperators
                ) -> tuple[float, float, float]:
    """(L_inf, Q-norm, F-norm) errors of magnetization and flux."""
    dm = m_h - m_i
    linf = float(np.sqrt((dm ** 2).sum(axis=1)).max())
    q = ops.norm_Q(dm)
    f = ops.norm_F(p_h - p_i)
    return linf, q, f


def convergence_rate(errors, hs) -> float:
    """Least-squares slope of log(error) against log(h)."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    mask = e > 0
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[mask]), np.log(e[mask]), 1)[0])


# ---------------------------------------------------------------------------
# S-state preparation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SStateProtocol:
    """Field-annealing protocol for the thin-film S-state.

    A saturating field along [1,1,1] is stepped down to zero (one implicit
    step per decrement), followed by zero-field relaxation.  All quantities
    are dimensionless; equilibria do not depend on the damping, so a large
    ``damping`` accelerates the relaxation without changing the outcome.
    """

    field_start: float
    field_step: float
    k: float
    relax_time: float
    damping: float = 1.0
    settle_tolerance: float = 1e-4


def generate_s_state(ops: MimeticOperators, stray,
                     protocol: SStateProtocol, solver_config=None) -> np.ndarray:
    """Relax a saturated film into the S-state; returns unit cell vectors."""
    from .llsolver import LLSolver, MaterialParams, ThetaScheme

    mesh = ops.mesh
    direction = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
    amplitude = {"value": protocol.field_start}

    def h_ext(t):
        return amplitude["value"] * direction

    params = MaterialParams(alpha=protocol.damping, eta=ops.eta,
                            h_external=h_ext, stray=stray)
    solver = LLSolver(ops, params, ThetaScheme(theta=1, k=protocol.k),
                      solver_config=solver_config)
    m0 = np.broadcast_to(direction, (mesh.n_cells, 3)).copy()
    state = solver.initial_state(m0)
    while amplitude["value"] > 0.0:
        state = solver.step(state)
        amplitude["value"] = max(0.0, amplitude["value"] - protocol.field_step)
    relax_steps = max(1, int(round(protocol.relax_time / protocol.k)))
    energies = []
    for _ in range(relax_steps):
        state = solver.step(state)
        energies.append(solver.energies(state)["total"])
    tail = max(2, relax_steps // 10)
    drift = abs(energies[-1] - energies[-tail]) / max(abs(energies[-1]), 1e-30)
    if drift > protocol.settle_tolerance:
        raise RuntimeError(
            f"S-state relaxation did not settle: tail energy drift {drift:.2e}")
    return state.m
