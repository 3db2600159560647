"""Uniform-versus-locally-refined accuracy on the steady transition layer.

Each mesh is stepped to the discrete steady state of the manufactured
equilibrium (Dirichlet data and external field from the closed form), then
the cell errors against the exact layer are tabulated per cell count.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from .. import mesh as meshmod
from ..analytic import (SteadySolutionParams, error_norms, project_flux,
                        project_to_cells, steady_external_field,
                        steady_solution, steady_solution_jacobian)
from ..llsolver import LLSolver, MaterialParams, ThetaScheme
from ..mimetic import MimeticOperators
from .config import SimConfig
from . import report


def relax_to_steady(mesh, cfg: SimConfig, params_solution: SteadySolutionParams,
                    alpha: float, k: float, final_time: float,
                    steady_tol: float) -> dict:
    gamma = cfg.section("gamma", {"mode": "trace"})
    ops = MimeticOperators(mesh, gamma_mode=gamma.get("mode", "trace"))
    h_e = steady_external_field(mesh.cell_centroid, params_solution)

    def dirichlet(points, t):
        return steady_solution(points, params_solution)

    solver = LLSolver(ops, MaterialParams(alpha=alpha, h_external=h_e),
                      ThetaScheme(theta=1, k=k),
                      solver_config=cfg.solver_config(), dirichlet=dirichlet)
    m = project_to_cells(lambda x: steady_solution(x, params_solution), mesh)
    state = solver.initial_state(m)
    steps = int(round(final_time / k))
    update = np.inf
    for j in range(steps):
        new = solver.step(state)
        update = float(np.abs(new.m - state.m).max())
        state = new
        if update < steady_tol:
            break
    mi = project_to_cells(lambda x: steady_solution(x, params_solution), mesh)
    pi = project_flux(lambda x: steady_solution_jacobian(x, params_solution), mesh)
    ph = solver.flux(state)
    linf, q, f = error_norms(state.m, mi, ph, pi, ops)
    return {"n_cells": mesh.n_cells, "linf": linf, "q": q, "f": f,
            "steps": j + 1, "final_update": update}


def run_amr_comparison(cfg: SimConfig, out_dir, render_figures: bool = True,
                       skip_largest: bool = False) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.section("time")
    alpha = float(cfg.section("material").get("alpha", 1.0))
    k = float(tcfg.get("k", 0.01))
    final_time = float(tcfg.get("final_time", 3.0))
    steady_tol = float(tcfg.get("steady_tol", 1e-11))
    sol_par = SteadySolutionParams()

    uniform_rows, refined_rows = [], []
    uni = cfg.section("uniform").get("resolutions", [16, 32, 64, 128])
    if skip_largest:
        uni = uni[:-1]
    for n in uni:
        t0 = time.time()
        mesh = meshmod.build_uniform_quad_mesh(n, n, boundary="dirichlet")
        row = relax_to_steady(mesh, cfg, sol_par, alpha, k, final_time, steady_tol)
        row.update(kind="uniform", label=f"{n}x{n}", seconds=time.time() - t0)
        uniform_rows.append(row)

    cases = cfg.section("refined").get("cases", [])
    if skip_largest:
        cases = cases[:-1]
    for case in cases:
        t0 = time.time()
        bands = [tuple(b) for b in case["bands"]]
        mesh = meshmod.build_locally_refined_mesh(
            int(case["base"]), len(bands), bands[-1], bands=bands,
            boundary="dirichlet")
        row = relax_to_steady(mesh, cfg, sol_par, alpha, k, final_time, steady_tol)
        row.update(kind="refined", label=f"base{case['base']}",
                   seconds=time.time() - t0)
        refined_rows.append(row)

    rows_out = [[r["kind"], r["label"], r["n_cells"], r["linf"], r["q"],
                 r["steps"], r["final_update"], r["seconds"]]
                for r in uniform_rows + refined_rows]
    report.write_csv(
        out_dir / f"{cfg.name}.csv",
        ["steady transition-layer errors: uniform vs locally refined meshes",
         f"implicit steps k={k}, relaxed until max|dm| < {steady_tol} per step",
         "columns: mesh kind, label, cells, Linf error, Q-norm error, steps, "
         "final update, seconds"],
        ["kind", "label", "cells", "linf", "q_norm", "steps", "final_update",
         "seconds"],
        rows_out)

    if render_figures:
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for rows, style, name in ((uniform_rows, "o-", "uniform"),
                                  (refined_rows, "s--", "locally refined")):
            ax.loglog([r["n_cells"] for r in rows], [r["linf"] for r in rows],
                      style, label=f"{name} (Linf)")
            ax.loglog([r["n_cells"] for r in rows], [r["q"] for r in rows],
                      style, alpha=0.5, label=f"{name} (Q)")
        ax.set_xlabel("number of cells")
        ax.set_ylabel("error")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        ax.set_title("steady layer: uniform vs refined")
        fig.tight_layout()
        fig.savefig(out_dir / f"{cfg.name}.png", dpi=140)
        plt.close(fig)

    return {"uniform": uniform_rows, "refined": refined_rows}
