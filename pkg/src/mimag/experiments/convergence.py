"""Convergence studies against the analytic plane-wave solution.

Covers the explicit and implicit uniform-mesh tables, the distorted-mesh
tables (periodic) and the Dirichlet tables on uniform, randomized, smoothly
distorted, polygonal and disk meshes.  Uniform periodic runs exploit the
exact diagonal-shift reduction (see mesh.build_diagonal_strip_mesh): the
explicit scheme runs as a compiled chain kernel, the implicit one on the
strip mesh; Q/F norms are rescaled by sqrt(n) to the full-grid values.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Optional

import numpy as np

from .. import mesh as meshmod
from ..analytic import (ExactSolutionParams, convergence_rate, error_norms,
                        exact_solution, exact_solution_jacobian,
                        project_flux, project_to_cells)
from ..kernels import run_chain_explicit
from ..llsolver import LLSolver, LLState, MaterialParams, ThetaScheme
from ..mimetic import MimeticOperators
from .config import FamilySpec, SimConfig
from . import report


def subseed(seed: int, *keys) -> int:
    ss = np.random.SeedSequence([seed] + [abs(hash(k)) % (2 ** 31) for k in keys])
    return int(ss.generate_state(1)[0])


def build_family_mesh(family: str, n: int, boundary: str, seed: int,
                      perturbation: float = 0.2) -> meshmod.Mesh:
    if family == "uniform":
        base = meshmod.build_uniform_quad_mesh(n, n, boundary=boundary)
        return meshmod.make_periodic(base) if boundary == "periodic" else base
    if family in ("randomized", "smooth"):
        base = meshmod.build_uniform_quad_mesh(
            n, n, boundary="neumann" if boundary == "periodic" else boundary)
        if boundary == "periodic":
            base = meshmod.make_periodic(base)
        if family == "randomized":
            return meshmod.perturb_random(base, perturbation, subseed(seed, family, n))
        return meshmod.distort_smooth(base)
    if family == "polygonal":
        if boundary == "periodic":
            raise ValueError("the polygonal family supports Dirichlet data only")
        return meshmod.build_polygonal_mesh(n, seed=subseed(seed, family, n),
                                            boundary=boundary)
    if family == "circular":
        if boundary == "periodic":
            raise ValueError("the disk supports Dirichlet data only")
        return meshmod.build_circular_logical_mesh(n, boundary=boundary)
    raise ValueError(f"unknown mesh family {family!r}")


def _chain_errors_via_strip(mc: np.ndarray, n: int, t: float,
                            par: ExactSolutionParams, solver: LLSolver
                            ) -> tuple[float, float, float]:
    strip = solver.mesh
    state = LLState(t=t, m=mc.copy())
    mi = project_to_cells(lambda x: exact_solution(x, t, par), strip)
    pi = project_flux(lambda x: exact_solution_jacobian(x, t, par), strip)
    ph = solver.flux(state)
    linf, q, f = error_norms(state.m, mi, ph, pi, solver.ops)
    s = np.sqrt(n)
    return linf, q * s, f * s


def run_single(family: str, n: int, spec: FamilySpec, cfg: SimConfig,
               boundary: str, theta: int, final_time: float, alpha: float,
               want_energy: bool) -> dict:
    par = ExactSolutionParams(alpha=alpha)
    h = 1.0 / n
    k = spec.step_factor * h * h
    steps = int(round(final_time / k))
    gamma = cfg.section("gamma", {"mode": "trace"})
    t0 = time.time()
    energy = None

    if family == "uniform" and boundary == "periodic":
        strip = meshmod.build_diagonal_strip_mesh(n, h)
        ops = MimeticOperators(strip, gamma_mode=gamma.get("mode", "trace"),
                               gamma0=gamma.get("gamma0", 1.0))
        solver = LLSolver(ops, MaterialParams(alpha=alpha),
                          ThetaScheme(theta=theta, k=k),
                          solver_config=cfg.solver_config())
        m0 = exact_solution(strip.cell_centroid, 0.0, par)
        if theta == 0:
            mc = m0.copy()
            n_energy = steps + 2 if want_energy else 2
            energies = np.zeros(n_energy)
            run_chain_explicit(mc, 1.0 / h ** 2, k, alpha, True, steps,
                               1 if want_energy else 0, energies, 0.0)
            if want_energy:
                energy = (k * np.arange(steps + 1), energies[:steps + 1] * 1.0)
            linf, q, f = _chain_errors_via_strip(mc, n, final_time, par, solver)
            n_cells = n * n
        else:
            traj = solver.run(m0, final_time,
                              record_every=1 if want_energy else 0)
            fin = traj.final_state
            if want_energy:
                t_arr, _, e_arr = traj.arrays()
                energy = (t_arr, e_arr * n)
            mi = project_to_cells(lambda x: exact_solution(x, fin.t, par), strip)
            pi = project_flux(lambda x: exact_solution_jacobian(x, fin.t, par), strip)
            ph = solver.flux(fin)
            linf, q, f = error_norms(fin.m, mi, ph, pi, ops)
            q *= np.sqrt(n)
            f *= np.sqrt(n)
            n_cells = n * n
        h_measured = np.sqrt(2.0) * h
    else:
        mesh = build_family_mesh(family, n, boundary, cfg.seed, spec.perturbation)
        ops = MimeticOperators(mesh, gamma_mode=gamma.get("mode", "trace"),
                               gamma0=gamma.get("gamma0", 1.0))
        dirichlet = None
        if boundary == "dirichlet":
            def dirichlet(points, t, _par=par):
                return exact_solution(points, t, _par)
        solver = LLSolver(ops, MaterialParams(alpha=alpha),
                          ThetaScheme(theta=theta, k=k),
                          solver_config=cfg.solver_config(),
                          dirichlet=dirichlet)
        m0 = exact_solution(mesh.cell_centroid, 0.0, par)
        m0 /= np.sqrt((m0 ** 2).sum(axis=1))[:, None]
        traj = solver.run(m0, final_time, record_every=1 if want_energy else 0)
        fin = traj.final_state
        if want_energy:
            t_arr, _, e_arr = traj.arrays()
            energy = (t_arr, e_arr)
        mi = project_to_cells(lambda x: exact_solution(x, fin.t, par), mesh)
        pi = project_flux(lambda x: exact_solution_jacobian(x, fin.t, par), mesh)
        ph = solver.flux(fin)
        linf, q, f = error_norms(fin.m, mi, ph, pi, ops)
        n_cells = mesh.n_cells
        h_measured = mesh.h

    return {
        "family": family, "inv_h": n, "h_nominal": h, "h_measured": h_measured,
        "n_cells": n_cells, "linf": linf, "q": q, "f": f,
        "steps": steps, "k": k, "seconds": time.time() - t0,
        "energy": energy,
    }


def run_convergence(cfg: SimConfig, out_dir, render_figures: bool = True,
                    resolutions_override: Optional[list[int]] = None) -> dict:
    """Run all families of a convergence config; emit CSV (+figures)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    theta = 0 if cfg.kind == "convergence-explicit" else 1
    boundary = "dirichlet" if cfg.kind == "convergence-dirichlet" else "periodic"
    tcfg = cfg.section("time")
    final_time = float(tcfg.get("final_time", 0.001))
    alpha = float(cfg.section("material").get("alpha", 1.0))

    results: dict[str, list[dict]] = {}
    rates: dict[str, dict] = {}
    energy_traces: dict[tuple[str, int], tuple] = {}
    for spec in cfg.families():
        rows = []
        res = resolutions_override or spec.resolutions
        for n in res:
            want_energy = n in spec.energy_trace_resolutions
            row = run_single(spec.name, n, spec, cfg, boundary, theta,
                             final_time, alpha, want_energy)
            e = row.pop("energy", None)
            if e is not None:
                energy_traces[(spec.name, n)] = e
            rows.append(row)
        results[spec.name] = rows
        hs = [r["h_nominal"] for r in rows]
        rates[spec.name] = {
            norm: {
                "all": convergence_rate([r[norm] for r in rows], hs),
                "fine3": convergence_rate([r[norm] for r in rows[-3:]], hs[-3:]),
            } for norm in ("linf", "q", "f")
        }

    # CSV in the table layout: one block per family
    rows_out = []
    for family, rows in results.items():
        for r in rows:
            rows_out.append([family, r["inv_h"], r["n_cells"], r["h_measured"],
                             r["linf"], r["q"], r["f"], r["steps"], r["seconds"]])
        rr = rates[family]
        rows_out.append([family, "rate", "", "", rr["linf"]["all"],
                         rr["q"]["all"], rr["f"]["all"], "", ""])
        rows_out.append([family, "rate_fine3", "", "", rr["linf"]["fine3"],
                         rr["q"]["fine3"], rr["f"]["fine3"], "", ""])
    csv_path = report.write_csv(
        out_dir / f"{cfg.name}.csv",
        [f"experiment: {cfg.name} ({cfg.kind})",
         f"theta={theta} boundary={boundary} final_time={final_time} alpha={alpha}",
         "errors are dimensionless; h in domain units; seconds wall clock",
         "columns: family, 1/h (or 'rate'), cells, h_max, Linf, Q-norm, F-norm, steps, seconds"],
        ["family", "inv_h", "cells", "h_max", "linf", "q_norm", "f_norm",
         "steps", "seconds"],
        rows_out)

    for (family, n), (t_arr, e_arr) in energy_traces.items():
        report.write_csv(
            out_dir / f"{cfg.name}_energy_{family}_{n}.csv",
            [f"exchange energy trace, family={family}, 1/h={n}",
             "columns: t (dimensionless), exchange energy (full-grid scale)"],
            ["t", "exchange_energy"],
            list(zip(t_arr.tolist(), e_arr.tolist())))

    if render_figures:
        report.convergence_figure(out_dir / f"{cfg.name}.png", results,
                                  f"{cfg.name}: errors vs h")
        if energy_traces:
            report.energy_figure(
                out_dir / f"{cfg.name}_energy.png",
                {f"{fam} 1/h={n}": tr for (fam, n), tr in energy_traces.items()},
                f"{cfg.name}: exchange energy decay")

    return {"rows": results, "rates": rates, "energy_traces": energy_traces,
            "csv": csv_path}
