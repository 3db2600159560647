"""Standard-problem-4 runs: S-state preparation and switching dynamics.

A 500 x 125 x 3 nm permalloy film on a 100 x 25 grid of 5 nm square cells,
one cell through the thickness.  The prepared S-state is reversed by an
in-plane field; the average magnetization is recorded every step and a
snapshot is taken when <m_x> first crosses zero.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Optional

import numpy as np

from .. import mesh as meshmod
from ..analytic import SStateProtocol, generate_s_state
from ..llsolver import LLSolver, MaterialParams, ThetaScheme
from ..meshio import write_vtk
from ..mimetic import MimeticOperators
from ..strayfield import StrayFieldOperator
from .config import SimConfig
from . import report


def build_film(cfg: SimConfig):
    phys = cfg.physical
    film = cfg.section("film")
    nx, ny = (int(v) for v in film["grid"])
    cell = [phys.length_from_meters(c * 1e-9) for c in film["cell_nm"]]
    thickness = phys.length_from_meters(film["thickness_nm"] * 1e-9)
    mesh = meshmod.build_uniform_quad_mesh(
        nx, ny, extent=(nx * cell[0], ny * cell[1]), boundary="neumann")
    gamma = cfg.section("gamma", {"mode": "trace"})
    ops = MimeticOperators(mesh, eta=phys.eta, gamma_mode=gamma.get("mode", "trace"))
    cache_dir = cfg.section("output").get("kernel_cache")
    stray = StrayFieldOperator(mesh, thickness, cache_dir=cache_dir)
    return mesh, ops, stray


def prepare_s_state(cfg: SimConfig, out_dir, force: bool = False) -> np.ndarray:
    """Generate (or load) the equilibrium S-state for this configuration."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "s_state.npz"
    if path.exists() and not force:
        return np.load(path)["m"]
    phys = cfg.physical
    mesh, ops, stray = build_film(cfg)
    s = cfg.section("sstate")
    protocol = SStateProtocol(
        field_start=float(phys.field_from_tesla(s.get("field_T", 2.0))),
        field_step=float(phys.field_from_tesla(s.get("decrement_T", 0.02))),
        k=phys.time_from_seconds(s.get("step_ps", 1.0) * 1e-12),
        relax_time=phys.time_from_seconds(s.get("relax_ns", 1.0) * 1e-9),
        damping=float(s.get("damping", 1.0)),
    )
    m = generate_s_state(ops, stray, protocol=protocol,
                         solver_config=cfg.solver_config())
    np.savez_compressed(path, m=m)
    write_vtk(mesh, out_dir / "s_state.vtk",
              {"m": m, "norm_defect": np.sqrt((m ** 2).sum(1)) - 1.0},
              title="equilibrium S-state")
    report.snapshot_figure(out_dir / "s_state.png", mesh, m, "equilibrium S-state")
    return m


def _first_zero_crossing(t: np.ndarray, v: np.ndarray) -> Optional[float]:
    sign = np.sign(v)
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if idx.size == 0:
        return None
    i = idx[0]
    # linear interpolation inside the step
    return float(t[i] + (t[i + 1] - t[i]) * v[i] / (v[i] - v[i + 1]))


def run_nist4(cfg: SimConfig, out_dir, render_figures: bool = True,
              fields: Optional[list[int]] = None,
              s_state: Optional[np.ndarray] = None,
              final_time_ns: Optional[float] = None,
              stop_after_crossing: bool = False) -> dict:
    """Switching runs for the configured applied fields and time steps.

    Returns per-run records with the recorded time series, the first
    <m_x> = 0 crossing time, and the snapshot state at the crossing.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    phys = cfg.physical
    mesh, ops, stray = build_film(cfg)
    if s_state is None:
        s_state = prepare_s_state(cfg, out_dir)

    fcfg = cfg.section("fields")
    applied = fcfg.get("applied_mT", [[-24.6, 4.3, 0.0], [-35.5, 6.3, 0.0]])
    field_ids = fields or list(range(1, len(applied) + 1))
    tcfg = cfg.section("time")
    T_ns = final_time_ns if final_time_ns is not None \
        else float(tcfg.get("final_time_ns", 1.0))
    T = phys.time_from_seconds(T_ns * 1e-9)

    runs = []
    schemes = []
    if tcfg.get("explicit_step_dimensionless"):
        schemes.append((0, float(tcfg["explicit_step_dimensionless"])))
    for k in tcfg.get("implicit_steps_dimensionless", []):
        schemes.append((1, float(k)))

    for fid in field_ids:
        h_e = phys.field_from_tesla(np.asarray(applied[fid - 1]) * 1e-3)
        for theta, k in schemes:
            params = MaterialParams(alpha=phys.alpha, eta=phys.eta,
                                    h_external=h_e, stray=stray)
            solver = LLSolver(ops, params, ThetaScheme(theta=theta, k=k),
                              solver_config=cfg.solver_config())
            state = solver.initial_state(s_state.copy())
            t_hist = [0.0]
            m_hist = [state.average_m()]
            norm_viol = [state.unit_norm_violation()]
            snapshot = {"state": None}
            t0 = time.time()

            def record(step, st):
                t_hist.append(st.t)
                m_hist.append(st.average_m())
                norm_viol.append(st.unit_norm_violation())
                if snapshot["state"] is None and m_hist[-2][0] * m_hist[-1][0] < 0:
                    snapshot["state"] = st

            def stop(step, st):
                return stop_after_crossing and snapshot["state"] is not None

            traj = solver.run(state, T, callbacks=[record], stop_condition=stop)
            t_arr = np.asarray(t_hist)
            m_arr = np.asarray(m_hist)
            t_ns = phys.seconds_from_time(t_arr) / 1e-9
            crossing = _first_zero_crossing(t_arr, m_arr[:, 0])
            crossing_ns = (phys.seconds_from_time(crossing) / 1e-9
                           if crossing is not None else None)
            k_fs = phys.seconds_from_time(k) / 1e-15
            tag = f"field{fid}_{'explicit' if theta == 0 else 'implicit'}_k{k_fs:.0f}fs"
            report.write_csv(
                out_dir / f"timeseries_{tag}.csv",
                [f"standard problem 4, applied field #{fid} = {applied[fid-1]} mT",
                 f"theta={theta}, k={k} (dimensionless) = {k_fs:.2f} fs",
                 f"first <m_x> zero crossing: {crossing_ns} ns",
                 "columns: t [ns], <m_x>, <m_y>, <m_z>, max||m|-1|"],
                ["t_ns", "mx", "my", "mz", "norm_defect"],
                [[t_ns[i], m_arr[i, 0], m_arr[i, 1], m_arr[i, 2], norm_viol[i]]
                 for i in range(len(t_ns))])
            if snapshot["state"] is not None:
                snap = snapshot["state"]
                write_vtk(mesh, out_dir / f"snapshot_{tag}.vtk",
                          {"m": snap.m,
                           "norm_defect": np.sqrt((snap.m ** 2).sum(1)) - 1.0},
                          title=f"crossing snapshot {tag}")
                if render_figures:
                    report.snapshot_figure(
                        out_dir / f"snapshot_{tag}.png", mesh, snap.m,
                        f"<m_x> crossing, field #{fid}, k={k_fs:.0f} fs")
            if render_figures:
                report.timeseries_figure(out_dir / f"timeseries_{tag}.png",
                                         t_ns, m_arr,
                                         f"field #{fid}, theta={theta}, "
                                         f"k={k_fs:.0f} fs")
            runs.append({
                "field": fid, "theta": theta, "k": k, "k_fs": k_fs,
                "t_ns": t_ns, "avg_m": m_arr,
                "crossing_ns": crossing_ns,
                "snapshot": snapshot["state"],
                "max_norm_violation": float(np.max(norm_viol)),
                "seconds": time.time() - t0,
            })
    return {"runs": runs, "mesh": mesh}
