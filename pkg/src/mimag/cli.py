"""Command-line interface for the experiment suite.

Subcommands mirror the experiment families: ``convergence``, ``nist4``,
``neel``, ``amr`` and ``sstate``.  Each takes a TOML config (shipped under
configs/) and writes CSV tables, VTK snapshots and PNG report figures into
the output directory.
"""

from __future__ import annotations

import argparse
import os
import sys


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="path to the TOML config")
    p.add_argument("--output-dir", default=None,
                   help="output directory (default: results/<experiment name>)")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/OpenMP thread counts (set before numpy loads)")
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG report rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimag",
        description="Mimetic finite difference Landau-Lifshitz experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="analytic-solution convergence tables")
    _add_common(p)
    p.add_argument("--resolutions", default=None,
                   help="comma-separated 1/h override, e.g. 8,16")

    p = sub.add_parser("nist4", help="standard problem 4 switching runs")
    _add_common(p)
    p.add_argument("--field", type=int, choices=(1, 2), default=None,
                   help="run only this applied field")
    p.add_argument("--final-time-ns", type=float, default=None)
    p.add_argument("--sstate", default=None,
                   help="path to a precomputed s_state.npz")

    p = sub.add_parser("sstate", help="prepare the equilibrium S-state only")
    _add_common(p)
    p.add_argument("--force", action="store_true", help="ignore cached state")

    p = sub.add_parser("neel", help="domain-wall to vortex relaxation")
    _add_common(p)
    p.add_argument("--final-time-ns", type=float, default=None)
    p.add_argument("--max-steps", type=int, default=None)

    p = sub.add_parser("amr", help="uniform vs locally refined steady errors")
    _add_common(p)
    return parser


def _setup_threads(threads):
    if threads is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_threads(args.threads)

    from .experiments import (load_config, prepare_s_state, run_amr_comparison,
                              run_convergence, run_neel_wall, run_nist4)

    cfg = load_config(args.config, seed=args.seed)
    out_dir = args.output_dir or os.path.join("results", cfg.name)
    figures = not args.no_figures

    if args.command == "convergence":
        res = None
        if args.resolutions:
            res = [int(v) for v in args.resolutions.split(",")]
        out = run_convergence(cfg, out_dir, render_figures=figures,
                              resolutions_override=res)
        for family, rr in out["rates"].items():
            print(f"{family}: rates (all rows)  "
                  f"Linf {rr['linf']['all']:.2f}  Q {rr['q']['all']:.2f}  "
                  f"F {rr['f']['all']:.2f}")
        print(f"wrote {out['csv']}")
    elif args.command == "sstate":
        import numpy as np
        m = prepare_s_state(cfg, out_dir, force=args.force)
        print(f"S-state ready: <m> = {m.mean(axis=0)}, wrote {out_dir}/s_state.npz")
    elif args.command == "nist4":
        import numpy as np
        s_state = None
        if args.sstate:
            s_state = np.load(args.sstate)["m"]
        fields = [args.field] if args.field else None
        out = run_nist4(cfg, out_dir, render_figures=figures, fields=fields,
                        s_state=s_state, final_time_ns=args.final_time_ns)
        for run in out["runs"]:
            print(f"field {run['field']} theta={run['theta']} "
                  f"k={run['k_fs']:.0f} fs: first <m_x> crossing "
                  f"{run['crossing_ns']} ns, max||m|-1| = "
                  f"{run['max_norm_violation']:.2e}")
    elif args.command == "neel":
        out = run_neel_wall(cfg, out_dir, render_figures=figures,
                            final_time_ns=args.final_time_ns,
                            max_steps=args.max_steps)
        v = out["vortex"]
        print(f"stopped: {out['stop_reason']} after {out['t_ns'][-1]:.2f} ns; "
              f"vortices: {v['count']} (charges {v['charges']}), "
              f"min in-plane |m| = {v['min_inplane']:.3f}")
    elif args.command == "amr":
        out = run_amr_comparison(cfg, out_dir, render_figures=figures)
        for r in out["uniform"] + out["refined"]:
            print(f"{r['kind']:8s} {r['label']:8s} {r['n_cells']:6d} cells: "
                  f"Linf {r['linf']:.3e}  Q {r['q']:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
