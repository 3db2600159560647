"""Experiment configuration: TOML files with one section per concern.

A config file fully determines an experiment run (mesh family, scheme,
material data, solver settings, output layout); the CLI can override the
seed, the output directory and the resolution list.  Experiments with
physical units carry a [physical] block; everything else is dimensionless.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..linalg import SolverConfig

KINDS = ("convergence-explicit", "convergence-implicit", "convergence-dirichlet",
         "nist4", "neel-wall", "amr-steady")


@dataclass(frozen=True)
class PhysicalBlock:
    """Dimensional material data and the scaling to dimensionless form.

    time_scaling selects the time unit: "gilbert" uses
    (1 + alpha^2)/(gamma Ms) (gamma in m/(A s)); "llg_mu0" uses
    1/(mu0 gamma Ms) (gamma in 1/(T s)).  Lengths are measured in units of
    ``length_scale`` (1 nm), giving eta = A / (mu0 Ms^2 L^2).
    """

    exchange_A: float        # J / m
    Ms: float                # A / m
    gamma_gyro: float        # m / (A s)  or  1 / (T s), per time_scaling
    mu0: float               # N / A^2
    alpha: float
    length_scale: float = 1e-9
    time_scaling: str = "gilbert"

    def __post_init__(self):
        if self.time_scaling not in ("gilbert", "llg_mu0"):
            raise ValueError("time_scaling must be 'gilbert' or 'llg_mu0'")

    @property
    def eta(self) -> float:
        return self.exchange_A / (self.mu0 * self.Ms ** 2 * self.length_scale ** 2)

    @property
    def time_unit(self) -> float:
        """Seconds per dimensionless time unit."""
        if self.time_scaling == "gilbert":
            return (1.0 + self.alpha ** 2) / (self.gamma_gyro * self.Ms)
        return 1.0 / (self.mu0 * self.gamma_gyro * self.Ms)

    def field_from_tesla(self, B) -> Any:
        """mu0 H in tesla -> dimensionless h = H / Ms."""
        import numpy as np
        return np.asarray(B, dtype=float) / (self.mu0 * self.Ms)

    def field_to_tesla(self, h) -> Any:
        import numpy as np
        return np.asarray(h, dtype=float) * (self.mu0 * self.Ms)

    def seconds_from_time(self, t: float) -> float:
        return t * self.time_unit

    def time_from_seconds(self, s: float) -> float:
        return s / self.time_unit

    def length_from_meters(self, x: float) -> float:
        return x / self.length_scale


@dataclass
class FamilySpec:
    """One mesh family of a convergence study."""

    name: str
    resolutions: list[int]
    step_factor: float            # k = step_factor * h^2
    perturbation: float = 0.2
    energy_trace_resolutions: list[int] = field(default_factory=list)


@dataclass
class SimConfig:
    kind: str
    name: str
    seed: int
    raw: dict
    path: Optional[Path] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        needs_physical = self.kind in ("nist4", "neel-wall")
        if needs_physical != ("physical" in self.raw):
            raise ValueError(
                f"experiment kind {self.kind!r} "
                + ("requires" if needs_physical else "must not carry")
                + " a [physical] block")

    @property
    def physical(self) -> PhysicalBlock:
        p = self.raw["physical"]
        return PhysicalBlock(
            exchange_A=p["exchange_A"], Ms=p["Ms"], gamma_gyro=p["gamma_gyro"],
            mu0=p.get("mu0", 4e-7 * 3.141592653589793),
            alpha=p["alpha"], length_scale=p.get("length_scale", 1e-9),
            time_scaling=p.get("time_scaling", "gilbert"))

    def solver_config(self) -> SolverConfig:
        s = self.raw.get("solver", {})
        return SolverConfig(
            method=s.get("method", "bicgstab"),
            tol=s.get("tol", 1e-10),
            max_iter=s.get("max_iter", 5000),
            preconditioner=s.get("preconditioner", "diagonal"))

    def families(self) -> list[FamilySpec]:
        out = []
        for f in self.raw.get("family", []):
            out.append(FamilySpec(
                name=f["name"],
                resolutions=[int(r) for r in f["resolutions"]],
                step_factor=float(f["step_factor"]),
                perturbation=float(f.get("perturbation", 0.2)),
                energy_trace_resolutions=[int(r) for r in
                                          f.get("energy_trace_resolutions", [])],
            ))
        return out

    def section(self, name: str, default: Optional[dict] = None) -> dict:
        return self.raw.get(name, default if default is not None else {})


def load_config(path, seed: Optional[int] = None) -> SimConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    exp = raw.get("experiment", {})
    return SimConfig(
        kind=exp.get("kind", ""),
        name=exp.get("name", path.stem),
        seed=seed if seed is not None else int(exp.get("seed", 0)),
        raw=raw,
        path=path)
