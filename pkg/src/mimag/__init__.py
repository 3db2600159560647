"""Mimetic finite difference solver for Landau-Lifshitz micromagnetics.

Library layout:

- :mod:`mimag.mesh` -- polygonal meshes and the experiment mesh families
- :mod:`mimag.mimetic` -- local inner products, discrete DIV/GRAD, fields
- :mod:`mimag.linalg` -- sparse storage and iterative solvers
- :mod:`mimag.strayfield` -- analytic demagnetization tensor and FFT apply
- :mod:`mimag.llsolver` -- theta-scheme time stepping with sphere projection
- :mod:`mimag.analytic` -- closed-form solutions, projections, error norms
- :mod:`mimag.experiments` -- batch experiment runners behind the CLI
"""

__version__ = "0.1.0"

from . import mesh  # noqa: F401
