"""Batch experiment runners behind the command-line interface."""

from .amr import run_amr_comparison  # noqa: F401
from .config import PhysicalBlock, SimConfig, load_config  # noqa: F401
from .convergence import run_convergence  # noqa: F401
from .neel import run_neel_wall  # noqa: F401
from .nist4 import prepare_s_state, run_nist4  # noqa: F401
