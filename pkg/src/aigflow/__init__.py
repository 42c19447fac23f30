"""aigflow: cone-partitioned representation learning for and-inverter graphs."""

__version__ = "0.1.0"

from .aig import Aig, AigError, GateType, compute_levels, parse_aiger  # noqa: F401
from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
