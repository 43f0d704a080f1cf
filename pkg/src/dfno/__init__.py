"""Model-parallel Fourier neural operators on an in-process worker grid."""

from .collectives import DistributedTensor, broadcast_adj, broadcast_fwd, gather, repartition, repartition_adj, scatter
from .dfft import dfft_adjoint, dfft_forward, dfft_inverse, plan_dfft
from .errors import FormatError, InvalidArgument, InvalidState, LaunchError, PlanError, ProtocolError
from .model import FnoConfig, FnoModel, Tape, fno_backward, fno_forward, init_model, relative_lp_loss, spectral_conv
from .optim import AdamState, adam_step
from .partition import Partition, RegionBox, local_region, make_partition
from .runtime import launch
from .tensorfile import read_tensor, write_tensor

__version__ = "0.1.0"

__all__ = [
    "AdamState", "DistributedTensor", "FnoConfig", "FnoModel", "FormatError", "InvalidArgument", "InvalidState",
    "LaunchError", "Partition", "PlanError", "ProtocolError", "RegionBox", "Tape", "adam_step", "broadcast_adj",
    "broadcast_fwd", "dfft_adjoint", "dfft_forward", "dfft_inverse", "fno_backward", "fno_forward", "gather",
    "init_model", "launch", "local_region", "make_partition", "plan_dfft", "read_tensor", "relative_lp_loss",
    "repartition", "repartition_adj", "scatter", "spectral_conv", "write_tensor",
]
