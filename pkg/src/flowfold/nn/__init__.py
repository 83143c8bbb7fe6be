from . import ops
from .adam import Adam
from .gradcheck import central_difference, check_network_params, check_op, relative_error
from .nets import (
    FLOW_ARCH,
    PICK_ARCH,
    FlowNetLite,
    PickNet,
    build_network,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import Tensor, as_tensor, no_grad

__all__ = [
    "ops",
    "Adam",
    "Tensor",
    "as_tensor",
    "no_grad",
    "FlowNetLite",
    "PickNet",
    "build_network",
    "save_checkpoint",
    "load_checkpoint",
    "check_op",
    "check_network_params",
    "central_difference",
    "relative_error",
    "FLOW_ARCH",
    "PICK_ARCH",
]
