from .tensor import (
    EngineError,
    NotOnTapeError,
    ShapeError,
    Tape,
    Tensor,
    backward,
    grad_wrt_activation,
)
from .ops import (
    add,
    add_scalar,
    avg_pool2,
    concat_channels,
    conv2d,
    dense,
    depthwise_conv2d,
    dropout,
    exp,
    global_avg_pool,
    log,
    mul,
    mul_array,
    mul_scalar,
    relu,
    relu6,
    select_scalar,
    softmax,
    tmean,
    tsum,
)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "EngineError",
    "NotOnTapeError",
    "ShapeError",
    "Tape",
    "Tensor",
    "backward",
    "grad_wrt_activation",
    "add",
    "add_scalar",
    "avg_pool2",
    "concat_channels",
    "conv2d",
    "dense",
    "depthwise_conv2d",
    "dropout",
    "exp",
    "global_avg_pool",
    "log",
    "mul",
    "mul_array",
    "mul_scalar",
    "relu",
    "relu6",
    "select_scalar",
    "softmax",
    "tmean",
    "tsum",
    "load_checkpoint",
    "save_checkpoint",
]
