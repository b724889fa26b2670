"""Self-contained reverse-mode autodiff engine on numpy + numba."""

from .gradcheck import grad_check
from .nn_ops import (
    avg_pool,
    bilinear_upsample,
    conv2d,
    depthwise_conv2d,
    group_norm,
    selective_scan,
)
from .optim import Adam, clip_global_norm, cosine_lr
from .tensor import (
    Tensor,
    add,
    anomaly_enabled,
    backward,
    concat,
    default_dtype,
    div,
    dtype_name,
    flip,
    index,
    l1_norm,
    matmul,
    mul,
    relu,
    reshape,
    set_anomaly,
    set_default_dtype,
    sigmoid,
    sign,
    silu,
    softmax,
    softplus,
    sub,
    tabs,
    texp,
    tlog,
    tmean,
    transpose,
    tsum,
    using_dtype,
)

__all__ = [
    "Adam",
    "Tensor",
    "add",
    "anomaly_enabled",
    "avg_pool",
    "backward",
    "bilinear_upsample",
    "clip_global_norm",
    "concat",
    "conv2d",
    "cosine_lr",
    "default_dtype",
    "depthwise_conv2d",
    "div",
    "dtype_name",
    "flip",
    "grad_check",
    "group_norm",
    "index",
    "l1_norm",
    "matmul",
    "mul",
    "relu",
    "reshape",
    "selective_scan",
    "set_anomaly",
    "set_default_dtype",
    "sigmoid",
    "sign",
    "silu",
    "softmax",
    "softplus",
    "sub",
    "tabs",
    "texp",
    "tlog",
    "tmean",
    "transpose",
    "tsum",
    "using_dtype",
]
