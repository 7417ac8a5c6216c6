"""Dense float64/complex128 tensors with a reverse-mode execution trace."""
from . import ops
from .conv import conv2d, depthwise_conv2d
from .core import (
    Parameter,
    Record,
    ShapeError,
    Tensor,
    Trace,
    active_trace,
    as_tensor,
    backward,
    count_ops,
)
from .fft import fft2c, ifft2c
from .gradcheck import GradCheckResult, directional_check, max_rel_err, numerical_gradient
from .ops import (
    absolute,
    abs2,
    add,
    clamp_min,
    complex_from_two_channel,
    concat,
    concat_channels,
    conj,
    div,
    l1_mean,
    magnitude,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    sqrt,
    sub,
    transpose,
    two_channel_from_complex,
)
from .params import Conv, ParamStore

__all__ = [
    "Conv", "GradCheckResult", "ParamStore", "Parameter", "Record", "ShapeError", "Tensor",
    "Trace", "abs2", "absolute", "active_trace", "add", "as_tensor", "backward", "clamp_min",
    "complex_from_two_channel", "concat", "concat_channels", "conj", "conv2d", "count_ops",
    "depthwise_conv2d", "directional_check", "div", "fft2c", "ifft2c", "l1_mean", "magnitude",
    "matmul", "max_rel_err", "mean", "mul", "numerical_gradient", "ops", "relu", "reshape",
    "scale", "sigmoid", "softmax", "sqrt", "sub", "transpose", "two_channel_from_complex",
]
