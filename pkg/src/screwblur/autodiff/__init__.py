"""Small reverse-mode autodiff engine on numpy arrays."""
from .conv import conv2d
from .optim import Adam, AdamState, NonFiniteGradientError, ParamGroup, adam_step, constant, exponential_decay
from .tensor import (
    GraphConsumedError,
    ShapeError,
    Tensor,
    add,
    astensor,
    broadcast_to,
    concat,
    cos,
    custom,
    div,
    exp,
    getitem,
    grad_enabled,
    log,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    relu,
    reshape,
    sigmoid,
    sin,
    softmax,
    sqrt,
    square,
    stack,
    sub,
    swapaxes,
    tabs,
    transpose,
    tsum,
    where,
)

__all__ = [
    "Adam",
    "AdamState",
    "GraphConsumedError",
    "NonFiniteGradientError",
    "ParamGroup",
    "ShapeError",
    "Tensor",
    "adam_step",
    "add",
    "astensor",
    "broadcast_to",
    "concat",
    "constant",
    "conv2d",
    "cos",
    "custom",
    "div",
    "exp",
    "exponential_decay",
    "getitem",
    "grad_enabled",
    "log",
    "matmul",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "relu",
    "reshape",
    "sigmoid",
    "sin",
    "softmax",
    "sqrt",
    "square",
    "stack",
    "sub",
    "swapaxes",
    "tabs",
    "transpose",
    "tsum",
    "where",
]
