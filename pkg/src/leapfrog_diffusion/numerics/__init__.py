from .gradcheck import check_gradients, finite_diff_grad, relative_error
from .params import (
    Parameter,
    ParameterStore,
    adam_step,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import (
    ContractError,
    DimensionError,
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    broadcast_to,
    concat,
    conv1d,
    div,
    exp,
    frobenius_norm,
    getitem,
    log,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    sqrt,
    sub,
    sum,
    tanh,
    transpose,
)

__all__ = [
    "ContractError",
    "DimensionError",
    "Parameter",
    "ParameterStore",
    "Tape",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "broadcast_to",
    "check_gradients",
    "concat",
    "conv1d",
    "div",
    "exp",
    "finite_diff_grad",
    "frobenius_norm",
    "getitem",
    "load_checkpoint",
    "log",
    "matmul",
    "mean",
    "mul",
    "relative_error",
    "relu",
    "reshape",
    "save_checkpoint",
    "sigmoid",
    "softmax",
    "sqrt",
    "sub",
    "sum",
    "tanh",
    "transpose",
]
