"""Composite differentiable building blocks."""

from __future__ import annotations

from typing import Mapping

from .tensor import DimensionError, Tensor, as_tensor, getitem, matmul, sigmoid, tanh


def gru_cell(x: Tensor, h_prev: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """One GRU update on ``[..., d_in]`` input and ``[..., d_h]`` state.

    ``params`` holds ``w`` (d_in x 3d_h), ``u_zr`` (d_h x 2d_h), ``u_h``
    (d_h x d_h) and ``b`` (3d_h); column blocks are ordered update, reset,
    candidate::

        z  = sigmoid(x W_z + h U_z + b_z)
        r  = sigmoid(x W_r + h U_r + b_r)
        h~ = tanh(x W_h + (r * h) U_h + b_h)
        h' = (1 - z) * h + z * h~
    """
    x, h_prev = as_tensor(x), as_tensor(h_prev)
    w, u_zr, u_h, b = params["w"], params["u_zr"], params["u_h"], params["b"]
    d_h = u_h.shape[0]
    if x.shape[-1] != w.shape[0] or h_prev.shape[-1] != d_h or w.shape[1] != 3 * d_h:
        raise DimensionError(
            f"gru_cell shape mismatch: x {x.shape}, h {h_prev.shape}, w {w.shape}, u_h {u_h.shape}"
        )
    xw = matmul(x, w) + b
    hu = matmul(h_prev, u_zr)
    z = sigmoid(getitem(xw, (..., slice(0, d_h))) + getitem(hu, (..., slice(0, d_h))))
    r = sigmoid(getitem(xw, (..., slice(d_h, 2 * d_h))) + getitem(hu, (..., slice(d_h, 2 * d_h))))
    cand = tanh(getitem(xw, (..., slice(2 * d_h, 3 * d_h))) + matmul(r * h_prev, u_h))
    return h_prev + z * (cand - h_prev)
