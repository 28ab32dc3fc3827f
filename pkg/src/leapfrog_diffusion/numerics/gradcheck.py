"""Finite-difference oracles for checking reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .params import Parameter
from .tensor import Tape, Tensor, backward


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` per coordinate."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-10) -> float:
    """``||a - b|| / max(||a||, ||b||, floor)`` over the flattened arrays."""
    a = np.ravel(a)
    b = np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def check_gradients(
    loss_fn: Callable[[], Tensor],
    leaves: Iterable[Tensor],
    h: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> dict[str, float]:
    """Compare tape gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must rebuild the graph from the current leaf values on every
    call.  If ``max_coords`` is set, at most that many coordinates per leaf
    (drawn with a fixed seed) are perturbed.  Returns the relative error per
    leaf, keyed by parameter name or position.
    """
    leaves = list(leaves)
    for leaf in leaves:
        if isinstance(leaf, Parameter):
            leaf.grad[...] = 0.0
        else:
            leaf.grad = None
            leaf.requires_grad = True
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss)
    picker = np.random.default_rng(seed)
    errors = {}
    for i, leaf in enumerate(leaves):
        analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy()
        flat = leaf.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(picker.choice(flat.size, size=max_coords, replace=False))
        numeric = np.empty(coords.size)
        for j, c in enumerate(coords):
            orig = flat[c]
            flat[c] = orig + h
            fp = loss_fn().item()
            flat[c] = orig - h
            fm = loss_fn().item()
            flat[c] = orig
            numeric[j] = (fp - fm) / (2.0 * h)
        key = getattr(leaf, "name", None) or f"leaf{i}"
        errors[key] = relative_error(analytic.reshape(-1)[coords], numeric)
    return errors
