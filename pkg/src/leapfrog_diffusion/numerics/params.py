"""Named trainable parameters, the Adam optimizer, and checkpoint files."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor import DTYPE, Tensor

CHECKPOINT_MAGIC = b"LEDPARAM"
CHECKPOINT_VERSION = 1


class Parameter(Tensor):
    """A leaf tensor owning its gradient slot and Adam moments."""

    __slots__ = ("name", "m", "v", "step", "frozen")

    def __init__(self, name: str, value):
        super().__init__(np.array(value, dtype=DTYPE))
        self.name = name
        self.grad = np.zeros_like(self.data)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0
        self.frozen = False
        self.requires_grad = True

    def set_frozen(self, frozen: bool) -> None:
        self.frozen = frozen
        self.requires_grad = not frozen


class ParameterStore:
    """Ordered mapping ``name -> Parameter``."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, value) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def n_values(self) -> int:
        return int(np.sum([p.size for p in self]))

    def freeze(self, prefix: str = "", frozen: bool = True) -> None:
        for n in self.names(prefix):
            self._params[n].set_frozen(frozen)

    def zero_grad(self) -> None:
        for p in self:
            p.grad[...] = 0.0

    def grad_norm(self) -> float:
        return float(np.sqrt(np.sum([np.sum(p.grad * p.grad) for p in self if not p.frozen])))

    def merge(self, other: "ParameterStore") -> None:
        """Adopt every parameter of ``other`` (names must not collide)."""
        for p in other:
            if p.name in self._params:
                raise KeyError(f"duplicate parameter name {p.name!r}")
            self._params[p.name] = p

    def values(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for n, arr in values.items():
            p = self._params[n]
            if p.shape != arr.shape:
                raise ValueError(f"shape mismatch for {n}: store {p.shape}, loaded {arr.shape}")
            p.data[...] = arr


def adam_step(
    store: ParameterStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update of every unfrozen parameter; zeroes gradients."""
    for p in store:
        if p.frozen:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient in parameter {p.name!r}")
    for p in store:
        if p.frozen:
            p.grad[...] = 0.0
            continue
        g = p.grad
        p.step += 1
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1**p.step)
        v_hat = p.v / (1.0 - beta2**p.step)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        g[...] = 0.0


# ---------------------------------------------------------------- checkpoints
#
# Layout (all integers little-endian):
#   8 bytes   magic "LEDPARAM"
#   u32       format version
#   u64       length N of the JSON header
#   N bytes   UTF-8 JSON: {"meta": {...}, "params": [{"name", "shape", "frozen"}, ...]}
#   f64[...]  parameter values, concatenated in header order, row-major


def save_checkpoint(store: ParameterStore, path, meta: dict | None = None) -> None:
    entries = [{"name": p.name, "shape": list(p.shape), "frozen": p.frozen} for p in store]
    header = json.dumps({"meta": meta or {}, "params": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for p in store:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ParameterStore, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    start = 8 + struct.calcsize("<IQ")
    header = json.loads(raw[start : start + hlen].decode("utf-8"))
    offset = start + hlen
    store = ParameterStore()
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shape)
        offset += 8 * n
        store.add(entry["name"], arr.astype(DTYPE)).set_frozen(entry["frozen"])
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes after parameter data")
    return store, header["meta"]
