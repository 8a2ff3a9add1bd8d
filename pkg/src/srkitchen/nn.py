"""Dense networks with hand-written reverse mode, Adam, and checkpoints.

Everything is float64. Layers accept inputs with any number of leading
dimensions; gradients are summed over them.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

DTYPE = np.float64


class UsageError(RuntimeError):
    pass


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(DTYPE)


class DenseNet:
    """Stack of affine layers, each optionally followed by a ReLU.

    By default every layer but the last is rectified; pass ``relu`` to set
    the flags explicitly. Parameters live in :attr:`params` under the keys
    ``W0, b0, W1, b1, ...`` (prefixed by ``name.`` when a name is given).
    """

    def __init__(
        self,
        sizes: "list[int] | tuple[int, ...]",
        relu: "list[bool] | tuple[bool, ...] | None" = None,
        rng: np.random.Generator | None = None,
        name: str = "",
    ):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        n = len(self.sizes) - 1
        self.relu = tuple(relu) if relu is not None else (True,) * (n - 1) + (False,)
        if len(self.relu) != n:
            raise ValueError("one relu flag per layer")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.prefix = f"{name}." if name else ""
        self.params: dict[str, np.ndarray] = {}
        for k in range(n):
            self.params[f"{self.prefix}W{k}"] = glorot(rng, self.sizes[k], self.sizes[k + 1])
            self.params[f"{self.prefix}b{k}"] = np.zeros(self.sizes[k + 1], dtype=DTYPE)
        self._cache: list[np.ndarray] | None = None

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def layer(self, k: int) -> tuple[np.ndarray, np.ndarray, bool]:
        return self.params[f"{self.prefix}W{k}"], self.params[f"{self.prefix}b{k}"], self.relu[k]

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=DTYPE)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input has {x.shape[-1]} features, net expects {self.sizes[0]}")
        return x

    def predict(self, x) -> np.ndarray:
        """Forward pass without caching."""
        h = self._check(x)
        for k in range(self.n_layers):
            W, b, act = self.layer(k)
            h = h @ W + b
            if act:
                h = np.maximum(h, 0.0)
        return h

    def forward(self, x) -> np.ndarray:
        """Forward pass; caches the layer inputs and pre-activations."""
        h = self._check(x)
        cache = []
        for k in range(self.n_layers):
            W, b, act = self.layer(k)
            z = h @ W + b
            cache.append((h, z))
            h = np.maximum(z, 0.0) if act else z
        self._cache = cache
        return h

    def backward(self, grad_out) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Gradients for the last :meth:`forward`. Returns (grad_input, grads)."""
        if self._cache is None:
            raise UsageError("backward() called before forward()")
        g = np.asarray(grad_out, dtype=DTYPE)
        grads: dict[str, np.ndarray] = {}
        for k in reversed(range(self.n_layers)):
            W, _, act = self.layer(k)
            h, z = self._cache[k]
            if act:
                g = g * (z > 0)
            grads[f"{self.prefix}W{k}"] = h.reshape(-1, h.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            grads[f"{self.prefix}b{k}"] = g.reshape(-1, g.shape[-1]).sum(axis=0)
            g = g @ W.T
        return g, grads

    def clear(self):
        self._cache = None


def forward(net: DenseNet, x) -> np.ndarray:
    return net.forward(x)


def backward(net: DenseNet, grad_out) -> dict[str, np.ndarray]:
    return net.backward(grad_out)[1]


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def _all_finite(g: np.ndarray) -> bool:
    # a NaN or infinity anywhere makes the sum non-finite
    return bool(np.isfinite(g.sum()))


def adam_step(
    params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState
) -> None:
    """One bias-corrected Adam update, in place, over the keys of ``grads``.

    m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2
    p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    """
    for k, g in grads.items():
        if not _all_finite(g):
            raise FloatingPointError(f"non-finite gradient for {k}")
        if params[k].shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {k} {params[k].shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for k, g in grads.items():
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        v = state.v[k]
        tmp = np.multiply(g, 1.0 - b1)
        m *= b1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v *= b2
        v += tmp
        np.divide(v, c2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += state.eps
        np.divide(m, tmp, out=tmp)
        tmp *= state.lr / c1
        params[k] -= tmp


def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float):
    for k, g in grads.items():
        if not _all_finite(g):
            raise FloatingPointError(f"non-finite gradient for {k}")
        params[k] -= lr * g


# --------------------------------------------------------------------------
# checkpoints
#
# Layout:  b"SRKCKPT1" | u64 little-endian header length | UTF-8 JSON header
#          | raw array bytes, concatenated in header order.
# The header holds {"meta": {...}, "arrays": [[name, dtype, shape, offset,
# nbytes], ...]}. Arrays are stored little-endian, C order.

MAGIC = b"SRKCKPT1"


def save_checkpoint(path: "str | Path", arrays: Mapping[str, np.ndarray], meta: dict) -> None:
    entries, blobs, off = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes()
        entries.append([name, a.dtype.str, list(a.shape), off, len(raw)])
        blobs.append(raw)
        off += len(raw)
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)
    tmp.replace(path)


def load_checkpoint(path: "str | Path") -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
    base = 16 + hlen
    arrays = {}
    for name, dtype, shape, off, nbytes in header["arrays"]:
        buf = data[base + off : base + off + nbytes]
        arrays[name] = np.frombuffer(buf, dtype=np.dtype(dtype)).reshape(shape).copy()
    return arrays, header["meta"]


def adam_to_arrays(state: AdamState) -> tuple[dict[str, np.ndarray], dict]:
    arrays = {f"adam.m/{k}": v for k, v in state.m.items()}
    arrays.update({f"adam.v/{k}": v for k, v in state.v.items()})
    meta = {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
            "eps": state.eps, "t": state.t}
    return arrays, meta


def adam_from_arrays(arrays: Mapping[str, np.ndarray], meta: dict) -> AdamState:
    st = AdamState(lr=meta["lr"], beta1=meta["beta1"], beta2=meta["beta2"],
                   eps=meta["eps"], t=meta["t"])
    for k, v in arrays.items():
        if k.startswith("adam.m/"):
            st.m[k[len("adam.m/"):]] = v.copy()
        elif k.startswith("adam.v/"):
            st.v[k[len("adam.v/"):]] = v.copy()
    return st
