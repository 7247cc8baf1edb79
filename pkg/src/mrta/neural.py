"""Small float64 multilayer perceptrons with hand-written backprop, Adam, and
target-network blending.

Hidden layers use ReLU; the head is ``tanh`` (actors) or ``identity``
(critics). Weights are stored ``(out, in)``; inputs may be a single vector or
a ``(batch, in)`` array.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

HEADS = ("tanh", "identity")
MAGIC = b"MRTANET\x00"
FORMAT_VERSION = 1


class ShapeError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


class TrainingError(FloatingPointError):
    """Non-finite gradients or losses."""


@dataclass
class MLP:
    weights: list
    biases: list
    head: str = "tanh"
    version: int = 0      # bumped on every in-place parameter change

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if b.shape[1] != a.shape[0]:
                raise ShapeError("consecutive layer dimensions do not chain")

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    @property
    def dims(self):
        return [w.shape for w in self.weights]

    def params(self):
        """Parameter arrays in declared order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self):
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.head)


def init_mlp(in_dim, out_dim, rng, hidden=(64, 64, 64, 64), head="tanh"):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    sizes = [in_dim, *hidden, out_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MLP(weights, biases, head)


def zeros_like_mlp(net):
    return MLP([np.zeros_like(w) for w in net.weights],
               [np.zeros_like(b) for b in net.biases], net.head)


@dataclass
class Cache:
    inputs: list          # input to each layer, (B, in)
    pre: list             # pre-activation of each layer, (B, out)
    output: np.ndarray
    squeeze: bool
    net_id: int
    version: int


def forward(net, x):
    """Return ``(output, cache)``. Never modifies ``net``."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != net.in_dim:
        raise ShapeError(f"input has shape {x.shape}, network expects (..., {net.in_dim})")
    inputs, pre = [], []
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        if k < last:
            h = np.maximum(z, 0.0)
        elif net.head == "tanh":
            h = np.tanh(z)
        else:
            h = z
    out = h[0] if squeeze else h
    return out, Cache(inputs, pre, h, squeeze, id(net), net.version)


def backward(net, cache, grad_out):
    """Reverse-mode pass for the forward call that produced ``cache``.

    Returns ``(grads, grad_input)`` where ``grads`` is an MLP holding
    d(sum(grad_out * output))/d(parameter) summed over the batch.
    """
    if cache.net_id != id(net) or cache.version != net.version:
        raise StaleCacheError("cache does not belong to the current network parameters")
    g = np.asarray(grad_out, dtype=np.float64)
    g = g[None, :] if cache.squeeze else g
    if g.shape != cache.output.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match output {cache.output.shape}")
    last = len(net.weights) - 1
    if net.head == "tanh":
        g = g * (1.0 - cache.output ** 2)
    dws, dbs = [None] * len(net.weights), [None] * len(net.weights)
    for k in range(last, -1, -1):
        if k < last:
            g = g * (cache.pre[k] > 0.0)
        dws[k] = g.T @ cache.inputs[k]
        dbs[k] = g.sum(axis=0)
        g = g @ net.weights[k]
    grad_in = g[0] if cache.squeeze else g
    return MLP(dws, dbs, net.head), grad_in


@dataclass
class AdamState:
    m: list
    v: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    def copy(self):
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v],
                         self.lr, self.beta1, self.beta2, self.eps, self.t)


def adam_state(net, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState([np.zeros_like(p) for p in net.params()],
                     [np.zeros_like(p) for p in net.params()], lr, beta1, beta2, eps)


def optim_step(net, grads, state):
    """One bias-corrected Adam step, applied in place. Returns ``(net, state)``."""
    params, gs = net.params(), grads.params()
    if [p.shape for p in params] != [g.shape for g in gs]:
        raise ShapeError("gradient shapes do not match parameters")
    if not all(np.isfinite(g).all() for g in gs):
        raise TrainingError("non-finite gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    net.version += 1
    return net, state


def soft_update(target, source, tau):
    """target <- (1 - tau) * target + tau * source, in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    if target.dims != source.dims:
        raise ShapeError("target and source architectures differ")
    for t, s in zip(target.params(), source.params()):
        t *= 1.0 - tau
        t += tau * s
    target.version += 1
    return target


# -- weight files -----------------------------------------------------------
# MAGIC, then little-endian uint32 fields: format version, layer count, head
# code, (out, in) per layer; then every W (row-major) and b in layer order as
# little-endian float64.

def dumps(net):
    parts = [MAGIC, struct.pack("<III", FORMAT_VERSION, len(net.weights), HEADS.index(net.head))]
    for w in net.weights:
        parts.append(struct.pack("<II", *w.shape))
    for p in net.params():
        parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(blob, expect_in=None, expect_out=None):
    try:
        return _loads(blob, expect_in, expect_out)
    except (struct.error, ValueError) as exc:
        if isinstance(exc, ShapeError):
            raise
        raise ShapeError(f"truncated or corrupt weight file: {exc}") from None


def _loads(blob, expect_in, expect_out):
    if blob[:len(MAGIC)] != MAGIC:
        raise ShapeError("not a network weight file (bad magic)")
    off = len(MAGIC)
    version, n_layers, head_code = struct.unpack_from("<III", blob, off)
    off += 12
    if version != FORMAT_VERSION:
        raise ShapeError(f"unsupported weight file version {version}")
    if n_layers < 1:
        raise ShapeError("weight file declares no layers")
    if head_code >= len(HEADS):
        raise ShapeError(f"unknown output head code {head_code}")
    shapes = []
    for _ in range(n_layers):
        shapes.append(struct.unpack_from("<II", blob, off))
        off += 8
    if expect_in is not None and shapes[0][1] != expect_in:
        raise ShapeError(f"weight file expects input dimension {shapes[0][1]}, need {expect_in}")
    if expect_out is not None and shapes[-1][0] != expect_out:
        raise ShapeError(f"weight file has output dimension {shapes[-1][0]}, need {expect_out}")
    weights, biases = [], []
    for out_d, in_d in shapes:
        n = out_d * in_d
        weights.append(np.frombuffer(blob, "<f8", n, off).reshape(out_d, in_d).astype(np.float64))
        off += 8 * n
        biases.append(np.frombuffer(blob, "<f8", out_d, off).astype(np.float64))
        off += 8 * out_d
    if off != len(blob):
        raise ShapeError("weight file has trailing bytes")
    return MLP(weights, biases, HEADS[head_code])


def save(net, path):
    with open(path, "wb") as fh:
        fh.write(dumps(net))


def load(path, expect_in=None, expect_out=None):
    with open(path, "rb") as fh:
        return loads(fh.read(), expect_in, expect_out)
