"""Small dense networks with hand-written reverse mode, layer norm and Adam.

Everything is float64 and batched along the first axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")


class ContractError(ValueError):
    pass


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return expit(z)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a, g):
    if name == "relu":
        return g * (z > 0)
    if name == "sigmoid":
        return g * a * (1.0 - a)
    if name == "tanh":
        return g * (1.0 - a * a)
    return g


def layer_norm(z, alpha, delta, eps_z):
    """Normalize along the last axis with population variance, then scale and shift."""
    z = np.asarray(z, dtype=float)
    mu = z.mean(axis=-1, keepdims=True)
    var = ((z - mu) ** 2).mean(axis=-1, keepdims=True)
    return alpha * (z - mu) / np.sqrt(var + eps_z) + delta


@dataclass
class Dense:
    W: np.ndarray            # (fan_in, fan_out)
    b: np.ndarray
    act: str = "relu"
    alpha: np.ndarray | None = None
    delta: np.ndarray | None = None

    @property
    def has_ln(self):
        return self.alpha is not None

    def params(self):
        out = [self.W, self.b]
        if self.has_ln:
            out += [self.alpha, self.delta]
        return out


@dataclass
class DenseNet:
    layers: list
    eps_z: float = 1e-5
    version: int = field(default=0, compare=False)

    @classmethod
    def build(cls, sizes, rng, hidden_act="relu", out_act="identity", layer_norm=True, eps_z=1e-5):
        """Glorot-uniform weights, zero biases; layer norm on hidden layers only."""
        layers = []
        for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            lim = np.sqrt(6.0 / (fi + fo))
            W = rng.uniform(-lim, lim, size=(fi, fo))
            ln = layer_norm and not last
            layers.append(Dense(
                W=W, b=np.zeros(fo), act=out_act if last else hidden_act,
                alpha=np.ones(fo) if ln else None, delta=np.zeros(fo) if ln else None,
            ))
        return cls(layers, eps_z)

    @property
    def input_dim(self):
        return self.layers[0].W.shape[0]

    @property
    def output_dim(self):
        return self.layers[-1].W.shape[1]

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, vec):
        i = 0
        for p in self.params():
            p[...] = vec[i:i + p.size].reshape(p.shape)
            i += p.size
        self.version += 1

    def copy(self):
        net = DenseNet([Dense(l.W.copy(), l.b.copy(), l.act,
                              None if l.alpha is None else l.alpha.copy(),
                              None if l.delta is None else l.delta.copy()) for l in self.layers],
                       self.eps_z)
        return net


@dataclass
class Cache:
    version: int
    squeeze: bool
    entries: list


def forward(net: DenseNet, x):
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[-1] != net.input_dim:
        raise ContractError(f"input has {h.shape[-1]} features, net expects {net.input_dim}")
    entries = []
    for layer in net.layers:
        z = h @ layer.W + layer.b
        if layer.has_ln:
            mu = z.mean(axis=-1, keepdims=True)
            inv = 1.0 / np.sqrt(((z - mu) ** 2).mean(axis=-1, keepdims=True) + net.eps_z)
            n = (z - mu) * inv
            zz = layer.alpha * n + layer.delta
        else:
            n = inv = None
            zz = z
        a = _act(layer.act, zz)
        entries.append((h, zz, a, n, inv))
        h = a
    return (h[0] if squeeze else h), Cache(net.version, squeeze, entries)


def backward(net: DenseNet, cache: Cache, grad_output):
    """Gradients of sum(output * grad_output) w.r.t. parameters and input."""
    if cache.version != net.version or len(cache.entries) != len(net.layers):
        raise ContractError("cache does not belong to the current parameters")
    g = np.asarray(grad_output, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    grads = []
    for layer, (h, zz, a, n, inv) in zip(reversed(net.layers), reversed(cache.entries)):
        g = _act_grad(layer.act, zz, a, g)
        if layer.has_ln:
            d_alpha = (g * n).sum(axis=0)
            d_delta = g.sum(axis=0)
            gn = g * layer.alpha
            d = gn.shape[-1]
            g = inv * (gn - gn.mean(axis=-1, keepdims=True)
                       - n * (gn * n).sum(axis=-1, keepdims=True) / d)
            layer_grads = [None, None, d_alpha, d_delta]
        else:
            layer_grads = [None, None]
        layer_grads[0] = h.T @ g
        layer_grads[1] = g.sum(axis=0)
        g = g @ layer.W.T
        grads = layer_grads + grads
    return grads, (g[0] if cache.squeeze else g)


@dataclass
class AdamState:
    m: list
    v: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    @classmethod
    def like(cls, params, lr=1e-3, **kw):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], lr, **kw)


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam, applied in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError("parameter, gradient and moment lists differ in length")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_global(grads, threshold):
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    norm = global_norm(grads)
    if norm > threshold:
        grads = [g * (threshold / norm) for g in grads]
    return grads


def apply_adam(net: DenseNet, grads, state: AdamState):
    adam_step(net.params(), grads, state)
    net.version += 1
