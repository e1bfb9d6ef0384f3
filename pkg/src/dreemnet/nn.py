"""Small dense ReLU networks with hand-written backprop, SGD and Adam.

Weights are stored ``(out, in)`` so a batch ``X`` of shape (N, in) maps to
``X @ W.T + b``.  Updates return fresh arrays; nothing is mutated in place.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class MlpParams:
    layers: list  # [(W, b), ...]

    @property
    def dims(self) -> list[int]:
        return [self.layers[0][0].shape[1]] + [W.shape[0] for W, _ in self.layers]

    def copy(self) -> "MlpParams":
        return MlpParams([(W.copy(), b.copy()) for W, b in self.layers])

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def to_dict(self) -> dict:
        return {"dims": self.dims,
                "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        layers = [(np.array(l["W"], dtype=float).reshape(o, i), np.array(l["b"], dtype=float))
                  for l, i, o in zip(d["layers"], d["dims"][:-1], d["dims"][1:])]
        return cls(layers)


def init_mlp(dims, rng) -> MlpParams:
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ValueError("need at least an input and an output size")
    if min(dims) < 1:
        raise ValueError("layer sizes must be positive")
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        layers.append((rng.uniform(-bound, bound, (fan_out, fan_in)), np.zeros(fan_out)))
    return MlpParams(layers)


def forward(params: MlpParams, x):
    """Return ``(y, cache)``; ``x`` is one input vector or a (N, in) batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.dims[0]:
        raise ValueError(f"input has {h.shape[1]} features, network expects {params.dims[0]}")
    inputs = []
    last = len(params.layers) - 1
    for i, (W, b) in enumerate(params.layers):
        inputs.append(h)
        z = h @ W.T + b
        h = z if i == last else np.maximum(z, 0.0)
    return (h[0] if single else h), (inputs, single)


def backward(params: MlpParams, cache, dy) -> list:
    """Gradients of ``sum(y * dy)`` w.r.t. every (W, b), summed over the batch."""
    inputs, single = cache
    g = np.asarray(dy, dtype=float)
    if single:
        g = g[None, :]
    grads = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[i]
        h = inputs[i]
        grads[i] = (g.T @ h, g.sum(axis=0))
        if i:
            # the input of layer i is relu(z_{i-1}); relu'(z) = [h > 0]
            g = (g @ W) * (h > 0)
    return grads


@dataclass
class OptState:
    mode: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "step": self.step,
                "m": [[a.tolist() for a in pair] for pair in self.m],
                "v": [[a.tolist() for a in pair] for pair in self.v]}

    @classmethod
    def from_dict(cls, d: dict) -> "OptState":
        pairs = lambda key: [tuple(np.array(a, dtype=float) for a in pair) for pair in d[key]]
        return cls(d["mode"], d["lr"], d["beta1"], d["beta2"], d["eps"], d["step"],
                   pairs("m"), pairs("v"))


def init_opt(params: MlpParams, mode="adam", lr=1e-3, **kw) -> OptState:
    if mode not in ("adam", "sgd"):
        raise ValueError(f"unknown optimizer {mode!r}")
    zeros = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params.layers]
    return OptState(mode, lr, m=zeros, v=[(a.copy(), b.copy()) for a, b in zeros], **kw)


def opt_step(params: MlpParams, grads, opt: OptState):
    """One optimizer step; returns ``(params, opt)`` as new objects."""
    if len(grads) != len(params.layers):
        raise ValueError("gradient list does not match the layers")
    t = opt.step + 1
    if opt.mode == "sgd":
        layers = [(W - opt.lr * gW, b - opt.lr * gb)
                  for (W, b), (gW, gb) in zip(params.layers, grads)]
        return MlpParams(layers), OptState(opt.mode, opt.lr, opt.beta1, opt.beta2,
                                           opt.eps, t, opt.m, opt.v)
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    layers, ms, vs = [], [], []
    for (W, b), (gW, gb), (mW, mb), (vW, vb) in zip(params.layers, grads, opt.m, opt.v):
        new = []
        for p, g, m, v in ((W, gW, mW, vW), (b, gb, mb, vb)):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            new.append((p - opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps), m, v))
        layers.append((new[0][0], new[1][0]))
        ms.append((new[0][1], new[1][1]))
        vs.append((new[0][2], new[1][2]))
    return MlpParams(layers), OptState(opt.mode, opt.lr, b1, b2, opt.eps, t, ms, vs)


# --------------------------------------------------------------------------
# checkpoints

def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, params: MlpParams, opt: OptState | None = None,
                    rng_state=None, cfg_hash: str = "") -> None:
    doc = params.to_dict()
    doc["optimizer"] = opt.to_dict() if opt is not None else None
    doc["rng_state"] = rng_state
    doc["config_hash"] = cfg_hash
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path):
    """Return ``(params, opt, rng_state, config_hash)``."""
    doc = json.loads(Path(path).read_text())
    opt = OptState.from_dict(doc["optimizer"]) if doc.get("optimizer") else None
    return MlpParams.from_dict(doc), opt, doc.get("rng_state"), doc.get("config_hash", "")
