"""Minimal dense-network substrate: MLP forward pass, exact reverse-mode
gradients of the mean-squared-error loss, Adam updates, and a bit-exact
checkpoint format.

Everything is float64 numpy. Networks are small (a few hidden layers of a
few hundred units), shapes are (batch, features), weights are (out, in).
Hidden activation is Mish by default; the output layer is always linear.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericError, ShapeError

Array = np.ndarray

ACTIVATIONS = ("mish", "linear")

CHECKPOINT_MAGIC = "mlp-ckpt-v1"


def _softplus(x: Array) -> Array:
    # log(1 + e^x) without overflow for large |x|
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def mish(x: Array) -> Array:
    return x * np.tanh(_softplus(x))


def mish_grad(x: Array) -> Array:
    t = np.tanh(_softplus(x))
    sig = 1.0 / (1.0 + np.exp(-x))
    return t + x * (1.0 - t * t) * sig


_ACT_FNS = {"mish": (mish, mish_grad), "linear": (lambda x: x, lambda x: np.ones_like(x))}


@dataclass
class MlpParams:
    """Weights and biases of a fully-connected network.

    weights[i] has shape (out_i, in_i) and biases[i] shape (out_i,), with
    in_{i+1} == out_i. The last layer is linear; `activation` applies to all
    hidden layers.
    """

    weights: list[Array]
    biases: list[Array]
    activation: str = "mish"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("weights/biases must be nonempty parallel lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {i}: weight {w.shape} vs bias {b.shape}")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"layer {i}: input dim {w.shape[1]} does not chain")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.in_dim] + [w.shape[0] for w in self.weights]

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights) and all(
            np.isfinite(b).all() for b in self.biases
        )


def init_mlp(layer_sizes: list[int], rng: np.random.Generator, activation: str = "mish") -> MlpParams:
    """He-style fan-in uniform init, zero biases. Deterministic given rng state."""
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, activation)


def step_embedding(k, n_steps: int, dim: int = 16) -> Array:
    """Encode denoising indices k in {1..n_steps} as [k/K, sin/cos bank].

    Output has `dim` entries, all in [-1, 1]: the normalized scalar k/K
    followed by dim-1 sinusoidal features at octave-spaced frequencies.
    Accepts a scalar k (returns (dim,)) or an int array (returns (n, dim)).
    """
    k_arr = np.atleast_1d(np.asarray(k, dtype=np.float64))
    u = k_arr / float(n_steps)
    n_waves = dim - 1
    n_freqs = (n_waves + 1) // 2
    freqs = np.pi * (2.0 ** np.arange(n_freqs))
    ang = u[:, None] * freqs[None, :]
    feats = np.empty((k_arr.shape[0], dim))
    feats[:, 0] = u
    feats[:, 1 : 1 + n_freqs] = np.sin(ang)
    n_cos = n_waves - n_freqs
    feats[:, 1 + n_freqs :] = np.cos(ang[:, :n_cos])
    if np.isscalar(k) or np.asarray(k).ndim == 0:
        return feats[0]
    return feats


def _as_batch(x: Array) -> tuple[Array, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ShapeError(f"expected vector or matrix, got ndim={x.ndim}")


def mlp_forward(params: MlpParams, inp: Array, k_embed: Array | None = None) -> Array:
    """Evaluate the network. If k_embed is given it is concatenated to inp.

    inp may be (features,) or (batch, features); the result matches.
    """
    x, squeeze = _as_batch(inp)
    if k_embed is not None:
        e, _ = _as_batch(k_embed)
        if e.shape[0] == 1 and x.shape[0] > 1:
            e = np.broadcast_to(e, (x.shape[0], e.shape[1]))
        x = np.concatenate([x, e], axis=1)
    if x.shape[1] != params.in_dim:
        raise ShapeError(f"input has {x.shape[1]} features, network expects {params.in_dim}")
    act, _ = _ACT_FNS[params.activation]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if i != last:
            h = act(h)
    return h[0] if squeeze else h


def mlp_loss_grad(params: MlpParams, batch_inputs: Array, batch_targets: Array) -> tuple[float, MlpParams]:
    """MSE loss and its exact reverse-mode gradient.

    loss = mean over the batch of the squared L2 residual (summed over output
    dims). Returns (loss, grads) with grads shaped like params.
    """
    x = np.asarray(batch_inputs, dtype=np.float64)
    y = np.asarray(batch_targets, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ShapeError("batch inputs/targets must be 2-D")
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"batch sizes differ: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[1] != params.in_dim or y.shape[1] != params.out_dim:
        raise ShapeError("feature dims do not match the network")

    act, act_grad = _ACT_FNS[params.activation]
    n = x.shape[0]
    last = len(params.weights) - 1

    # forward, keeping pre-activations
    pre: list[Array] = []
    acts: list[Array] = [x]
    h = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = act(z) if i != last else z
        acts.append(h)

    resid = acts[-1] - y
    loss = float(np.mean(np.sum(resid * resid, axis=1)))

    # backward
    g_w = [np.empty(0)] * len(params.weights)
    g_b = [np.empty(0)] * len(params.biases)
    delta = (2.0 / n) * resid
    for i in range(last, -1, -1):
        g_w[i] = delta.T @ acts[i]
        g_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * act_grad(pre[i - 1])
    return loss, MlpParams(g_w, g_b, params.activation)


@dataclass
class AdamState:
    """First/second-moment accumulators plus hyperparameters."""

    m: list[Array]
    v: list[Array]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: MlpParams, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    zeros = lambda ps: [np.zeros_like(p) for p in ps]
    return AdamState(
        m=zeros(params.weights) + zeros(params.biases),
        v=zeros(params.weights) + zeros(params.biases),
        step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One Adam update with bias correction. Inputs are not mutated."""
    flat_g = grads.weights + grads.biases
    for g in flat_g:
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient entries")
    flat_p = params.weights + params.biases
    if any(g.shape != p.shape for g, p in zip(flat_g, flat_p)):
        raise ShapeError("gradient shapes do not match parameters")

    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(flat_p, flat_g, state.m, state.v):
        m2 = b1 * m + (1 - b1) * g
        v2 = b2 * v + (1 - b2) * (g * g)
        m_hat = m2 / (1 - b1**t)
        v_hat = v2 / (1 - b2**t)
        new_m.append(m2)
        new_v.append(v2)
        new_p.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))

    nw = len(params.weights)
    out = MlpParams(new_p[:nw], new_p[nw:], params.activation)
    return out, replace(state, m=new_m, v=new_v, step=t)


# ---------------------------------------------------------------------------
# checkpoint format: one JSON header line, then the raw little-endian float64
# blob of every weight matrix (C order) followed by every bias vector, in
# layer order. Round-trips are bit-exact.


def save_checkpoint(path: str, params: MlpParams, meta: dict | None = None) -> None:
    header = {
        "format": CHECKPOINT_MAGIC,
        "layer_sizes": params.layer_sizes,
        "activation": params.activation,
        "dtype": "<f8",
        "meta": meta or {},
    }
    blob = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes()
        for a in params.weights + params.biases
    )
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[MlpParams, dict]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        blob = f.read()
    if header.get("format") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    sizes = header["layer_sizes"]
    shapes = [(o, i) for i, o in zip(sizes[:-1], sizes[1:])]
    flat = np.frombuffer(blob, dtype="<f8")
    expected = sum(o * i for o, i in shapes) + sum(o for o, _ in shapes)
    if flat.size != expected:
        raise ValueError(f"{path}: blob has {flat.size} floats, expected {expected}")
    weights, biases, off = [], [], 0
    for o, i in shapes:
        weights.append(flat[off : off + o * i].reshape(o, i).copy())
        off += o * i
    for o, _ in shapes:
        biases.append(flat[off : off + o].copy())
        off += o
    return MlpParams(weights, biases, header["activation"]), header["meta"]
