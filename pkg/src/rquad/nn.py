"""Dense feed-forward networks with hand-written backprop and Adam.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
shape ``(n, fan_in)`` maps to ``X @ W + b``. Everything is float64.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

import numpy as np

ACTIVATIONS = ("tanh", "linear")


class ConfigurationError(ValueError):
    """Shapes or tags of a network do not line up."""


class DivergenceError(FloatingPointError):
    """A gradient, loss or parameter became non-finite during training."""


def _layout(dims):
    # (start, stop) offsets of each weight matrix and bias inside the flat vector
    spans, pos = [], 0
    for i in range(len(dims) - 1):
        w = (pos, pos + dims[i] * dims[i + 1])
        b = (w[1], w[1] + dims[i + 1])
        spans.append((w, b))
        pos = b[1]
    return spans, pos


def _views(flat, dims, spans):
    weights = [flat[w0:w1].reshape(dims[i], dims[i + 1]) for i, ((w0, w1), _) in enumerate(spans)]
    biases = [flat[b0:b1] for _, (b0, b1) in spans]
    return weights, biases


class MlpParams:
    """Weights and biases of one network, backed by a single flat vector.

    ``weights[i]`` and ``biases[i]`` are views into ``flat``, so optimiser
    and target-network updates act on all parameters at once.
    """

    def __init__(self, layer_dims, weights, biases, hidden_activation="tanh", output_activation="linear"):
        dims = tuple(int(d) for d in layer_dims)
        n = len(dims) - 1
        if n < 1:
            raise ConfigurationError("layer_dims needs at least an input and an output size")
        if len(weights) != n or len(biases) != n:
            raise ConfigurationError(
                f"expected {n} weight/bias pairs for dims {dims}, got {len(weights)}/{len(biases)}"
            )
        for i, (w, b) in enumerate(zip(weights, biases)):
            shape = (dims[i], dims[i + 1])
            if np.shape(w) != shape or np.shape(b) != (shape[1],):
                raise ConfigurationError(
                    f"layer {i}: weight {np.shape(w)} / bias {np.shape(b)} do not match dims {shape}"
                )
        flat = np.concatenate([np.concatenate([np.ravel(w), np.ravel(b)]) for w, b in zip(weights, biases)])
        self._init(dims, flat.astype(float, copy=False), hidden_activation, output_activation)

    def _init(self, dims, flat, hidden_activation, output_activation):
        for tag in (hidden_activation, output_activation):
            if tag not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {tag!r}")
        spans, size = _layout(dims)
        if flat.shape != (size,):
            raise ConfigurationError(f"flat vector of length {flat.shape} for dims {dims} (needs {size})")
        self.layer_dims = dims
        self.flat = flat
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.weights, self.biases = _views(flat, dims, spans)

    @classmethod
    def from_flat(cls, layer_dims, flat, hidden_activation="tanh", output_activation="linear") -> "MlpParams":
        obj = cls.__new__(cls)
        obj._init(tuple(int(d) for d in layer_dims), np.asarray(flat, dtype=float), hidden_activation, output_activation)
        return obj

    def like(self, flat) -> "MlpParams":
        """Same architecture, new parameter vector."""
        return MlpParams.from_flat(self.layer_dims, flat, self.hidden_activation, self.output_activation)

    def __repr__(self):
        return (
            f"MlpParams(layer_dims={self.layer_dims}, hidden_activation={self.hidden_activation!r}, "
            f"output_activation={self.output_activation!r})"
        )

    def __eq__(self, other):
        if not isinstance(other, MlpParams):
            return NotImplemented
        return (
            self.layer_dims == other.layer_dims
            and self.hidden_activation == other.hidden_activation
            and self.output_activation == other.output_activation
            and np.array_equal(self.flat, other.flat)
        )

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def size(self) -> int:
        return self.flat.size

    def copy(self) -> "MlpParams":
        return self.like(self.flat.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.flat).all())

    def same_shape(self, other: "MlpParams") -> bool:
        return self.layer_dims == other.layer_dims


class MlpGrads(NamedTuple):
    """Parameter gradients (flat, with per-layer views) and the input gradient."""

    flat: np.ndarray
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    inputs: np.ndarray


class Cache(NamedTuple):
    layer_dims: tuple
    # activations[0] is the input, activations[k] the output of layer k
    activations: List[np.ndarray]
    squeeze: bool


def init_mlp(
    layer_dims: Sequence[int],
    rng: np.random.Generator,
    output_activation: str = "linear",
    hidden_activation: str = "tanh",
    final_scale: float = 1.0,
) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.

    ``final_scale`` shrinks the last layer, e.g. so a fresh policy starts
    close to the neutral action.
    """
    dims = tuple(int(d) for d in layer_dims)
    weights, biases = [], []
    for i in range(len(dims) - 1):
        bound = 1.0 / np.sqrt(dims[i])
        if i == len(dims) - 2:
            bound *= final_scale
        weights.append(rng.uniform(-bound, bound, size=(dims[i], dims[i + 1])))
        biases.append(rng.uniform(-bound, bound, size=dims[i + 1]))
    return MlpParams(dims, weights, biases, hidden_activation, output_activation)


def mlp_forward(params: MlpParams, x) -> tuple[np.ndarray, Cache]:
    """Forward pass for one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.layer_dims[0]:
        raise ConfigurationError(
            f"input has shape {x.shape}, network expects {params.layer_dims[0]} features"
        )
    acts = [x]
    h = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w
        h += b
        tag = params.output_activation if i == last else params.hidden_activation
        if tag == "tanh":
            np.tanh(h, out=h)
        acts.append(h)
    out = h[0] if squeeze else h
    return out, Cache(params.layer_dims, acts, squeeze)


def predict(params: MlpParams, x) -> np.ndarray:
    return mlp_forward(params, x)[0]


def mlp_backward(params: MlpParams, cache: Cache, output_grad, inputs_only: bool = False) -> MlpGrads:
    """Reverse-mode gradients of ``sum(output * output_grad)``.

    Gradients are summed over the batch; scale ``output_grad`` for means.
    With ``inputs_only`` the parameter gradients are skipped (left zero).
    """
    if cache.layer_dims != params.layer_dims:
        raise ConfigurationError(
            f"cache from a {cache.layer_dims} network used with {params.layer_dims}"
        )
    g = np.asarray(output_grad, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.activations[-1].shape:
        raise ConfigurationError(
            f"output_grad shape {g.shape} != output shape {cache.activations[-1].shape}"
        )
    flat = np.zeros(params.size)
    gw, gb = _views(flat, params.layer_dims, _layout(params.layer_dims)[0])
    n = params.n_layers
    for i in range(n - 1, -1, -1):
        tag = params.output_activation if i == n - 1 else params.hidden_activation
        if tag == "tanh":
            y = cache.activations[i + 1]
            g = g * (1.0 - y * y)
        if not inputs_only:
            np.matmul(cache.activations[i].T, g, out=gw[i])
            np.sum(g, axis=0, out=gb[i])
        g = g @ params.weights[i].T
    return MlpGrads(flat, gw, gb, g[0] if cache.squeeze else g)


@dataclass
class AdamState:
    first_moments: np.ndarray
    second_moments: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: MlpParams, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(np.zeros(params.size), np.zeros(params.size), 0, beta1, beta2, eps)


def adam_step(
    params: MlpParams, grads: MlpGrads, state: AdamState, lr: float
) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    g = grads.flat
    if g.shape != params.flat.shape or state.first_moments.shape != params.flat.shape:
        raise ConfigurationError(
            f"Adam shapes differ: params {params.flat.shape}, grads {g.shape}, "
            f"moments {state.first_moments.shape}"
        )
    if not np.isfinite(g).all():
        raise DivergenceError("non-finite gradient passed to adam_step")
    b1, b2 = state.beta1, state.beta2
    t = state.t + 1
    m = b1 * state.first_moments + (1.0 - b1) * g
    v = b2 * state.second_moments + (1.0 - b2) * (g * g)
    step = np.sqrt(v / (1.0 - b2**t))
    step += state.eps
    np.divide(m / (1.0 - b1**t), step, out=step)
    step *= lr
    new = params.flat - step
    return params.like(new), AdamState(m, v, t, b1, b2, state.eps)


def soft_update(target: MlpParams, source: MlpParams, tau: float) -> MlpParams:
    """Blend ``tau * source + (1 - tau) * target`` parameter-wise."""
    if not target.same_shape(source):
        raise ConfigurationError(
            f"soft_update between {target.layer_dims} and {source.layer_dims}"
        )
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return target.like(tau * source.flat + (1.0 - tau) * target.flat)
