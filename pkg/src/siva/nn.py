"""Small dense feed-forward networks with manual backprop and Adam.

Everything runs in 64-bit numpy. The coefficient magnitudes handled
downstream span roughly 1e-1 to 1e8, so float32 is not an option.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("leaky_relu", "sigmoid", "linear")

# Clamp applied to probabilities before log() in the cross-entropy loss.
BCE_EPS = 1e-7


@dataclass(frozen=True)
class LayerSpec:
    """Shape and activation of one dense layer.

    init_scale multiplies the fan-in init std; 0 starts the layer's
    output at exactly zero (used for output heads that must begin
    collapsed).
    """

    input_dim: int
    output_dim: int
    activation: str = "leaky_relu"
    slope: float = 0.2  # negative-side slope, leaky_relu only
    init_scale: float = 1.0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("layer dimensions must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError("leaky_relu slope must lie in (0, 1)")
        if self.init_scale < 0.0:
            raise ValueError("init_scale must be >= 0")


@dataclass
class Layer:
    weights: np.ndarray  # (output_dim, input_dim)
    bias: np.ndarray  # (output_dim,)
    activation: str
    slope: float = 0.2


@dataclass
class Mlp:
    layers: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    def parameter_arrays(self):
        """Flat list of trainable arrays, weights then bias per layer."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            [
                Layer(l.weights.copy(), l.bias.copy(), l.activation, l.slope)
                for l in self.layers
            ]
        )


def mlp_init(specs: list[LayerSpec], seed) -> Mlp:
    """Deterministically initialize a network from layer specs.

    Weights are zero-mean normal with variance 2/fan_in (suited to the
    leaky-rectified hidden layers); biases start at zero.
    """
    if not specs:
        raise ValueError("at least one LayerSpec is required")
    for prev, cur in zip(specs, specs[1:]):
        if prev.output_dim != cur.input_dim:
            raise ValueError(
                f"layer dims do not chain: {prev.output_dim} -> {cur.input_dim}"
            )
    rng = np.random.default_rng(seed)
    layers = []
    for spec in specs:
        scale = spec.init_scale * np.sqrt(2.0 / spec.input_dim)
        w = scale * rng.standard_normal((spec.output_dim, spec.input_dim))
        b = np.zeros(spec.output_dim)
        layers.append(Layer(w, b, spec.activation, spec.slope))
    return Mlp(layers)


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z, activation, slope):
    if activation == "leaky_relu":
        return np.where(z > 0.0, z, slope * z)
    if activation == "sigmoid":
        return _sigmoid(z)
    return z


def _activation_grad(z, activation, slope):
    if activation == "leaky_relu":
        return np.where(z > 0.0, 1.0, slope)
    if activation == "sigmoid":
        s = _sigmoid(z)
        return s * (1.0 - s)
    return np.ones_like(z)


def mlp_forward(net: Mlp, batch: np.ndarray):
    """Forward pass. Returns (output, cache) where the cache holds the
    per-layer inputs and pre-activations needed by mlp_backward."""
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2:
        raise ValueError("batch must be 2-D (samples x input_dim)")
    if x.shape[1] != net.input_dim:
        raise ValueError(f"expected input dim {net.input_dim}, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in network input")
    cache = []
    for layer in net.layers:
        z = x @ layer.weights.T + layer.bias
        cache.append((x, z))
        x = _activate(z, layer.activation, layer.slope)
    return x, cache


def mlp_backward(net: Mlp, cache, output_gradient: np.ndarray):
    """Exact reverse-mode gradients for a forward pass.

    Returns (param_gradients, input_gradient) with param_gradients a list
    of (dW, db) in layer order.
    """
    dout = np.asarray(output_gradient, dtype=float)
    if len(cache) != len(net.layers):
        raise ValueError("cache does not match network depth")
    if dout.shape != (cache[-1][1].shape[0], net.output_dim):
        raise ValueError("output gradient shape does not match cached forward pass")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        x_in, z = cache[i]
        dz = dout * _activation_grad(z, layer.activation, layer.slope)
        grads[i] = (dz.T @ x_in, dz.sum(axis=0))
        dout = dz @ layer.weights
    return grads, dout


@dataclass
class AdamState:
    """Adam accumulators for one network (moments mirror the layer arrays)."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def for_network(cls, net: Mlp, learning_rate: float = 1e-4, **kwargs) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kwargs)
        state.first_moment = [np.zeros_like(p) for p in net.parameter_arrays()]
        state.second_moment = [np.zeros_like(p) for p in net.parameter_arrays()]
        return state


def adam_step(net: Mlp, grads, state: AdamState):
    """One in-place Adam update (bias-corrected). Rejects non-finite grads."""
    flat = []
    for dw, db in grads:
        flat.append(dw)
        flat.append(db)
    params = net.parameter_arrays()
    if len(flat) != len(params):
        raise ValueError("gradient structure does not match network")
    for g, p in zip(flat, params):
        if g.shape != p.shape:
            raise ValueError("gradient shape does not match parameter shape")
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient passed to adam_step")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, flat, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return net, state


def bce_loss(predictions: np.ndarray, labels: np.ndarray):
    """Mean binary cross-entropy and its gradient w.r.t. the predictions.

    Predictions are clamped into [BCE_EPS, 1-BCE_EPS] before the log so a
    saturated classifier cannot produce -inf.
    """
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.size == 0:
        raise ValueError("empty prediction vector")
    if p.shape != y.shape:
        raise ValueError("predictions and labels must have the same shape")
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    loss = float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))))
    # slope evaluated at the clamped probability (not zeroed outside the
    # clamp): composed with a sigmoid layer this reproduces the standard
    # non-saturating p - y pre-activation gradient instead of a dead zone
    grad = (pc - y) / (pc * (1.0 - pc)) / p.size
    return loss, grad


def mse_loss(predicted: np.ndarray, target: np.ndarray):
    """Mean squared error over all entries and its gradient."""
    p = np.asarray(predicted, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError("predicted and target must have the same shape")
    diff = p - t
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / p.size
    return loss, grad


def mlp_to_dict(net: Mlp) -> dict:
    """JSON-ready layout. Field order per layer: activation, slope,
    weights (row-major, output x input), bias."""
    return {
        "layers": [
            {
                "activation": l.activation,
                "slope": l.slope,
                "weights": l.weights.tolist(),
                "bias": l.bias.tolist(),
            }
            for l in net.layers
        ]
    }


def mlp_from_dict(payload: dict) -> Mlp:
    layers = []
    for entry in payload["layers"]:
        layers.append(
            Layer(
                np.asarray(entry["weights"], dtype=float),
                np.asarray(entry["bias"], dtype=float),
                entry["activation"],
                float(entry.get("slope", 0.2)),
            )
        )
    return Mlp(layers)
