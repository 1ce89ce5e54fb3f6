"""Small feedforward network with manual forward/backward passes.

Supports ReLU/Sigmoid activations and inverted dropout. The forward pass
records everything the backward pass needs (pre-activations, activations,
dropout masks), so gradients of any scalar loss on the output probability
can be accumulated with plain reverse-mode chain rule.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Activation(enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"


class Mode(enum.Enum):
    TRAIN = "train"
    INFER = "infer"


def sigmoid(z):
    # numerically stable split form
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z, kind: Activation):
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    return sigmoid(z)


def _activate_grad(z, a, kind: Activation):
    # subderivative 0 at the ReLU kink
    if kind is Activation.RELU:
        return (z > 0.0).astype(float)
    return a * (1.0 - a)


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray   # (out,)
    activation: Activation
    dropout_rate: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ValueError("weights/biases shape mismatch")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise ValueError("non-finite parameters")


@dataclass
class MlpModel:
    layers: list[Layer]
    seed: int = 0

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weights.shape[1] != prev.weights.shape[0]:
                raise ValueError("incompatible consecutive layer dimensions")
        last = self.layers[-1]
        if last.weights.shape[0] != 1 or last.activation is not Activation.SIGMOID:
            raise ValueError("final layer must have width 1 and sigmoid activation")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            layers=[Layer(l.weights.copy(), l.biases.copy(), l.activation, l.dropout_rate)
                    for l in self.layers],
            seed=self.seed,
        )

    def parameters(self) -> list[np.ndarray]:
        out = []
        for l in self.layers:
            out.append(l.weights)
            out.append(l.biases)
        return out


@dataclass
class ForwardTrace:
    """Per-layer bookkeeping from one forward pass over a batch."""

    inputs: np.ndarray                 # (n, d)
    pre_activations: list[np.ndarray]  # each (n, width)
    activations: list[np.ndarray]
    masks: list[np.ndarray]            # inverted-dropout masks, all-ones in Infer
    output: np.ndarray = field(init=False)  # (n,) probabilities

    def __post_init__(self):
        self.output = self.activations[-1][:, 0]


def forward_single_layer(weights: np.ndarray, x: np.ndarray) -> float:
    """Bias-free single-layer network: sigmoid of the weighted feature sum."""
    w = np.asarray(weights, dtype=float)
    xv = np.asarray(x, dtype=float)
    if w.shape != xv.shape:
        raise ValueError(f"weight/input length mismatch: {w.shape} vs {xv.shape}")
    return float(sigmoid(np.array([w @ xv]))[0])


def forward(model: MlpModel, x: np.ndarray, mode: Mode = Mode.INFER,
            rng: np.random.Generator | None = None) -> ForwardTrace:
    """Run the network over one instance (1-D input) or a batch (2-D).

    Train mode applies inverted dropout after each activation using the
    provided generator; Infer mode is deterministic with all-ones masks.
    """
    xa = np.atleast_2d(np.asarray(x, dtype=float))
    if xa.shape[1] != model.input_dim:
        raise ValueError(f"input dim {xa.shape[1]} != model input dim {model.input_dim}")
    if not np.isfinite(xa).all():
        raise ValueError("non-finite input")
    if mode is Mode.TRAIN and rng is None:
        raise ValueError("Train mode requires a random generator")

    pre, act, masks = [], [], []
    a = xa
    for layer in model.layers:
        z = a @ layer.weights.T + layer.biases
        h = _activate(z, layer.activation)
        if mode is Mode.TRAIN and layer.dropout_rate > 0.0:
            keep = 1.0 - layer.dropout_rate
            mask = (rng.random(h.shape) < keep).astype(float) / keep
        else:
            mask = np.ones_like(h)
        h = h * mask
        pre.append(z)
        act.append(h)
        masks.append(mask)
        a = h
    return ForwardTrace(inputs=xa, pre_activations=pre, activations=act, masks=masks)


def backward(trace: ForwardTrace, model: MlpModel,
             dloss_dy: float | np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Reverse-mode accumulation of d(loss)/d(parameters).

    ``dloss_dy`` is the loss derivative with respect to each instance's
    output probability (scalar for a single instance, vector for a batch);
    gradients are summed over the batch, so pre-scale by 1/n for a mean
    loss. Returns [(dW, db), ...] per layer.
    """
    if len(trace.pre_activations) != len(model.layers):
        raise ValueError("trace/model layer count mismatch")
    n = trace.inputs.shape[0]
    seed = np.asarray(dloss_dy, dtype=float).reshape(-1)
    if seed.size == 1 and n > 1:
        seed = np.full(n, seed[0])
    if seed.size != n:
        raise ValueError("dloss_dy length does not match the traced batch")

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)
    delta = seed[:, None]  # (n, width) running dLoss/d(post-dropout activation)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        z = trace.pre_activations[i]
        mask = trace.masks[i]
        raw_act = trace.activations[i] / np.where(mask == 0.0, 1.0, mask)
        dz = delta * mask * _activate_grad(z, raw_act, layer.activation)
        a_prev = trace.inputs if i == 0 else trace.activations[i - 1]
        grads[i] = (dz.T @ a_prev, dz.sum(axis=0))
        delta = dz @ layer.weights
    return grads


def _glorot_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def build_mlp(input_dim: int, spec: list[tuple[int, Activation, float]],
              seed: int) -> MlpModel:
    """Build a seeded model from (width, activation, dropout_rate) triples."""
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = input_dim
    for width, activation, rate in spec:
        layers.append(Layer(
            weights=_glorot_uniform(rng, width, fan_in),
            biases=np.zeros(width),
            activation=activation,
            dropout_rate=rate,
        ))
        fan_in = width
    return MlpModel(layers=layers, seed=seed)


def build_experiment_model(input_dim: int, seed: int) -> MlpModel:
    """The fixed experiment architecture:
    64 relu + drop .25, 32 sigmoid + drop .25, 16 relu + drop .25,
    8 relu, 1 sigmoid."""
    return build_mlp(input_dim, [
        (64, Activation.RELU, 0.25),
        (32, Activation.SIGMOID, 0.25),
        (16, Activation.RELU, 0.25),
        (8, Activation.RELU, 0.0),
        (1, Activation.SIGMOID, 0.0),
    ], seed)


def build_boundary_model(input_dim: int, seed: int) -> MlpModel:
    """Shallow net used for 2-feature decision-boundary pictures."""
    return build_mlp(input_dim, [
        (8, Activation.RELU, 0.0),
        (4, Activation.RELU, 0.0),
        (1, Activation.SIGMOID, 0.0),
    ], seed)


def predict_proba(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Deterministic inference probabilities for a batch."""
    return forward(model, X, Mode.INFER).output


CHECKPOINT_MAGIC = "xmargin-checkpoint v1"


def save_model(model: MlpModel, path) -> None:
    """Flat text checkpoint: header, per-layer shape lines, then row-major
    parameters at full double precision."""
    lines = [CHECKPOINT_MAGIC, f"seed {model.seed}", f"layers {len(model.layers)}"]
    for l in model.layers:
        lines.append(f"layer {l.weights.shape[0]} {l.weights.shape[1]} "
                     f"{l.activation.value} {l.dropout_rate!r}")
    for l in model.layers:
        for arr in (l.weights, l.biases):
            lines.append(" ".join(repr(float(v)) for v in arr.ravel()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> MlpModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a model checkpoint: {path}")
    seed = int(lines[1].split()[1])
    n_layers = int(lines[2].split()[1])
    shapes = []
    for i in range(n_layers):
        _, out_d, in_d, act, rate = lines[3 + i].split()
        shapes.append((int(out_d), int(in_d), Activation(act), float(rate)))
    layers = []
    pos = 3 + n_layers
    for out_d, in_d, act, rate in shapes:
        w = np.array([float(v) for v in lines[pos].split()]).reshape(out_d, in_d)
        b = np.array([float(v) for v in lines[pos + 1].split()])
        pos += 2
        layers.append(Layer(w, b, act, rate))
    return MlpModel(layers=layers, seed=seed)
