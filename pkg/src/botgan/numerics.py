"""Dense feed-forward networks with hand-written backprop, losses and Adam.

Everything runs in float64 on numpy. A forward pass returns the output and a
:class:`Tape` of cached activations; :func:`backward` consumes the tape and
returns parameter gradients plus the gradient with respect to the input, which
is what lets the generator be trained through the discriminator.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import LabelOutOfRange, NonFiniteActivation, ShapeMismatch, StaleTape

ACTIVATIONS = ("leaky_relu", "sigmoid", "linear", "softmax")
PROB_CLIP = 1e-7
INIT_STD = 0.02
CHECKPOINT_FORMAT = 1


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "linear"
    alpha: float = 0.2  # leaky-ReLU negative slope

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeMismatch(f"bias {self.bias.shape} does not fit weight {self.weight.shape}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


class DenseNet:
    """A chain of fully connected layers.

    ``version`` increases whenever the parameters are updated through
    :meth:`step`; tapes recorded against an older version are rejected.
    """

    def __init__(self, layers: Sequence[Layer], rng_seed: int | None = None):
        layers = list(layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if b.in_dim != a.out_dim:
                raise ShapeMismatch(f"layer widths do not chain: {a.out_dim} -> {b.in_dim}")
        self.layers = layers
        self.rng_seed = rng_seed
        self.version = 0

    @classmethod
    def build(cls, sizes: Sequence[int], activations: Sequence[str], seed: int,
              init_std: float = INIT_STD, alpha: float = 0.2) -> "DenseNet":
        """Weights ~ N(0, init_std^2), zero biases. ``sizes`` includes the input width."""
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        rng = np.random.default_rng(seed)
        layers = [
            Layer(rng.normal(0.0, init_std, size=(n_out, n_in)), np.zeros(n_out), act, alpha)
            for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations)
        ]
        return cls(layers, rng_seed=seed)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def step(self, grads: "ParamGrads", state: "AdamState") -> None:
        adam_step(self.params(), grads.as_list(), state)
        self.version += 1

    def copy(self) -> "DenseNet":
        net = DenseNet([Layer(l.weight.copy(), l.bias.copy(), l.activation, l.alpha)
                        for l in self.layers], self.rng_seed)
        net.version = self.version
        return net


@dataclass
class Tape:
    net_id: int
    version: int
    inputs: list  # input to each layer
    outputs: list  # post-activation output of each layer
    pre: list  # pre-activation of each layer


@dataclass
class ParamGrads:
    weights: list
    biases: list
    input: np.ndarray

    def as_list(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def _activate(z: np.ndarray, layer: Layer) -> np.ndarray:
    act = layer.activation
    if act == "linear":
        return z
    if act == "leaky_relu":
        return np.where(z > 0.0, z, layer.alpha * z)
    if act == "sigmoid":
        # split by sign so exp never overflows
        out = np.empty_like(z)
        pos = z >= 0.0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _activation_backward(g: np.ndarray, layer: Layer, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    act = layer.activation
    if act == "linear":
        return g
    if act == "leaky_relu":
        return np.where(z > 0.0, g, layer.alpha * g)
    if act == "sigmoid":
        return g * a * (1.0 - a)
    return a * (g - np.sum(g * a, axis=1, keepdims=True))


def forward(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeMismatch(f"input shape {x.shape} does not match network input width {net.in_dim}")
    inputs, outputs, pre = [], [], []
    h = x
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        h = _activate(z, layer)
        pre.append(z)
        outputs.append(h)
    if not np.all(np.isfinite(h)):
        raise NonFiniteActivation("network produced non-finite activations")
    return h, Tape(id(net), net.version, inputs, outputs, pre)


def backward(net: DenseNet, tape: Tape, grad_output: np.ndarray) -> ParamGrads:
    """Gradients of a scalar loss given dL/d(output) for every row."""
    if tape.net_id != id(net) or tape.version != net.version or len(tape.inputs) != len(net.layers):
        raise StaleTape("tape was recorded on a different network or before a parameter update")
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != tape.outputs[-1].shape:
        raise ShapeMismatch(f"grad_output shape {g.shape} != output shape {tape.outputs[-1].shape}")
    n_layers = len(net.layers)
    dws, dbs = [None] * n_layers, [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        layer = net.layers[i]
        g = _activation_backward(g, layer, tape.pre[i], tape.outputs[i])
        dws[i] = g.T @ tape.inputs[i]
        dbs[i] = g.sum(axis=0)
        g = g @ layer.weight
    return ParamGrads(dws, dbs, g)


# --- losses ------------------------------------------------------------------

def bce_loss(pred: np.ndarray, target, eps_clip: float = PROB_CLIP) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient with respect to ``pred``."""
    p = np.clip(np.asarray(pred, dtype=np.float64), eps_clip, 1.0 - eps_clip)
    t = np.broadcast_to(np.asarray(target, dtype=np.float64), p.shape)
    n = p.size
    loss = -np.sum(t * np.log(p) + (1.0 - t) * np.log1p(-p)) / n
    grad = (-t / p + (1.0 - t) / (1.0 - p)) / n
    return float(loss), grad


def softmax_ce_loss(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy; grad is (softmax - onehot) / n."""
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = z.shape
    if k < 2:
        raise ShapeMismatch("softmax cross-entropy needs at least two classes")
    if labels.shape != (n,):
        raise ShapeMismatch(f"{labels.shape[0]} labels for {n} rows")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_norm
    rows = np.arange(n)
    loss = -log_p[rows, labels].sum() / n
    grad = np.exp(log_p)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


# --- embedding ---------------------------------------------------------------

@dataclass
class Embedding:
    table: np.ndarray  # (K, E)

    @classmethod
    def build(cls, k: int, width: int, seed: int, init_std: float = 1.0) -> "Embedding":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, init_std, size=(k, width)))

    @property
    def k(self) -> int:
        return self.table.shape[0]

    @property
    def width(self) -> int:
        return self.table.shape[1]


def _check_labels(e: Embedding, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= e.k):
        raise LabelOutOfRange(f"labels must lie in [0, {e.k})")
    return labels


def embed_lookup(e: Embedding, labels) -> np.ndarray:
    return e.table[_check_labels(e, labels)]


def embed_backward(e: Embedding, labels, grad: np.ndarray) -> np.ndarray:
    """Gradient for the whole table; repeated labels accumulate."""
    labels = _check_labels(e, labels)
    out = np.zeros_like(e.table)
    np.add.at(out, labels, grad)
    return out


# --- Adam --------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 2e-4, beta1: float = 0.5,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   0, lr, beta1, beta2, eps)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params, grads and optimizer buffers differ in count")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise ShapeMismatch(f"parameter {p.shape} vs gradient {np.shape(g)}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# --- checkpoint I/O ----------------------------------------------------------

def net_arrays(prefix: str, net: DenseNet) -> tuple[dict, dict]:
    arrays, meta = {}, {"activations": [], "alphas": [], "shapes": [], "rng_seed": net.rng_seed}
    for i, layer in enumerate(net.layers):
        arrays[f"{prefix}/{i}/W"] = layer.weight
        arrays[f"{prefix}/{i}/b"] = layer.bias
        meta["activations"].append(layer.activation)
        meta["alphas"].append(layer.alpha)
        meta["shapes"].append(list(layer.weight.shape))
    return arrays, meta


def net_from_arrays(prefix: str, arrays: dict, meta: dict) -> DenseNet:
    layers = [
        Layer(arrays[f"{prefix}/{i}/W"].copy(), arrays[f"{prefix}/{i}/b"].copy(), act, alpha)
        for i, (act, alpha) in enumerate(zip(meta["activations"], meta["alphas"]))
    ]
    for layer, shape in zip(layers, meta["shapes"]):
        if list(layer.weight.shape) != list(shape):
            raise ShapeMismatch(f"checkpoint layer shape {layer.weight.shape} != recorded {shape}")
    return DenseNet(layers, meta.get("rng_seed"))


def adam_arrays(prefix: str, state: AdamState) -> tuple[dict, dict]:
    arrays = {}
    for i, (m, v) in enumerate(zip(state.m, state.v)):
        arrays[f"{prefix}/m/{i}"] = m
        arrays[f"{prefix}/v/{i}"] = v
    meta = {"t": state.t, "lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
            "eps": state.eps, "n": len(state.m)}
    return arrays, meta


def adam_from_arrays(prefix: str, arrays: dict, meta: dict) -> AdamState:
    n = meta["n"]
    return AdamState([arrays[f"{prefix}/m/{i}"].copy() for i in range(n)],
                     [arrays[f"{prefix}/v/{i}"].copy() for i in range(n)],
                     meta["t"], meta["lr"], meta["beta1"], meta["beta2"], meta["eps"])


def save_npz(path, arrays: dict, meta: dict) -> Path:
    """Write arrays plus a JSON metadata record into a single ``.npz`` file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = dict(meta, format=CHECKPOINT_FORMAT)
    payload = dict(arrays)
    payload["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **payload)
    path.write_bytes(buf.getvalue())
    return path


def load_npz(path) -> tuple[dict, dict]:
    try:
        with np.load(Path(path), allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (zipfile.BadZipFile, ValueError) as exc:
        raise ValueError(f"{path}: not a checkpoint file ({exc})") from None
    meta = json.loads(arrays.pop("__meta__").tobytes().decode())
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
    return arrays, meta
