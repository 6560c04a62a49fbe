"""Feed-forward embedding network trained with Adam.

ReLU hidden layers, a sigmoid embedding layer, then optional row-wise L2
normalization. Weights are stored as (fan_in, fan_out) so a layer computes
``H @ W + b``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import NORM_FLOOR, as_matrix, l2_normalize_rows

CHECKPOINT_FORMAT = "metricnet.embedder"
CHECKPOINT_VERSION = 1


class NonFiniteError(FloatingPointError):
    """Loss, gradient or activation went NaN/Inf during a training step."""


@dataclass
class MlpEmbedder:
    layer_sizes: list
    weights: list
    biases: list
    normalize_output: bool = True

    @property
    def embedding_dim(self):
        return self.layer_sizes[-1]

    def parameters(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def __eq__(self, other):
        if not isinstance(other, MlpEmbedder):
            return NotImplemented
        return (
            list(self.layer_sizes) == list(other.layer_sizes)
            and self.normalize_output == other.normalize_output
            and all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters()))
        )


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_model(cls, model, **hyper):
        params = model.parameters()
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **hyper,
        )


def init_embedder(layer_sizes, normalize_output=True, rng=None):
    """He-uniform weights (|w| <= sqrt(6 / fan_in)), zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"layer_sizes needs >= 2 positive entries, got {layer_sizes}")
    if rng is None:
        raise ValueError("init_embedder needs an explicit rng")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpEmbedder(sizes, weights, biases, bool(normalize_output))


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward_batch(model, inputs):
    """Embed every row of ``inputs``; returns (embeddings, cache)."""
    H = as_matrix(inputs)
    if H.shape[1] != model.layer_sizes[0]:
        raise ValueError(
            f"input width {H.shape[1]} does not match first layer size {model.layer_sizes[0]}"
        )
    acts = [H]
    n_layers = len(model.weights)
    for li, (W, b) in enumerate(zip(model.weights, model.biases)):
        Z = H @ W + b
        H = _sigmoid(Z) if li == n_layers - 1 else np.maximum(Z, 0.0)
        acts.append(H)
    cache = {"acts": acts}
    if model.normalize_output:
        norms = np.sqrt(np.einsum("ij,ij->i", H, H))
        out, _ = l2_normalize_rows(H)
        cache["norms"] = np.maximum(norms, NORM_FLOOR)
        cache["normalized"] = out
        return out, cache
    return H, cache


def embed(model, inputs, chunk=4096):
    inputs = as_matrix(inputs)
    parts = [forward_batch(model, inputs[s : s + chunk])[0] for s in range(0, len(inputs), chunk)]
    return np.concatenate(parts) if parts else np.zeros((0, model.embedding_dim))


def backward(model, cache, grad_out):
    """Parameter gradients, ordered like ``model.parameters()``."""
    G = np.asarray(grad_out, dtype=np.float64)
    acts = cache["acts"]
    if model.normalize_output:
        Y = cache["normalized"]
        # Jacobian of u / |u| applied to G: (G - y (y . G)) / |u|
        G = (G - Y * np.einsum("ij,ij->i", Y, G)[:, None]) / cache["norms"][:, None]
    n_layers = len(model.weights)
    grads = [None] * (2 * n_layers)
    for li in range(n_layers - 1, -1, -1):
        out = acts[li + 1]
        if li == n_layers - 1:
            dZ = G * out * (1.0 - out)
        else:
            dZ = G * (out > 0)
        grads[2 * li] = acts[li].T @ dZ
        grads[2 * li + 1] = dZ.sum(axis=0)
        if not (np.all(np.isfinite(grads[2 * li])) and np.all(np.isfinite(grads[2 * li + 1]))):
            raise NonFiniteError(f"non-finite gradient in layer {li}")
        if li > 0:
            G = dZ @ model.weights[li].T
    return grads


def adam_update(params, grads, state):
    """One bias-corrected Adam step, in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def train_step(model, state, inputs, loss_adapter):
    """Forward, loss, backprop and one Adam update. Mutates model and state.

    ``loss_adapter`` maps the batch embeddings to a LossResult. Returns the
    loss value.
    """
    emb, cache = forward_batch(model, inputs)
    result = loss_adapter(emb)
    if not np.isfinite(result.value):
        raise NonFiniteError(f"loss is {result.value}")
    if not np.all(np.isfinite(result.grad)):
        raise NonFiniteError("non-finite gradient w.r.t. embeddings")
    grads = backward(model, cache, result.grad)
    adam_update(model.parameters(), grads, state)
    return result.value


def save_checkpoint(model, path):
    """Write the model as JSON. Floats use repr, so loading is bit-exact."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "normalize_output": model.normalize_output,
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    sizes = doc["layer_sizes"]
    weights = [np.asarray(W, dtype=np.float64).reshape(a, b) for W, a, b in zip(doc["weights"], sizes[:-1], sizes[1:])]
    biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in doc["biases"]]
    return MlpEmbedder(sizes, weights, biases, bool(doc["normalize_output"]))
