"""Dense feature extractors and linear heads with hand-derived backprop.

An extractor is a stack of affine layers (weights stored out x in, bias
one row per layer, ReLU or identity activation).  A header is a single
bias-free linear map from a representation to class logits.  Backward
passes are written out explicitly and are validated against central
finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import ShapeError, as_matrix, matmul, sgd_step

RELU = "relu"
IDENTITY = "identity"
_ACTIVATIONS = (RELU, IDENTITY)

CHECKPOINT_VERSION = 1


class StaleCacheError(ValueError):
    """A forward cache was replayed against a model it does not belong to."""


@dataclass(frozen=True)
class ModelConfig:
    """Widths of one extractor plus its header.

    hidden_widths may be empty, in which case the extractor is a single
    affine layer from input_dim straight to rep_dim.
    """

    input_dim: int
    hidden_widths: tuple[int, ...]
    rep_dim: int
    classes: int

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_widths, self.rep_dim)
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer widths must be positive, got {dims}")
        if self.classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.classes}")

    @property
    def layer_dims(self) -> tuple[tuple[int, int], ...]:
        """(in, out) pairs for each affine layer of the extractor."""
        widths = (self.input_dim, *self.hidden_widths, self.rep_dim)
        return tuple(zip(widths[:-1], widths[1:]))


@dataclass
class AffineLayer:
    """y = act(x @ W.T + b) with W of shape (out, in) and b of shape (1, out)."""

    weight: np.ndarray
    bias: np.ndarray | None
    activation: str = RELU

    def __post_init__(self):
        self.weight = as_matrix(self.weight)
        if self.bias is not None:
            self.bias = as_matrix(self.bias, rows=1, cols=self.out_dim)
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Returns (activated output, pre-activation) for a batch."""
        pre = matmul(as_matrix(x, cols=self.in_dim), self.weight.T)
        if self.bias is not None:
            pre = pre + self.bias
        out = np.maximum(pre, 0.0) if self.activation == RELU else pre
        return out, pre

    def param_count(self) -> int:
        n = self.weight.size
        if self.bias is not None:
            n += self.bias.size
        return n

    def clone(self) -> "AffineLayer":
        bias = None if self.bias is None else self.bias.copy()
        return AffineLayer(self.weight.copy(), bias, self.activation)


@dataclass
class LayerGrads:
    """Loss gradients for one affine layer, shapes matching the parameters."""

    weight: np.ndarray
    bias: np.ndarray | None


@dataclass
class ForwardCache:
    """Per-layer inputs and pre-activations retained for one backward pass.

    owner ties the cache to the exact Extractor object that produced it;
    replaying it against any other (including a stepped copy) is an error.
    """

    owner: "Extractor"
    inputs: list[np.ndarray] = field(default_factory=list)
    pre_acts: list[np.ndarray] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.pre_acts)


@dataclass
class Extractor:
    """Feed-forward stack mapping raw features to a representation."""

    layers: list[AffineLayer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("an extractor needs at least one layer")
        for a, b in zip(self.layers[:-1], self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer widths do not chain: {a.out_dim} -> {b.in_dim}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def rep_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        """Run the stack; inputs are copied into the cache, never mutated."""
        cache = ForwardCache(owner=self)
        out = as_matrix(x, cols=self.input_dim)
        for layer in self.layers:
            cache.inputs.append(out)
            out, pre = layer.forward(out)
            cache.pre_acts.append(pre)
        return out, cache

    def backward(
        self, cache: ForwardCache, d_rep: np.ndarray
    ) -> tuple[list[LayerGrads], np.ndarray]:
        """Backpropagate an upstream gradient through the stack.

        d_rep may be the sum of gradients from several consumers of the
        representation.  Returns per-layer parameter gradients (same order
        as self.layers) and the gradient w.r.t. the original input.
        """
        if cache.owner is not self:
            raise StaleCacheError("forward cache does not belong to this extractor")
        if cache.depth != len(self.layers):
            raise StaleCacheError(
                f"cache depth {cache.depth} != layer count {len(self.layers)}"
            )
        delta = as_matrix(d_rep, cols=self.rep_dim)
        reversed_grads = []
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            if layer.activation == RELU:
                delta = delta * (cache.pre_acts[i] > 0.0)
            d_weight = matmul(delta.T, cache.inputs[i])
            d_bias = None if layer.bias is None else delta.sum(axis=0, keepdims=True)
            reversed_grads.append(LayerGrads(d_weight, d_bias))
            delta = matmul(delta, layer.weight)
        return reversed_grads[::-1], delta

    def step(self, grads: list[LayerGrads], lr: float) -> "Extractor":
        """One SGD step; returns a new Extractor, leaving this one untouched."""
        if len(grads) != len(self.layers):
            raise ShapeError(f"{len(grads)} gradient entries for {len(self.layers)} layers")
        stepped = []
        for layer, g in zip(self.layers, grads):
            w = sgd_step(layer.weight, g.weight, lr)
            b = None if layer.bias is None else sgd_step(layer.bias, g.bias, lr)
            stepped.append(AffineLayer(w, b, layer.activation))
        return Extractor(stepped)

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def clone(self) -> "Extractor":
        return Extractor([layer.clone() for layer in self.layers])


@dataclass
class Header:
    """Bias-free linear map from a representation to class logits."""

    weight: np.ndarray  # (classes, rep_dim)

    def __post_init__(self):
        self.weight = as_matrix(self.weight)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def classes(self) -> int:
        return self.weight.shape[0]

    def forward(self, rep: np.ndarray) -> np.ndarray:
        return matmul(as_matrix(rep, cols=self.in_dim), self.weight.T)

    def backward(self, rep: np.ndarray, d_logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Returns (d_weight, d_rep) for the logits' upstream gradient."""
        rep = as_matrix(rep, cols=self.in_dim)
        d_logits = as_matrix(d_logits, rows=rep.shape[0], cols=self.classes)
        return matmul(d_logits.T, rep), matmul(d_logits, self.weight)

    def step(self, d_weight: np.ndarray, lr: float) -> "Header":
        return Header(sgd_step(self.weight, d_weight, lr))

    def param_count(self) -> int:
        return self.weight.size

    def clone(self) -> "Header":
        return Header(self.weight.copy())


def init_model(config: ModelConfig, rng: np.random.Generator) -> tuple[Extractor, Header]:
    """Deterministically initialize an extractor and its header.

    Extractor layers use ReLU with He-uniform weights (bound sqrt(6/fan_in))
    and biases at a small positive constant (0.01) so no unit starts dead;
    the header uses Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out)))
    and no bias.  Draw order is fixed: layer weights first to last, then
    the header weight.
    """
    layers = []
    for fan_in, fan_out in config.layer_dims:
        bound = np.sqrt(6.0 / fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(AffineLayer(weight, np.full((1, fan_out), 0.01), RELU))
    bound = np.sqrt(6.0 / (config.rep_dim + config.classes))
    head_weight = rng.uniform(-bound, bound, size=(config.classes, config.rep_dim))
    return Extractor(layers), Header(head_weight)


def save_model(path: str | Path, extractor: Extractor, header: Header) -> None:
    """Write a versioned JSON checkpoint.

    Layout: {"format_version", "extractor": [{"activation", "weight",
    "bias"} per layer, first to last], "header": {"weight"}}.  Floats are
    serialized with repr precision, so a round trip is exact.
    """
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "extractor": [
            {
                "activation": layer.activation,
                "weight": layer.weight.tolist(),
                "bias": None if layer.bias is None else layer.bias.tolist(),
            }
            for layer in extractor.layers
        ],
        "header": {"weight": header.weight.tolist()},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> tuple[Extractor, Header]:
    """Read a checkpoint written by save_model; rejects unknown versions."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    layers = [
        AffineLayer(
            np.array(entry["weight"], dtype=np.float64),
            None if entry["bias"] is None else np.array(entry["bias"], dtype=np.float64),
            entry["activation"],
        )
        for entry in doc["extractor"]
    ]
    header = Header(np.array(doc["header"]["weight"], dtype=np.float64))
    return Extractor(layers), header
