"""Toy multi-layer model: frozen base weights plus one adapter per layer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adapter import LoraAdapter, delta_weight, init_adapter
from .errors import DimensionError, ParameterError
from .numcore import RandomStream, matmul, sample_gaussian

CONNECTOR = "connector"
LLM = "llm"


@dataclass
class Layer:
    """``y = act(x @ W^T)`` with ``W = w0 + delta``.

    ``delta`` is the adapter's scaled product unless ``delta_override`` holds
    a post-processed dense delta (used by the DARE and post-hoc baselines).
    """

    w0: np.ndarray
    adapter: LoraAdapter
    role: str = LLM
    activation: bool = True
    delta_override: np.ndarray | None = None

    def __post_init__(self):
        if self.w0.shape != self.adapter.shape:
            raise DimensionError(f"adapter {self.adapter.shape} does not match base {self.w0.shape}")
        if self.role not in (CONNECTOR, LLM):
            raise ParameterError(f"unknown layer role {self.role!r}")

    def delta(self) -> np.ndarray:
        if self.delta_override is not None:
            return self.delta_override
        return delta_weight(self.adapter)

    def weight(self) -> np.ndarray:
        return self.w0 + self.delta()


@dataclass
class ArchSpec:
    input_dim: int = 16
    hidden_dims: tuple[int, ...] = (32, 32)
    output_dim: int = 8
    rank: int = 8
    scaling: float = 1.0

    @property
    def dims(self) -> list[int]:
        return [self.input_dim, *self.hidden_dims, self.output_dim]


@dataclass
class ToyModel:
    layers: list[Layer] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.layers[0].w0.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].w0.shape[0]

    def copy(self) -> ToyModel:
        return ToyModel([
            Layer(l.w0.copy(), l.adapter.copy(), l.role, l.activation,
                  None if l.delta_override is None else l.delta_override.copy())
            for l in self.layers])

    def weights(self, base_only: bool = False) -> list[np.ndarray]:
        return [l.w0 if base_only else l.weight() for l in self.layers]

    def forward(self, x: np.ndarray, weights: list[np.ndarray] | None = None,
                keep: bool = False):
        """Output for a batch ``x`` (rows are samples).

        With ``keep=True`` also returns the per-layer inputs and outputs
        needed by ``backward``.
        """
        weights = self.weights() if weights is None else weights
        acts = [x]
        h = x
        for layer, w in zip(self.layers, weights):
            h = matmul(h, w.T)
            if layer.activation:
                h = np.tanh(h)
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, grad_out: np.ndarray, acts: list[np.ndarray],
                 weights: list[np.ndarray]) -> list[np.ndarray]:
        """Gradients of the loss w.r.t. each layer's effective weight."""
        grads = [None] * len(self.layers)
        g = grad_out
        for i in range(len(self.layers) - 1, -1, -1):
            if self.layers[i].activation:
                g = g * (1.0 - acts[i + 1] * acts[i + 1])
            grads[i] = matmul(g.T, acts[i])
            if i > 0:
                g = matmul(g, weights[i])
        return grads


def attach_adapters(model: ToyModel, rng: RandomStream, rank: int,
                    scaling: float = 1.0) -> ToyModel:
    """Replace every adapter with a fresh zero-delta one, drawing layers in order."""
    for layer in model.layers:
        p, q = layer.w0.shape
        layer.adapter = init_adapter(rng, p, q, rank, scaling)
        layer.delta_override = None
    return model


def build_model(rng: RandomStream, adapter_rng: RandomStream, arch: ArchSpec) -> ToyModel:
    """Fresh base weights (std 1/sqrt(fan_in)) and zero-delta adapters.

    The first layer takes the connector role; the last layer is linear.
    """
    dims = arch.dims
    layers = []
    for i in range(len(dims) - 1):
        q, p = dims[i], dims[i + 1]
        w0 = sample_gaussian(rng, p, q, 1.0 / math.sqrt(q))
        placeholder = LoraAdapter(np.zeros((p, 1)), np.zeros((1, q)))
        layers.append(Layer(w0, placeholder, CONNECTOR if i == 0 else LLM,
                            activation=i < len(dims) - 2))
    return attach_adapters(ToyModel(layers), adapter_rng, arch.rank, arch.scaling)


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean(np.square(pred - target)))
