"""Dense layers, graph propagation and parameter (de)serialization."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .autograd import Tensor
from .errors import ConfigError
from .graph_core import Graph
from .io import atomic_write_text

CHECKPOINT_FORMAT = "mlgad-checkpoint/1"


@dataclass
class EncoderConfig:
    propagation_steps: int = 2
    hidden_dim: int = 32
    trainable: bool = True

    def __post_init__(self):
        if self.propagation_steps < 0:
            raise ConfigError("propagation_steps must be >= 0")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be >= 1")


def normalized_adjacency(graph: Graph) -> sp.csr_matrix:
    """``D~^-1/2 (A + I) D~^-1/2`` as a sparse matrix."""
    A = graph.adjacency() + sp.identity(graph.node_count, format="csr")
    d = np.asarray(A.sum(axis=1)).ravel()
    s = sp.diags(1.0 / np.sqrt(d))
    return (s @ A @ s).tocsr()


def sgc_propagate(graph: Graph, features, steps: int):
    """Apply the self-looped symmetric propagation `steps` times.

    Accepts an array or a `Tensor`; returns the same kind (a constant
    tensor in the latter case).
    """
    as_tensor = isinstance(features, Tensor)
    H = np.array(features.data if as_tensor else features, dtype=np.float64)
    if H.shape[0] != graph.node_count:
        raise ValueError(f"features have {H.shape[0]} rows, graph has {graph.node_count} nodes")
    if steps > 0:
        S = normalized_adjacency(graph)
        for _ in range(steps):
            H = S @ H
    return Tensor(H) if as_tensor else H


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear:
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, name: str = ""):
        self.weight = Tensor(glorot(rng, fan_in, fan_out), requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros((1, fan_out)), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ValueError(f"input width {x.shape[-1]} does not match layer {self.weight.shape}")
        return x @ self.weight + self.bias

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


def mlp_forward(layers, x: Tensor, slope: float = 0.01) -> Tensor:
    """Affine + leaky rectifier on every layer except the last (affine only)."""
    h = x
    for i, layer in enumerate(layers):
        h = layer(h)
        if i < len(layers) - 1:
            h = h.leaky_relu(slope)
    return h


def params_to_json(named: dict[str, Tensor], config: dict) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "config": config,
        "params": {k: {"shape": list(t.shape), "data": t.data.ravel().tolist()}
                   for k, t in named.items()},
    }
    return json.dumps(doc, sort_keys=True)


def params_from_json(text: str) -> tuple[dict, dict[str, np.ndarray]]:
    doc = json.loads(text)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
              for k, v in doc["params"].items()}
    return doc["config"], params


def save_params(path, named: dict[str, Tensor], config: dict) -> None:
    atomic_write_text(path, params_to_json(named, config))

