"""Per-layer input features for the scheduling policy.

Each layer is encoded as: its index (one-hot over a fixed width), its kind
(one-hot over the kind vocabulary), and three scalars — input size, weight
size, and communication time — normalized by log1p followed by a z-score
fitted over the layers of the graph at hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..domain import ModelGraph, ResourceCatalog
from ..errors import ConfigError


@dataclass(frozen=True)
class LayerFeatures:
    """Encoded features of one layer."""

    index_onehot: np.ndarray
    kind_onehot: np.ndarray
    input_size_norm: float
    weight_size_norm: float
    comm_time_norm: float

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [
                self.index_onehot,
                self.kind_onehot,
                np.array(
                    [self.input_size_norm, self.weight_size_norm, self.comm_time_norm]
                ),
            ]
        )


def _comm_time(layer) -> float:
    # one scalar per layer: the mean profiled communication time across types
    values = [layer.per_type_odt[t] for t in sorted(layer.per_type_odt)]
    return sum(values) / len(values) if values else 0.0


@dataclass(frozen=True)
class FeatureNormalizer:
    """Kind vocabulary plus log1p/z-score statistics, fitted per graph."""

    max_layers: int
    kinds: tuple[str, ...]
    means: tuple[float, float, float]
    stds: tuple[float, float, float]

    @classmethod
    def fit(
        cls,
        graph: ModelGraph,
        catalog: ResourceCatalog | None = None,
        max_layers: int = 64,
    ) -> "FeatureNormalizer":
        if catalog is not None and catalog.layer_kinds:
            kinds = tuple(catalog.layer_kinds)
        else:
            kinds = tuple(sorted({layer.layer_kind for layer in graph.layers}))
        raws = np.array(
            [
                [
                    math.log1p(layer.input_size),
                    math.log1p(layer.weight_size),
                    math.log1p(_comm_time(layer)),
                ]
                for layer in graph.layers
            ]
        )
        means = tuple(float(m) for m in raws.mean(axis=0))
        stds = tuple(float(s) for s in raws.std(axis=0))
        return cls(max_layers=max_layers, kinds=kinds, means=means, stds=stds)

    def zscore(self, slot: int, raw: float) -> float:
        # zero-variance guard: a constant feature normalizes to 0
        if self.stds[slot] == 0:
            return 0.0
        return (math.log1p(raw) - self.means[slot]) / self.stds[slot]

    @property
    def feature_dim(self) -> int:
        return self.max_layers + len(self.kinds) + 3


def encode_features(
    graph: ModelGraph,
    catalog: ResourceCatalog,
    normalizer: FeatureNormalizer,
) -> list[LayerFeatures]:
    """Encode every layer of the graph with the given fitted normalizer."""
    if graph.num_layers > normalizer.max_layers:
        raise ConfigError(
            f"model '{graph.name}' has {graph.num_layers} layers but the "
            f"index encoding is {normalizer.max_layers} wide"
        )
    kind_index = {kind: i for i, kind in enumerate(normalizer.kinds)}
    out = []
    for layer in graph.layers:
        if layer.layer_kind not in kind_index:
            raise ConfigError(
                f"layer {layer.index} has kind '{layer.layer_kind}' not in the "
                f"declared vocabulary {list(normalizer.kinds)}"
            )
        index_onehot = np.zeros(normalizer.max_layers)
        index_onehot[layer.index] = 1.0
        kind_onehot = np.zeros(len(normalizer.kinds))
        kind_onehot[kind_index[layer.layer_kind]] = 1.0
        out.append(
            LayerFeatures(
                index_onehot=index_onehot,
                kind_onehot=kind_onehot,
                input_size_norm=normalizer.zscore(0, layer.input_size),
                weight_size_norm=normalizer.zscore(1, layer.weight_size),
                comm_time_norm=normalizer.zscore(2, _comm_time(layer)),
            )
        )
    return out


def features_matrix(features: list[LayerFeatures]) -> np.ndarray:
    """Stack per-layer feature vectors into an (L, D) array."""
    return np.stack([f.as_vector() for f in features])
