"""Model configuration and the layer stack built from it.

A ModelConfig is a declarative layer list; Network materializes it,
validates shape flow, and provides forward/backward over a nested
parameter structure plus flatten/unflatten into the single float64
vector stored in checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import Rng
from .layers import ConvLayer, DenseLayer, LayerError, MaxPoolLayer, SEGateLayer


@dataclass
class ModelConfig:
    input_shape: tuple[int, int, int]  # (H, W, C)
    layers: list[dict]
    num_classes: int

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [dict(spec) for spec in self.layers],
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(
            input_shape=tuple(data["input_shape"]),
            layers=[dict(spec) for spec in data["layers"]],
            num_classes=int(data["num_classes"]),
        )


def default_model_config(
    num_classes: int, input_side: int = 32, use_se_gate: bool = True
) -> ModelConfig:
    """Smallest stack that learns the synthetic corpus and exercises every layer type."""
    layers = [
        {"type": "conv", "out_channels": 16, "kernel": 3, "stride": 1, "activation": "relu"},
        {"type": "maxpool", "window": 2},
        {"type": "conv", "out_channels": 32, "kernel": 3, "stride": 1, "activation": "relu"},
        {"type": "maxpool", "window": 2},
    ]
    if use_se_gate:
        layers.append({"type": "se_gate", "reduction_ratio": 4})
    layers.append({"type": "dense", "units": num_classes})
    return ModelConfig(
        input_shape=(input_side, input_side, 3), layers=layers, num_classes=num_classes
    )


class Network:
    def __init__(self, config: ModelConfig):
        self.config = config
        self.layers = []
        shape = tuple(config.input_shape)
        for spec in config.layers:
            kind = spec["type"]
            if kind == "conv":
                layer = ConvLayer(
                    shape,
                    out_channels=spec["out_channels"],
                    kernel=spec["kernel"],
                    stride=spec.get("stride", 1),
                    activation=spec.get("activation", "relu"),
                )
            elif kind == "maxpool":
                layer = MaxPoolLayer(shape, window=spec["window"])
            elif kind == "se_gate":
                layer = SEGateLayer(shape, reduction_ratio=spec["reduction_ratio"])
            elif kind == "dense":
                layer = DenseLayer(shape, units=spec["units"])
            else:
                raise LayerError(f"unknown layer type {kind!r}")
            self.layers.append(layer)
            shape = layer.out_shape
        if shape != (config.num_classes,):
            raise LayerError(
                f"final layer produces {shape}, expected ({config.num_classes},);"
                " the last layer must be dense with units = num_classes"
            )

    # -- parameters -----------------------------------------------------------

    def init_params(self, rng: Rng) -> list[list[np.ndarray]]:
        return [layer.init_params(rng) for layer in self.layers]

    def param_shapes(self) -> list[list[tuple[int, ...]]]:
        return [layer.param_shapes() for layer in self.layers]

    def param_count(self) -> int:
        return sum(
            int(np.prod(shape)) for group in self.param_shapes() for shape in group
        )

    @staticmethod
    def flatten(params: list[list[np.ndarray]]) -> np.ndarray:
        arrays = [p.ravel() for group in params for p in group]
        if not arrays:
            return np.zeros(0, dtype=np.float64)
        return np.concatenate(arrays).astype(np.float64)

    def unflatten(self, flat: np.ndarray) -> list[list[np.ndarray]]:
        flat = np.asarray(flat, dtype=np.float64)
        params: list[list[np.ndarray]] = []
        offset = 0
        for group_shapes in self.param_shapes():
            group = []
            for shape in group_shapes:
                size = int(np.prod(shape))
                group.append(flat[offset : offset + size].reshape(shape).copy())
                offset += size
            params.append(group)
        if offset != flat.size:
            raise LayerError(
                f"parameter vector has {flat.size} values, expected {offset}"
            )
        return params

    # -- forward / backward ----------------------------------------------------

    def forward(self, x: np.ndarray, params: list[list[np.ndarray]]):
        """Returns (logits, caches). x is (N, H, W, C) float64 in [0, 1]."""
        x = np.asarray(x, dtype=np.float64)
        expected = (x.shape[0],) + tuple(self.config.input_shape)
        if x.shape != expected:
            raise LayerError(f"batch shape {x.shape}, model expects {expected}")
        caches = []
        out = x
        for layer, group in zip(self.layers, params):
            out, cache = layer.forward(out, group)
            caches.append(cache)
        return out, caches

    def backward(self, dlogits: np.ndarray, caches, params) -> list[list[np.ndarray]]:
        grad = dlogits
        grads: list[list[np.ndarray]] = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            grad, layer_grads = self.layers[i].backward(grad, caches[i], params[i])
            grads[i] = layer_grads
        return grads
