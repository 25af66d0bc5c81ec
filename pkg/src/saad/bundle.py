"""Self-contained trained-model file: network, preprocessing state and feature names."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from saad.dataset import CategoryMap, ScalerParams, format_float
from saad.errors import ValidationError
from saad.fcn import Network, NetworkConfig

FORMAT = "saad-fcn-bundle/1"


@dataclass(frozen=True)
class ModelBundle:
    network: Network
    feature_names: tuple[str, ...]
    scaler: ScalerParams
    categories: CategoryMap


def _matrix_text(a: np.ndarray) -> list:
    return [[format_float(x) for x in row] for row in np.atleast_2d(a)]


def to_dict(b: ModelBundle) -> dict:
    net = b.network
    return {
        "format": FORMAT,
        "config": net.config.to_dict(),
        "input_dim": net.input_dim,
        "feature_names": list(b.feature_names),
        "scaler": b.scaler.to_dict(),
        "categories": b.categories.to_dict(),
        "layers": [
            {"weights": _matrix_text(W), "biases": [format_float(x) for x in bias]}
            for W, bias in zip(net.weights, net.biases)
        ],
    }


def from_dict(d) -> ModelBundle:
    if d.get("format") != FORMAT:
        raise ValidationError(f"not a model bundle (format {d.get('format')!r})")
    cfg = NetworkConfig(**d["config"])
    weights = tuple(np.array([[float(x) for x in row] for row in layer["weights"]]) for layer in d["layers"])
    biases = tuple(np.array([float(x) for x in layer["biases"]]) for layer in d["layers"])
    net = Network(weights, biases, cfg, int(d["input_dim"]))
    return ModelBundle(net, tuple(d["feature_names"]), ScalerParams.from_dict(d["scaler"]),
                       CategoryMap.from_dict(d["categories"]))


def save(b: ModelBundle, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_dict(b), indent=1) + "\n", encoding="utf-8")
    return path


def load(path) -> ModelBundle:
    return from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
