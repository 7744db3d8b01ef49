#!/usr/bin/env python3
"""
Per-layer cost profiles of DNN models.

A profile lists, for each of the L sequential layers, the forward FLOPs of one
batch execution, the parameter size and the activation size at the layer
output. All sizes are bytes and all activation sizes are already multiplied by
the batch size, so the delay model never rescales anything. Backward FLOPs are
not stored: they are taken as twice the forward FLOPs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Tuple, Union

import numpy as np

from scripts.errors import ProfileError

logger = logging.getLogger(__name__)

# 1 < h < v < L needs at least four layers
MIN_LAYERS = 4

ProfileSource = Union[str, Path, Mapping[str, Any]]


@dataclass(frozen=True)
class LayerProfile:
    index: int
    flops_fp: float
    weight_bytes: float
    act_bytes: float

    def to_record(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "flops_fp": self.flops_fp,
            "weight_bytes": self.weight_bytes,
            "act_bytes": self.act_bytes,
        }


@dataclass(frozen=True)
class ModelProfile:
    """
    Immutable per-layer profile of a model with prefix-sum queries.

    Layer indices are 1-based. Range queries over [lo, hi] return 0 for an
    empty range (lo > hi).
    """

    name: str
    layers: Tuple[LayerProfile, ...]
    batch_size: int
    _flops_cum: np.ndarray = field(init=False, repr=False, compare=False)
    _bytes_cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _validate_layers(self.layers)
        if int(self.batch_size) < 1:
            raise ProfileError(f"batch_size must be >= 1, got {self.batch_size}")

        flops = np.array([layer.flops_fp for layer in self.layers], dtype=float)
        weights = np.array([layer.weight_bytes for layer in self.layers], dtype=float)
        flops_cum = np.concatenate(([0.0], np.cumsum(flops)))
        bytes_cum = np.concatenate(([0.0], np.cumsum(weights)))
        flops_cum.setflags(write=False)
        bytes_cum.setflags(write=False)
        object.__setattr__(self, "_flops_cum", flops_cum)
        object.__setattr__(self, "_bytes_cum", bytes_cum)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def _check_range(self, lo: int, hi: int) -> bool:
        """Return True when [lo, hi] is non-empty; raise when it leaves 1..L."""
        L = self.num_layers
        if lo > hi:
            if not (1 <= lo <= L + 1 and 0 <= hi <= L):
                raise ProfileError(f"empty range [{lo}, {hi}] lies outside 1..{L}")
            return False
        if lo < 1 or hi > L:
            raise ProfileError(f"layer range [{lo}, {hi}] outside 1..{L}")
        return True

    def prefix_flops(self, lo: int, hi: int) -> float:
        """Sum of forward FLOPs over layers lo..hi (inclusive)."""
        if not self._check_range(lo, hi):
            return 0.0
        return float(self._flops_cum[hi] - self._flops_cum[lo - 1])

    def prefix_bytes(self, lo: int, hi: int) -> float:
        """Sum of parameter bytes over layers lo..hi (inclusive)."""
        if not self._check_range(lo, hi):
            return 0.0
        return float(self._bytes_cum[hi] - self._bytes_cum[lo - 1])

    def act_bytes(self, layer: int) -> float:
        """Activation (and gradient) bytes at the output of ``layer``."""
        if not 1 <= layer <= self.num_layers:
            raise ProfileError(f"layer {layer} outside 1..{self.num_layers}")
        return float(self.layers[layer - 1].act_bytes)

    def to_document(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "batch_size": self.batch_size,
            "layers": [layer.to_record() for layer in self.layers],
        }


def _validate_layers(layers: Tuple[LayerProfile, ...]) -> None:
    if len(layers) < MIN_LAYERS:
        raise ProfileError(
            f"profile has L={len(layers)} layers; at least {MIN_LAYERS} are needed "
            "so that 1 < h < v < L has a solution"
        )
    for position, layer in enumerate(layers, start=1):
        if layer.index != position:
            raise ProfileError(
                f"layer indices must be contiguous 1..{len(layers)}; "
                f"expected {position}, found {layer.index}"
            )
        for attr in ("flops_fp", "weight_bytes", "act_bytes"):
            value = getattr(layer, attr)
            if not np.isfinite(value) or value < 0:
                raise ProfileError(f"layer {layer.index}: {attr} must be a nonnegative number, got {value}")
        # only the output layer may be free or emit nothing
        if position < len(layers):
            for attr in ("flops_fp", "act_bytes"):
                if getattr(layer, attr) == 0:
                    raise ProfileError(f"layer {layer.index}: {attr} must be > 0 below the last layer")


def _parse_layer(raw: Any) -> LayerProfile:
    if not isinstance(raw, Mapping):
        raise ProfileError(f"layer entry must be an object, got {type(raw).__name__}")
    try:
        return LayerProfile(
            index=int(raw["index"]),
            flops_fp=float(raw["flops_fp"]),
            weight_bytes=float(raw["weight_bytes"]),
            act_bytes=float(raw["act_bytes"]),
        )
    except KeyError as e:
        raise ProfileError(f"layer entry missing field {e}") from e
    except (TypeError, ValueError) as e:
        raise ProfileError(f"layer entry has a non-numeric field: {e}") from e


def read_document(source: ProfileSource) -> Mapping[str, Any]:
    """Read a JSON document from a path, or pass a mapping through."""
    if isinstance(source, Mapping):
        return source
    path = Path(source)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError as e:
        raise ProfileError(f"profile document not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ProfileError(f"profile document {path} is not valid JSON: {e}") from e
    if not isinstance(document, Mapping):
        raise ProfileError(f"profile document {path} must be a JSON object")
    return document


def load_profile(source: ProfileSource) -> ModelProfile:
    """
    Load and validate a profile document.

    The document is {"name", "batch_size", "layers": [{"index", "flops_fp",
    "weight_bytes", "act_bytes"}, ...]}. Layers may appear in any order in the
    file; after sorting their indices must be exactly 1..L.
    """
    document = read_document(source)
    for key in ("name", "batch_size", "layers"):
        if key not in document:
            raise ProfileError(f"profile document missing '{key}'")

    raw_layers = document["layers"]
    if not isinstance(raw_layers, list):
        raise ProfileError("'layers' must be a list")
    layers: List[LayerProfile] = sorted((_parse_layer(raw) for raw in raw_layers), key=lambda x: x.index)

    try:
        batch_size = int(document["batch_size"])
    except (TypeError, ValueError) as e:
        raise ProfileError(f"batch_size must be an integer: {e}") from e

    profile = ModelProfile(name=str(document["name"]), layers=tuple(layers), batch_size=batch_size)
    logger.debug("Loaded profile %s with L=%d", profile.name, profile.num_layers)
    return profile
