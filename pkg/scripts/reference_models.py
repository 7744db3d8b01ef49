#!/usr/bin/env python3
"""
Reference layer profiles for the four evaluation models.

Profiles are derived from standard layer-shape arithmetic (float32 tensors):
    conv FLOPs  = 2 * C_in * k * k * C_out * H_out * W_out   (per sample)
    dense FLOPs = 2 * n_in * n_out                           (per sample)
Per-batch FLOPs and activation bytes are the per-sample values times the batch
size. Pooling, activation and normalisation layers are folded into the
preceding unit and cost nothing. A ResNet residual block counts as one unit.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from scripts.errors import ProfileError
from scripts.model_profile import LayerProfile, ModelProfile, ProfileSource, load_profile

logger = logging.getLogger(__name__)

BYTES_PER_VALUE = 4
DEFAULT_BATCH_SIZE = 32

VGG11_LAYOUT: Sequence[Union[int, str]] = [64, "M", 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"]
VGG19_LAYOUT: Sequence[Union[int, str]] = [
    64, 64, "M",
    128, 128, "M",
    256, 256, 256, 256, "M",
    512, 512, 512, 512, "M",
    512, 512, 512, 512, "M",
]
# (bottleneck width, block count, first stride) per ResNet-101 stage
RESNET101_STAGES: Sequence[Tuple[int, int, int]] = [(64, 3, 1), (128, 4, 2), (256, 23, 2), (512, 3, 2)]


class _LayerBuilder:
    """Accumulates per-sample costs into profile units while tracking tensor shape."""

    def __init__(self, channels: int, height: int, width: int) -> None:
        self.shape = (channels, height, width)
        self.units: List[Tuple[float, float, float]] = []
        self._flops = 0.0
        self._params = 0.0

    @property
    def elements(self) -> int:
        c, h, w = self.shape
        return c * h * w

    def conv(self, c_out: int, kernel: int, stride: int = 1, padding: Optional[int] = None,
             c_in: Optional[int] = None, update_shape: bool = True) -> None:
        c, h, w = self.shape
        c_in = c if c_in is None else c_in
        padding = kernel // 2 if padding is None else padding
        h_out = (h + 2 * padding - kernel) // stride + 1
        w_out = (w + 2 * padding - kernel) // stride + 1
        self._flops += 2.0 * c_in * kernel * kernel * c_out * h_out * w_out
        self._params += c_in * kernel * kernel * c_out + c_out
        if update_shape:
            self.shape = (c_out, h_out, w_out)

    def pool(self, factor: int = 2) -> None:
        c, h, w = self.shape
        self.shape = (c, max(1, h // factor), max(1, w // factor))

    def global_pool(self) -> None:
        self.shape = (self.shape[0], 1, 1)

    def dense(self, n_out: int) -> None:
        n_in = self.elements
        self._flops += 2.0 * n_in * n_out
        self._params += n_in * n_out + n_out
        self.shape = (n_out, 1, 1)

    def end_unit(self) -> None:
        self.units.append((self._flops, self._params, float(self.elements)))
        self._flops = 0.0
        self._params = 0.0

    def build(self, name: str, batch_size: int) -> ModelProfile:
        layers = tuple(
            LayerProfile(
                index=i,
                flops_fp=flops * batch_size,
                weight_bytes=params * BYTES_PER_VALUE,
                act_bytes=elements * BYTES_PER_VALUE * batch_size,
            )
            for i, (flops, params, elements) in enumerate(self.units, start=1)
        )
        return ModelProfile(name=name, layers=layers, batch_size=batch_size)


def alexnet_profile(batch_size: int = DEFAULT_BATCH_SIZE) -> ModelProfile:
    """AlexNet-style network for 1x28x28 inputs: 5 conv + 3 dense units (L=8)."""
    b = _LayerBuilder(1, 28, 28)
    for c_out, pooled in [(64, True), (192, True), (384, False), (256, False), (256, True)]:
        b.conv(c_out, kernel=3)
        if pooled:
            b.pool()
        b.end_unit()
    for n_out in (512, 512, 10):
        b.dense(n_out)
        b.end_unit()
    return b.build("alexnet", batch_size)


def _vgg_profile(name: str, layout: Sequence[Union[int, str]], batch_size: int) -> ModelProfile:
    b = _LayerBuilder(3, 32, 32)
    pending = False
    for item in layout:
        if item == "M":
            b.pool()
            continue
        if pending:
            b.end_unit()
        b.conv(int(item), kernel=3)
        pending = True
    b.end_unit()
    for n_out in (512, 512, 10):
        b.dense(n_out)
        b.end_unit()
    return b.build(name, batch_size)


def vgg11_profile(batch_size: int = DEFAULT_BATCH_SIZE) -> ModelProfile:
    """VGG-11 for 3x32x32 inputs: 8 conv + 3 dense units (L=11)."""
    return _vgg_profile("vgg11", VGG11_LAYOUT, batch_size)


def vgg19_profile(batch_size: int = DEFAULT_BATCH_SIZE) -> ModelProfile:
    """VGG-19 for 3x32x32 inputs: 16 conv + 3 dense units (L=19)."""
    return _vgg_profile("vgg19", VGG19_LAYOUT, batch_size)


def resnet101_profile(batch_size: int = DEFAULT_BATCH_SIZE) -> ModelProfile:
    """
    ResNet-101 for 3x32x32 inputs (L=34).

    Unit 1 is the stem convolution; units 2..34 are the 33 bottleneck blocks.
    The classifier head (global pool + dense) is folded into the last block.
    """
    b = _LayerBuilder(3, 32, 32)
    b.conv(64, kernel=3)
    b.end_unit()

    blocks_total = sum(count for _, count, _ in RESNET101_STAGES)
    seen = 0
    for width, count, first_stride in RESNET101_STAGES:
        for block in range(count):
            stride = first_stride if block == 0 else 1
            c_in = b.shape[0]
            if block == 0:
                # projection shortcut, computed on the block input
                b.conv(width * 4, kernel=1, stride=stride, padding=0, update_shape=False)
            b.conv(width, kernel=1, padding=0, c_in=c_in)
            b.conv(width, kernel=3, stride=stride)
            b.conv(width * 4, kernel=1, padding=0)
            seen += 1
            if seen == blocks_total:
                b.global_pool()
                b.dense(10)
            b.end_unit()
    return b.build("resnet101", batch_size)


REFERENCE_MODELS: Dict[str, Callable[[int], ModelProfile]] = {
    "alexnet": alexnet_profile,
    "vgg11": vgg11_profile,
    "vgg19": vgg19_profile,
    "resnet101": resnet101_profile,
}


def list_reference_models() -> List[str]:
    return list(REFERENCE_MODELS)


def reference_profile(name: str, batch_size: int = DEFAULT_BATCH_SIZE) -> ModelProfile:
    key = name.lower().replace("-", "").replace("_", "")
    if key not in REFERENCE_MODELS:
        raise ProfileError(f"unknown reference model '{name}'; known: {', '.join(REFERENCE_MODELS)}")
    return REFERENCE_MODELS[key](batch_size)


def resolve_profile(ref: ProfileSource, batch_size: int = DEFAULT_BATCH_SIZE) -> ModelProfile:
    """Accept a reference model name, a profile path or an inline document."""
    if isinstance(ref, str) and ref.lower().replace("-", "").replace("_", "") in REFERENCE_MODELS:
        return reference_profile(ref, batch_size)
    return load_profile(ref)


def profile_frame(profile: ModelProfile) -> pd.DataFrame:
    return pd.DataFrame([layer.to_record() for layer in profile.layers])


def export_reference_profiles(out_dir: Union[str, Path], batch_size: int = DEFAULT_BATCH_SIZE) -> List[Path]:
    """Write every reference profile as JSON and CSV into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    for name in REFERENCE_MODELS:
        profile = reference_profile(name, batch_size)
        json_path = out / f"{name}_profile.json"
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(profile.to_document(), f, indent=2)
        csv_path = out / f"{name}_profile.csv"
        profile_frame(profile).to_csv(csv_path, index=False)
        written.extend([json_path, csv_path])
        logger.info("Exported %s (L=%d) to %s", name, profile.num_layers, json_path)
    return written
