#!/usr/bin/env python3
"""
Candidate cut-layer identification from measured accuracy profiles.

Accuracies acc_n(v, e) come from short offline runs (per client, per candidate
cut layer, per epoch). They are averaged over clients per epoch, then over
epochs, and every layer within ``thr`` of the best average is a candidate.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from scripts.errors import AccuracyProfileError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.02
# absorbs float noise in acc >= best - thr
_TOLERANCE = 1e-12
AVERAGED_CLIENT = "avg"


@dataclass(frozen=True, eq=False)
class AccuracyProfile:
    """
    acc(client, v, e) for clients N', epochs 1..E' and layers ``layers``.

    ``frame`` has columns client, v, e, value with one row per triple.
    """

    frame: pd.DataFrame
    clients: Tuple[str, ...]
    epochs: int
    layers: Tuple[int, ...]
    _by_layer: pd.Series = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.frame.empty or not self.layers:
            raise AccuracyProfileError("accuracy profile is empty")
        if self.epochs < 1:
            raise AccuracyProfileError(f"epochs must be >= 1, got {self.epochs}")
        values = self.frame["value"].to_numpy(dtype=float)
        if not ((values >= 0.0) & (values <= 1.0)).all():
            raise AccuracyProfileError("accuracies must lie in [0, 1]")
        if self.frame.duplicated(subset=["client", "v", "e"]).any():
            raise AccuracyProfileError("duplicate (client, v, e) entries")

        expected = pd.MultiIndex.from_product(
            [list(self.clients), list(self.layers), range(1, self.epochs + 1)], names=["client", "v", "e"]
        )
        present = pd.MultiIndex.from_frame(self.frame[["client", "v", "e"]])
        missing = expected.difference(present)
        if len(missing):
            client, v, e = missing[0]
            raise AccuracyProfileError(f"missing accuracy for client={client}, v={v}, e={e} ({len(missing)} missing)")
        extra = present.difference(expected)
        if len(extra):
            client, v, e = extra[0]
            raise AccuracyProfileError(f"entry outside declared ranges: client={client}, v={v}, e={e}")

        per_epoch = self.frame.groupby(["v", "e"])["value"].mean()
        by_layer = per_epoch.groupby(level="v").mean().sort_index()
        object.__setattr__(self, "_by_layer", by_layer)

    @property
    def by_layer(self) -> pd.Series:
        """acc(v, E') indexed by layer."""
        return self._by_layer.copy()


def profile_from_layer_averages(acc_by_layer: Mapping[Any, float]) -> AccuracyProfile:
    """Short form: already averaged accuracy per layer, one pseudo client and epoch."""
    if not isinstance(acc_by_layer, Mapping):
        raise AccuracyProfileError("acc_by_layer must map layer indices to accuracies")
    try:
        rows = [{"client": AVERAGED_CLIENT, "v": int(v), "e": 1, "value": float(a)} for v, a in acc_by_layer.items()]
    except (TypeError, ValueError) as e:
        raise AccuracyProfileError(f"acc_by_layer has a non-numeric layer or accuracy: {e}") from e
    layers = tuple(sorted(row["v"] for row in rows))
    return AccuracyProfile(frame=pd.DataFrame(rows, columns=["client", "v", "e", "value"]),
                           clients=(AVERAGED_CLIENT,), epochs=1, layers=layers)


def load_accuracy_profile(source: Union[str, Path, Mapping[str, Any]]) -> AccuracyProfile:
    """
    Read an accuracy profile document.

    Full form: {"epochs": E', "clients": [...], "acc": [{"client", "v", "e",
    "value"}, ...]}; short form: {"acc_by_layer": {"2": 0.85, ...}}.
    """
    if isinstance(source, Mapping):
        document: Any = source
    else:
        try:
            with open(source, "r", encoding="utf-8") as f:
                document = json.load(f)
        except FileNotFoundError as e:
            raise AccuracyProfileError(f"accuracy profile not found: {source}") from e
        except json.JSONDecodeError as e:
            raise AccuracyProfileError(f"accuracy profile {source} is not valid JSON: {e}") from e
    if not isinstance(document, Mapping):
        raise AccuracyProfileError("accuracy profile must be a JSON object")

    if "acc_by_layer" in document:
        return profile_from_layer_averages(document["acc_by_layer"])

    try:
        entries = document["acc"]
        frame = pd.DataFrame(
            [{"client": str(r["client"]), "v": int(r["v"]), "e": int(r["e"]), "value": float(r["value"])} for r in entries],
            columns=["client", "v", "e", "value"],
        )
        clients = tuple(str(c) for c in document.get("clients", sorted(frame["client"].unique())))
        epochs = int(document.get("epochs", frame["e"].max() if not frame.empty else 0))
    except KeyError as e:
        raise AccuracyProfileError(f"accuracy profile missing field {e}") from e
    except (TypeError, ValueError) as e:
        raise AccuracyProfileError(f"accuracy profile has an invalid value: {e}") from e

    layers = tuple(int(v) for v in document.get("layers", sorted(frame["v"].unique())))
    return AccuracyProfile(frame=frame, clients=clients, epochs=epochs, layers=layers)


def average_accuracy(a: AccuracyProfile, v: int) -> float:
    """acc(v, E'): mean over clients per epoch, then mean over epochs."""
    if v not in a.layers:
        raise AccuracyProfileError(f"layer {v} not in profile range {a.layers[0]}..{a.layers[-1]}")
    return float(a.by_layer.loc[v])


def candidate_cut_layers(a: AccuracyProfile, thr: float = DEFAULT_THRESHOLD) -> List[int]:
    """Layers whose averaged accuracy is within ``thr`` of the best, ascending."""
    if thr < 0:
        raise AccuracyProfileError(f"threshold must be >= 0, got {thr}")
    by_layer = a.by_layer
    best = by_layer.max()
    selected = by_layer[by_layer >= best - thr - _TOLERANCE]
    candidates = sorted(int(v) for v in selected.index)
    logger.info("Candidate cut layers (thr=%.3f, best=%.4f): %s", thr, best, candidates)
    return candidates


def check_layer_range(a: AccuracyProfile, num_layers: int) -> None:
    """Profile layers must lie in 2..L-1 of the model they describe."""
    bad = [v for v in a.layers if not 2 <= v <= num_layers - 1]
    if bad:
        raise AccuracyProfileError(f"accuracy profile layers {bad} outside 2..{num_layers - 1}")


def synthetic_accuracy_profile(
    num_layers: int,
    peak_layer: int,
    clients: Sequence[str] = ("c1", "c2", "c3"),
    epochs: int = 3,
    peak: float = 0.9,
    drop_per_layer: float = 0.03,
    noise: float = 0.005,
    seed: Optional[int] = 0,
) -> AccuracyProfile:
    """
    Unimodal accuracy curve over layers 2..L-1 peaking at ``peak_layer``.

    Accuracy falls by ``drop_per_layer`` per layer of distance from the peak
    and rises slightly with the epoch; ``noise`` adds seeded per-client jitter.
    """
    if not 2 <= peak_layer <= num_layers - 1:
        raise AccuracyProfileError(f"peak layer {peak_layer} outside 2..{num_layers - 1}")
    rng = np.random.default_rng(seed)
    layers = list(range(2, num_layers))
    rows: List[Dict[str, Any]] = []
    for v in layers:
        base = peak - drop_per_layer * abs(v - peak_layer)
        for e in range(1, epochs + 1):
            epoch_gain = 0.01 * (e - epochs)
            for client in clients:
                value = base + epoch_gain + (rng.normal(0.0, noise) if noise else 0.0)
                rows.append({"client": client, "v": v, "e": e, "value": float(np.clip(value, 0.0, 1.0))})
    return AccuracyProfile(frame=pd.DataFrame(rows), clients=tuple(clients), epochs=epochs, layers=tuple(layers))
