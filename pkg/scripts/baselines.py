#!/usr/bin/env python3
"""
Round delay of the two-tier comparison schemes under the same analytic model.

- LocSFL: every client holds layers 1..v and trains with a local loss, so it
  is HSFL with every client acting as its own aggregator (lambda = 1).
- Sequential SFL: clients hold layers 1..v but wait for the server's
  gradients, so FP, server FP+BP and client BP run one after another.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from scripts.delay_model import LayerSplit
from scripts.errors import PlanError
from scripts.scenario import Scenario

logger = logging.getLogger(__name__)

LOCSFL = "locsfl"
SEQUENTIAL_SFL = "sequential_sfl"
BASELINE_COLUMNS = ["scheme", "v", "t1", "t2", "t3", "t_round", "overhead_bytes"]


@dataclass(frozen=True)
class BaselineDelay:
    scheme: str
    v: int
    t1: float
    t2: float
    t3: float
    t_round: float
    overhead_bytes: float

    def to_record(self) -> Dict[str, Any]:
        return asdict(self)


def _check_cut_layer(s: Scenario, v: int) -> None:
    L = s.model.num_layers
    if not 2 < v < L:
        raise PlanError("layer_range", f"baseline cut layer needs 2 < v < L={L}, got v={v}")


def locsfl_delay(s: Scenario, v: int) -> BaselineDelay:
    _check_cut_layer(s, v)
    split = LayerSplit(s, 2, v)
    a = np.arange(s.num_clients)
    d = split.breakdown(a)
    return BaselineDelay(scheme=LOCSFL, v=v, t1=d.t1, t2=d.t2, t3=d.t3, t_round=d.t_round,
                         overhead_bytes=d.overhead_bytes)


def sequential_sfl_delay(s: Scenario, v: int) -> BaselineDelay:
    """
    Per batch: slowest client FP plus g_v upload, then the server's FP+BP over
    all N models, then the slowest g_v download plus client BP.
    """
    _check_cut_layer(s, v)
    m = s.model
    client_flops = m.prefix_flops(1, v)
    g_v = m.act_bytes(v)
    p = s.throughputs
    r = s.rates[s.server_index, : s.num_clients]
    t_s = 3.0 * s.num_clients * m.prefix_flops(v + 1, m.num_layers) / s.server_throughput

    t1 = float((m.prefix_bytes(1, v) / r).max())
    forward = float((client_flops / p + g_v / r).max())
    backward = float((g_v / r + 2.0 * client_flops / p).max())
    t2 = forward + t_s + backward
    cycles = s.epochs_per_round * s.batches_per_epoch
    overhead = 2.0 * s.num_clients * m.prefix_bytes(1, v) + cycles * s.num_clients * 2.0 * g_v
    return BaselineDelay(scheme=SEQUENTIAL_SFL, v=v, t1=t1, t2=t2, t3=t1, t_round=t1 + cycles * t2 + t1,
                         overhead_bytes=overhead)


def baseline_delays(s: Scenario, v: int) -> List[BaselineDelay]:
    return [locsfl_delay(s, v), sequential_sfl_delay(s, v)]


def baseline_frame(s: Scenario, v: int) -> pd.DataFrame:
    return pd.DataFrame([b.to_record() for b in baseline_delays(s, v)], columns=BASELINE_COLUMNS)


def delay_reduction_pct(hsfl_t_round: float, baseline: BaselineDelay) -> float:
    """Relative round-delay reduction of HSFL against a baseline, in percent."""
    return (baseline.t_round - hsfl_t_round) / baseline.t_round * 100.0
