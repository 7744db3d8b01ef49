#!/usr/bin/env python3
"""
Expansion of a compact plan into the binary assignment tensor x[n, k, l] and a
checker for the assignment constraints:

    binary            x[n, k, l] in {0, 1}
    single_aggregator sum_k x[n, k, h+1] <= 1
    contiguous_block  x[n, k, l] == x[n, k, h+1] for every l in h+1..v
plus the plan-level rules every client is assigned, nothing outside the block
h+1..v is set and an aggregator that serves anyone serves itself.

Layer axis is 0-based in the array: column l-1 holds layer l.
"""

from __future__ import annotations

from typing import Dict, List

import numpy as np

from scripts.delay_model import Plan, validate_plan
from scripts.errors import ConstraintViolation
from scripts.scenario import Scenario


def expand_assignment(s: Scenario, p: Plan) -> np.ndarray:
    """Return the (N, N, L) uint8 tensor encoded by ``p``."""
    validate_plan(s, p)
    n = s.num_clients
    x = np.zeros((n, n, s.model.num_layers), dtype=np.uint8)
    for client, aggregator in p.assign.items():
        x[s.index_of(client), s.index_of(aggregator), p.h:p.v] = 1
    return x


def check_assignment_tensor(x: np.ndarray, h: int, v: int) -> None:
    """Raise ConstraintViolation with a diagnostic code for the first broken rule."""
    if x.ndim != 3 or x.shape[0] != x.shape[1]:
        raise ConstraintViolation("shape", f"expected an (N, N, L) tensor, got shape {x.shape}")
    n, _, L = x.shape
    if not 1 < h < v < L:
        raise ConstraintViolation("layer_order", f"need 1 < h < v < L, got h={h}, v={v}, L={L}")
    if not np.isin(x, (0, 1)).all():
        raise ConstraintViolation("binary", "x[n, k, l] must be 0 or 1")

    outside = np.ones(L, dtype=bool)
    outside[h:v] = False
    if x[:, :, outside].any():
        n_bad, k_bad, l_bad = np.argwhere(x[:, :, outside])[0]
        layer = int(np.flatnonzero(outside)[l_bad]) + 1
        raise ConstraintViolation(
            "outside_block", f"client {n_bad} has layer {layer} on aggregator {k_bad}, outside {h + 1}..{v}"
        )

    block = x[:, :, h:v]
    first = block[:, :, :1]
    if (block != first).any():
        n_bad, k_bad, _ = np.argwhere(block != first)[0]
        raise ConstraintViolation(
            "contiguous_block", f"layers {h + 1}..{v} of client {n_bad} are not all on aggregator {k_bad}"
        )

    per_client = x[:, :, h].sum(axis=1)
    if (per_client > 1).any():
        bad = int(np.flatnonzero(per_client > 1)[0])
        raise ConstraintViolation("single_aggregator", f"client {bad} is assigned to {int(per_client[bad])} aggregators")
    if (per_client == 0).any():
        bad = int(np.flatnonzero(per_client == 0)[0])
        raise ConstraintViolation("unassigned", f"client {bad} is assigned to no aggregator")

    serving = x[:, :, h].sum(axis=0) > 0
    for k in np.flatnonzero(serving):
        if x[k, k, h] != 1:
            raise ConstraintViolation("aggregator_not_self", f"aggregator {int(k)} serves clients but not itself")


def plan_from_tensor(s: Scenario, x: np.ndarray, h: int, v: int) -> Plan:
    """Decode a checked tensor back into a compact plan."""
    check_assignment_tensor(x, h, v)
    ids = s.client_ids
    assign: Dict[str, str] = {ids[n]: ids[int(np.argmax(x[n, :, h]))] for n in range(len(ids))}
    return Plan.from_assignment(s, h, v, assign)


def violations(x: np.ndarray, h: int, v: int) -> List[str]:
    """Diagnostic codes of a tensor; empty when it is valid."""
    try:
        check_assignment_tensor(x, h, v)
    except ConstraintViolation as e:
        return [e.code]
    return []
