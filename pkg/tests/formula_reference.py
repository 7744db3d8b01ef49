"""
Straight-from-formula evaluation of the round delay over the expanded
assignment tensor x[n, k, l]. Plain Python loops over layers and clients, no
prefix sums and no vectorisation, so it shares no code with the delay model.
"""

import math
from typing import Dict, List

import numpy as np

from scripts.scenario import Scenario


def _rate(s: Scenario, i: int, j: int) -> float:
    return math.inf if i == j else float(s.rates[i][j])


def reference_delay(s: Scenario, x: np.ndarray, h: int, v: int) -> Dict[str, float]:
    n_clients = s.num_clients
    layers = s.model.layers
    L = len(layers)
    server = n_clients
    f = [layer.flops_fp for layer in layers]
    a = [layer.weight_bytes for layer in layers]
    g = [layer.act_bytes for layer in layers]
    p = [c.throughput for c in s.clients]

    # layer l (1-based) sits at column l - 1
    aggregator_of: List[int] = []
    for n in range(n_clients):
        ks = [k for k in range(n_clients) if x[n][k][h] == 1]
        aggregator_of.append(ks[0])
    aggregators = set(aggregator_of)

    def f_sum(lo: int, hi: int) -> float:
        return sum(f[l - 1] for l in range(lo, hi + 1))

    def a_sum(lo: int, hi: int) -> float:
        return sum(a[l - 1] for l in range(lo, hi + 1))

    t1 = 0.0
    for n in range(n_clients):
        size = a_sum(1, v) if n in aggregators else a_sum(1, h)
        t1 = max(t1, size / _rate(s, server, n))

    pooled = {}
    for k in aggregators:
        pooled[k] = sum(
            sum(f[l - 1] * x[m][k][l - 1] for l in range(h + 1, v + 1)) for m in range(n_clients)
        )

    t_fp = 0.0
    local_bp = 0.0
    for n in range(n_clients):
        k = aggregator_of[n]
        fp = (f_sum(1, h) / p[n] + g[h - 1] / _rate(s, n, k) + pooled[k] / p[k]
              + g[v - 1] / _rate(s, k, server))
        bp = 2 * pooled[k] / p[k] + g[h - 1] / _rate(s, k, n) + 2 * f_sum(1, h) / p[n]
        t_fp = max(t_fp, fp)
        local_bp = max(local_bp, bp)

    t_s = 3 * n_clients * f_sum(v + 1, L) / s.server_throughput
    t_bp = max(t_s, local_bp)
    t2 = t_fp + t_bp
    q = max(math.ceil(c.dataset_size / s.model.batch_size) for c in s.clients)
    cycles = s.epochs_per_round * q

    model_bytes = sum(a_sum(1, v) if n in aggregators else a_sum(1, h) for n in range(n_clients))
    per_batch = 0.0
    for n in range(n_clients):
        if aggregator_of[n] != n:
            per_batch += 2 * g[h - 1]
        per_batch += g[v - 1]

    return {
        "t1": t1,
        "t_fp": t_fp,
        "t_s": t_s,
        "t_bp": t_bp,
        "t2": t2,
        "t3": t1,
        "t_round": t1 + cycles * t2 + t1,
        "overhead_bytes": 2 * model_bytes + cycles * per_batch,
    }
