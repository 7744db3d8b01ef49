#!/usr/bin/env python3
"""
Analytic round delay and per-round communication overhead.

For a scenario and a plan (aggregator layer h, cut layer v, client-to-aggregator
assignment) the round splits into a model download (T1), E*Q batch executions
of T2 = T_FP + T_BP and a model upload (T3 = T1):

    T_round = T1 + E * Q * (T_FP + T_BP) + T3

Aggregators are clients too: they run their own weak-side model, map to
themselves and count their own aggregator-side model in their pooled workload.
Self-links cost nothing.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Collection, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from scripts.errors import PlanError
from scripts.scenario import Scenario

logger = logging.getLogger(__name__)

BREAKDOWN_COLUMNS = ["t1", "t_fp", "t_s", "t_bp", "t2", "t3", "t_round", "overhead_bytes"]


@dataclass(frozen=True)
class Plan:
    """
    Compact encoding of x_{n,k,l}: x = 1 iff assign[n] == k and h < l <= v.

    ``aggregators`` is kept sorted in the scenario's client order.
    """

    h: int
    v: int
    aggregators: Tuple[str, ...]
    assign: Mapping[str, str]

    @classmethod
    def from_assignment(cls, s: Scenario, h: int, v: int, assign: Mapping[str, str]) -> "Plan":
        order = {cid: i for i, cid in enumerate(s.client_ids)}
        aggs = sorted(set(assign.values()), key=lambda k: order.get(k, len(order)))
        return cls(h=h, v=v, aggregators=tuple(aggs), assign=dict(assign))

    @classmethod
    def from_record(cls, s: Scenario, record: Mapping[str, Any]) -> "Plan":
        """Rebuild a plan from a decision record (or a full run report)."""
        if "decision" in record:
            record = record["decision"]
        try:
            h, v = int(record["h"]), int(record["v"])
            assign = {str(n): str(k) for n, k in record["assignment"].items()}
        except KeyError as e:
            raise PlanError("plan_document", f"plan record missing field {e}") from e
        except (AttributeError, TypeError, ValueError) as e:
            raise PlanError("plan_document", f"plan record has an invalid value: {e}") from e
        return cls.from_assignment(s, h, v, assign)

    def members(self, aggregator: str) -> List[str]:
        return [n for n, k in self.assign.items() if k == aggregator]

    def fraction(self, n_clients: int) -> float:
        """lambda: share of clients acting as aggregators."""
        return len(self.aggregators) / n_clients

    def to_record(self) -> Dict[str, Any]:
        return {
            "h": self.h,
            "v": self.v,
            "aggregators": list(self.aggregators),
            "assignment": dict(sorted(self.assign.items())),
        }


@dataclass(frozen=True)
class DelayBreakdown:
    t1: float
    t_fp: float
    t_s: float
    t_bp: float
    t2: float
    t3: float
    t_round: float
    overhead_bytes: float

    def to_record(self) -> Dict[str, float]:
        return asdict(self)


def validate_plan(s: Scenario, p: Plan, candidates: Optional[Collection[int]] = None) -> None:
    """Raise PlanError naming the first violated constraint."""
    L = s.model.num_layers
    if not 1 < p.h < p.v < L:
        raise PlanError("layer_range", f"need 1 < h < v < L, got h={p.h}, v={p.v}, L={L}")
    if candidates is not None and p.v not in candidates:
        raise PlanError("cut_layer_candidates", f"cut layer v={p.v} not in candidate set {sorted(candidates)}")
    if not p.aggregators:
        raise PlanError("empty_aggregators", "plan nominates no aggregator")
    for k in p.aggregators:
        if not s.has_client(k):
            raise PlanError("unknown_client", f"aggregator '{k}' is not a client of the scenario")
    aggregators = set(p.aggregators)
    for n, k in p.assign.items():
        if not s.has_client(n):
            raise PlanError("unknown_client", f"assigned client '{n}' is not in the scenario")
        if k not in aggregators:
            raise PlanError("not_aggregator", f"client '{n}' mapped to '{k}', which is not an aggregator")
    for n in s.client_ids:
        if n not in p.assign:
            raise PlanError("unassigned", f"client '{n}' has no aggregator")
    for k in p.aggregators:
        if p.assign[k] != k:
            raise PlanError("aggregator_self", f"aggregator '{k}' must map to itself, maps to '{p.assign[k]}'")


def assignment_vector(s: Scenario, p: Plan) -> np.ndarray:
    """Aggregator index per client, in scenario client order."""
    return np.array([s.index_of(p.assign[n]) for n in s.client_ids], dtype=np.int64)


class LayerSplit:
    """
    Assignment-independent quantities for one (h, v) pair of a scenario.

    ``batch_terms`` evaluates many assignments at once; each row of the input
    matrix holds, per client, the index of its aggregator. The scalar API runs
    the same code on a single row so both paths agree bit for bit.
    """

    def __init__(self, s: Scenario, h: int, v: int) -> None:
        m = s.model
        L = m.num_layers
        self.scenario = s
        self.h = h
        self.v = v
        self.weak_flops = m.prefix_flops(1, h)
        self.aggr_flops = m.prefix_flops(h + 1, v)
        self.server_flops = m.prefix_flops(v + 1, L)
        self.g_h = m.act_bytes(h)
        self.g_v = m.act_bytes(v)
        self.weak_bytes = m.prefix_bytes(1, h)
        self.aggr_bytes = m.prefix_bytes(1, v)
        self.n = s.num_clients
        self.p = s.throughputs
        self.rates = s.rates[: self.n, : self.n]
        self.r_server = s.rates[s.server_index, : self.n]
        self.t_s = 3.0 * self.n * self.server_flops / s.server_throughput
        self.cycles = s.epochs_per_round * s.batches_per_epoch

    def batch_terms(self, A: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (t1, t_fp, t_bp) per assignment row of ``A`` (shape m x N)."""
        A = np.atleast_2d(A)
        clients = np.arange(self.n)
        counts = (A[:, :, None] == clients[None, None, :]).sum(axis=1)
        pooled = np.take_along_axis(counts, A, axis=1) * self.aggr_flops
        p_aggr = self.p[A]
        r_pair = self.rates[clients[None, :], A]
        r_up = self.r_server[A]

        weak_fp = self.weak_flops / self.p
        fp = weak_fp + self.g_h / r_pair + pooled / p_aggr + self.g_v / r_up
        bp = 2.0 * pooled / p_aggr + self.g_h / r_pair + 2.0 * weak_fp
        t_fp = fp.max(axis=1)
        t_bp = np.maximum(self.t_s, bp.max(axis=1))

        is_aggr = A == clients[None, :]
        download = np.where(is_aggr, self.aggr_bytes, self.weak_bytes) / self.r_server
        t1 = download.max(axis=1)
        return t1, t_fp, t_bp

    def round_times(self, A: np.ndarray) -> np.ndarray:
        t1, t_fp, t_bp = self.batch_terms(A)
        return t1 + self.cycles * (t_fp + t_bp) + t1

    def overhead(self, a: np.ndarray) -> float:
        clients = np.arange(self.n)
        is_aggr = a == clients
        n_aggr = int(is_aggr.sum())
        model_bytes = n_aggr * self.aggr_bytes + (self.n - n_aggr) * self.weak_bytes
        remote = int((~is_aggr).sum())
        per_batch = remote * 2.0 * self.g_h + self.n * self.g_v
        return 2.0 * model_bytes + self.cycles * per_batch

    def breakdown(self, a: np.ndarray) -> DelayBreakdown:
        t1, t_fp, t_bp = (float(x[0]) for x in self.batch_terms(a[None, :]))
        t2 = t_fp + t_bp
        return DelayBreakdown(
            t1=t1,
            t_fp=t_fp,
            t_s=self.t_s,
            t_bp=t_bp,
            t2=t2,
            t3=t1,
            t_round=float(self.round_times(a[None, :])[0]),
            overhead_bytes=self.overhead(a),
        )

    def aggregator_fp_time(self, a: np.ndarray) -> float:
        """T_aggr: largest pooled aggregator-side FP time over aggregators."""
        counts = np.bincount(a, minlength=self.n)
        aggr = counts > 0
        return float((counts[aggr] * self.aggr_flops / self.p[aggr]).max())

    def client_fp_time(self) -> float:
        """T_clients: largest weak-side FP time over all clients."""
        return float((self.weak_flops / self.p).max())


def _split(s: Scenario, p: Plan) -> Tuple[LayerSplit, np.ndarray]:
    validate_plan(s, p)
    return LayerSplit(s, p.h, p.v), assignment_vector(s, p)


def t1(s: Scenario, p: Plan) -> float:
    """T1: slowest model download over all recipients."""
    split, a = _split(s, p)
    return float(split.batch_terms(a[None, :])[0][0])


def t_fp(s: Scenario, p: Plan) -> float:
    """Slowest forward path over clients."""
    split, a = _split(s, p)
    return float(split.batch_terms(a[None, :])[1][0])


def t_s(s: Scenario, p: Plan) -> float:
    """Server-side FP + BP over all N server-side models."""
    split, _ = _split(s, p)
    return split.t_s


def t_bp(s: Scenario, p: Plan) -> float:
    """Max of server time and the slowest local backward path."""
    split, a = _split(s, p)
    return float(split.batch_terms(a[None, :])[2][0])


def round_delay(s: Scenario, p: Plan) -> DelayBreakdown:
    """Full breakdown: T1, T2 = T_FP + T_BP, T3 and the round total, plus overhead."""
    split, a = _split(s, p)
    return split.breakdown(a)


def round_overhead(s: Scenario, p: Plan) -> float:
    """
    Payload bytes moved in one round.

    Model download and upload (weak-side model to plain clients, weak- and
    aggregator-side models to aggregators), then per batch execution g_h up and
    down on every non-self client-aggregator link and g_v per client from its
    aggregator to the server.
    """
    split, a = _split(s, p)
    return split.overhead(a)


def breakdown_row(p: Plan, lam: float, d: DelayBreakdown) -> Dict[str, Any]:
    """Flat CSV row: h, v, lambda, then the breakdown columns."""
    row: Dict[str, Any] = {"h": p.h, "v": p.v, "lambda": lam}
    row.update(d.to_record())
    return row


def load_plan(s: Scenario, path: Union[str, Path]) -> Plan:
    """Read a plan from a JSON decision record or run report and validate it."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            record = json.load(f)
    except FileNotFoundError as e:
        raise PlanError("plan_document", f"plan document not found: {path}") from e
    except json.JSONDecodeError as e:
        raise PlanError("plan_document", f"{path} is not valid JSON: {e}") from e
    p = Plan.from_record(s, record)
    validate_plan(s, p)
    return p
