#!/usr/bin/env python3
"""
Event-driven simulation of one training round.

The round is expanded into a task dependency DAG (networkx): model downloads,
then E*Q lockstep batch executions, then model uploads. Inside a batch every
client runs its weak-side FP and ships g_h to its aggregator; an aggregator
starts its pooled FP once all its members' activations have arrived and then
sends g_v per member to the server. After the FP barrier the server's FP+BP
runs alongside the local-loss BP chain (aggregator BP, g_h gradient back,
weak-side BP). A batch barrier closes every batch execution.

Tasks are released through a heap of completion events ordered by
(time, actor, kind), so traces are deterministic.
"""

from __future__ import annotations

import heapq
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Hashable, List, Optional, Tuple, Union

import networkx as nx
import pandas as pd

from scripts.delay_model import LayerSplit, Plan, round_delay, validate_plan
from scripts.errors import SimulationError
from scripts.scenario import SERVER, Scenario

logger = logging.getLogger(__name__)

DOWNLOAD = "download"
WEAK_FP = "weak_fp"
SEND_ACT_H = "send_act_h"
AGG_FP = "agg_fp"
SEND_ACT_V = "send_act_v"
SERVER_FP_BP = "server_fp_bp"
AGG_BP = "agg_bp"
SEND_GRAD_H = "send_grad_h"
WEAK_BP = "weak_bp"
UPLOAD = "upload"
BARRIER = "barrier"

COMPUTE_KINDS = frozenset({WEAK_FP, AGG_FP, SERVER_FP_BP, AGG_BP, WEAK_BP})
TRACE_COLUMNS = ["actor", "kind", "start", "end", "batch"]
SYNC_ACTOR = "sync"

TaskKey = Tuple[Hashable, ...]


@dataclass(frozen=True)
class TaskRecord:
    actor: str
    kind: str
    start: float
    end: float
    batch: Optional[int] = None

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class TaskTrace:
    records: Tuple[TaskRecord, ...]
    makespan: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records], columns=TRACE_COLUMNS)

    def to_document(self) -> Dict[str, Any]:
        return {"makespan": self.makespan, "events": [asdict(r) for r in self.records]}

    def for_actor(self, actor: str) -> List[TaskRecord]:
        return [r for r in self.records if r.actor == actor]


def _add(g: nx.DiGraph, key: TaskKey, actor: str, kind: str, duration: float,
         batch: Optional[int], after: List[TaskKey]) -> TaskKey:
    g.add_node(key, actor=actor, kind=kind, duration=float(duration), batch=batch)
    for dep in after:
        g.add_edge(dep, key)
    return key


def build_task_graph(s: Scenario, p: Plan) -> nx.DiGraph:
    """Dependency DAG of one round; node attributes carry actor, kind, duration and batch."""
    split = LayerSplit(s, p.h, p.v)
    ids = s.client_ids
    rate = s.link_rate
    aggregators = set(p.aggregators)
    members = {k: p.members(k) for k in p.aggregators}
    g = nx.DiGraph()

    downloads = []
    for n in ids:
        size = split.aggr_bytes if n in aggregators else split.weak_bytes
        downloads.append(_add(g, (DOWNLOAD, n), n, DOWNLOAD, size / rate(SERVER, n), None, []))
    barrier = _add(g, (BARRIER, "phase1"), SYNC_ACTOR, BARRIER, 0.0, None, downloads)

    for b in range(split.cycles):
        arrived: Dict[str, TaskKey] = {}
        for n in ids:
            k = p.assign[n]
            fp = _add(g, (WEAK_FP, b, n), n, WEAK_FP, split.weak_flops / s.client(n).throughput, b, [barrier])
            if k == n:
                arrived[n] = fp
            else:
                arrived[n] = _add(g, (SEND_ACT_H, b, n), n, SEND_ACT_H, split.g_h / rate(n, k), b, [fp])

        sent = []
        for k in p.aggregators:
            pooled = len(members[k]) * split.aggr_flops
            agg_fp = _add(g, (AGG_FP, b, k), k, AGG_FP, pooled / s.client(k).throughput, b,
                          [arrived[m] for m in members[k]])
            for m in members[k]:
                sent.append(_add(g, (SEND_ACT_V, b, m), k, SEND_ACT_V, split.g_v / rate(k, SERVER), b, [agg_fp]))
        fp_done = _add(g, (BARRIER, b, "fp"), SYNC_ACTOR, BARRIER, 0.0, b, sent)

        finished = [_add(g, (SERVER_FP_BP, b), SERVER, SERVER_FP_BP, split.t_s, b, [fp_done])]
        for k in p.aggregators:
            pooled = len(members[k]) * split.aggr_flops
            agg_bp = _add(g, (AGG_BP, b, k), k, AGG_BP, 2.0 * pooled / s.client(k).throughput, b, [fp_done])
            for m in members[k]:
                before = agg_bp
                if m != k:
                    before = _add(g, (SEND_GRAD_H, b, m), k, SEND_GRAD_H, split.g_h / rate(k, m), b, [agg_bp])
                finished.append(_add(g, (WEAK_BP, b, m), m, WEAK_BP,
                                     2.0 * split.weak_flops / s.client(m).throughput, b, [before]))
        barrier = _add(g, (BARRIER, b, "batch"), SYNC_ACTOR, BARRIER, 0.0, b, finished)

    for n in ids:
        size = split.aggr_bytes if n in aggregators else split.weak_bytes
        _add(g, (UPLOAD, n), n, UPLOAD, size / rate(n, SERVER), None, [barrier])
    return g


def run_task_graph(g: nx.DiGraph) -> TaskTrace:
    """Process the DAG with an event queue; every task starts when its last dependency ends."""
    if not nx.is_directed_acyclic_graph(g):
        cycle = nx.find_cycle(g)
        raise SimulationError(f"task graph has a dependency cycle: {cycle}")

    pending = {node: g.in_degree(node) for node in g.nodes}
    ready_at: Dict[TaskKey, float] = {node: 0.0 for node in g.nodes}
    seq = 0
    queue: List[Tuple[float, str, str, int, TaskKey, float]] = []

    def release(node: TaskKey) -> None:
        nonlocal seq
        attrs = g.nodes[node]
        start = ready_at[node]
        heapq.heappush(queue, (start + attrs["duration"], attrs["actor"], attrs["kind"], seq, node, start))
        seq += 1

    for node, degree in pending.items():
        if degree == 0:
            release(node)

    records: List[TaskRecord] = []
    makespan = 0.0
    while queue:
        end, actor, kind, _, node, start = heapq.heappop(queue)
        makespan = max(makespan, end)
        if kind != BARRIER:
            records.append(TaskRecord(actor=actor, kind=kind, start=start, end=end, batch=g.nodes[node]["batch"]))
        for succ in g.successors(node):
            ready_at[succ] = max(ready_at[succ], end)
            pending[succ] -= 1
            if pending[succ] == 0:
                release(succ)

    if any(count > 0 for count in pending.values()):
        raise SimulationError("task graph left tasks unreleased")
    return TaskTrace(records=tuple(records), makespan=makespan)


def simulate_round(s: Scenario, p: Plan) -> TaskTrace:
    """Simulated task timeline of one round; its makespan is the simulated t_round."""
    validate_plan(s, p)
    g = build_task_graph(s, p)
    trace = run_task_graph(g)
    logger.debug("Simulated %d tasks, makespan %.6f s", g.number_of_nodes(), trace.makespan)
    return trace


def check_agreement(s: Scenario, p: Plan, rtol: float = 1e-9) -> Tuple[float, float, bool]:
    """(analytic t_round, simulated makespan, agree within rtol)."""
    analytic = round_delay(s, p).t_round
    simulated = simulate_round(s, p).makespan
    scale = max(abs(analytic), abs(simulated), 1e-300)
    return analytic, simulated, abs(analytic - simulated) / scale <= rtol


def export_trace(trace: TaskTrace, out_dir: Union[str, Path], stem: str = "trace") -> List[Path]:
    """Write the trace as a JSON event list and a CSV table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / f"{stem}.json"
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(trace.to_document(), f, indent=2)
    csv_path = out / f"{stem}.csv"
    trace.to_frame().to_csv(csv_path, index=False)
    return [json_path, csv_path]
