#!/usr/bin/env python3
"""
Joint selection of aggregator layer, cut layer and client-to-aggregator
assignment.

For every candidate cut layer v the planner walks the aggregator layer h with a
bisection-style rule, starting at h=2. At each h it sweeps the aggregator
fraction lambda in steps of beta up to maxAggr/N (never short of the strong
class), nominates the strongest ceil(lambda*N) clients as aggregators, assigns
the others greedily and keeps the configuration with the lowest round delay.
h moves deeper while the slowest aggregator's FP time exceeds the slowest
client's weak-side FP time by more than delta.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Collection, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from scripts.delay_model import DelayBreakdown, LayerSplit, Plan, round_delay, validate_plan
from scripts.errors import InfeasiblePlanError, PlanError, PlanningError
from scripts.scenario import Scenario, SystemChange, apply_changes, ceil_count, heterogeneity

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 0.5
DEFAULT_LAMBDA_STEP = 0.01
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class PlannerConfig:
    """
    delta: balance threshold in seconds; lambda_step: sweep step beta.

    ``max_h_iterations`` defaults to ceil(log2 L) + 1. ``fixed_lambda`` pins the
    aggregator fraction (bypassing maxAggr, up to 1.0). ``max_aggregators_cap``
    bounds the number of aggregators. With ``cover_strong_class`` the sweep always
    reaches every strong client (see ``strong_class_size``), even when maxAggr
    is smaller (still at most N-1).
    """

    delta: float = DEFAULT_DELTA
    lambda_step: float = DEFAULT_LAMBDA_STEP
    max_h_iterations: Optional[int] = None
    fixed_lambda: Optional[float] = None
    max_aggregators_cap: Optional[int] = None
    cover_strong_class: bool = True

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise PlanningError(f"delta must be > 0, got {self.delta}")
        if not 0 < self.lambda_step <= 1:
            raise PlanningError(f"lambda_step must lie in (0, 1], got {self.lambda_step}")
        if self.fixed_lambda is not None and not 0 < self.fixed_lambda <= 1:
            raise PlanningError(f"fixed_lambda must lie in (0, 1], got {self.fixed_lambda}")
        if self.max_aggregators_cap is not None and self.max_aggregators_cap < 1:
            raise PlanningError(f"max_aggregators_cap must be >= 1, got {self.max_aggregators_cap}")
        if self.max_h_iterations is not None and self.max_h_iterations < 1:
            raise PlanningError(f"max_h_iterations must be >= 1, got {self.max_h_iterations}")

    def h_iterations(self, num_layers: int) -> int:
        if self.max_h_iterations is not None:
            return self.max_h_iterations
        return int(math.ceil(math.log2(num_layers))) + 1

    def to_record(self) -> Dict[str, Any]:
        return {
            "delta": self.delta,
            "lambda_step": self.lambda_step,
            "max_h_iterations": self.max_h_iterations,
            "fixed_lambda": self.fixed_lambda,
            "max_aggregators_cap": self.max_aggregators_cap,
            "cover_strong_class": self.cover_strong_class,
        }


@dataclass(frozen=True)
class HStep:
    """One visit of the h balance loop."""

    v: int
    h: int
    max_aggr: int
    best_k: int
    best_t_round: float
    t_aggr: float
    t_clients: float


@dataclass(frozen=True)
class PlanDecision:
    plan: Plan
    breakdown: DelayBreakdown
    lam: float
    iterations: int
    evaluated_configs: int
    trajectory: Tuple[HStep, ...] = field(default=())

    def __iter__(self) -> Iterator[Any]:
        # unpacks as (plan, breakdown)
        return iter((self.plan, self.breakdown))

    def to_record(self) -> Dict[str, Any]:
        record = self.plan.to_record()
        record["lambda"] = self.lam
        record["delay_breakdown"] = self.breakdown.to_record()
        record["iterations"] = self.iterations
        record["evaluated_configs"] = self.evaluated_configs
        record["trajectory"] = [asdict(step) for step in self.trajectory]
        return record


def natural_key(client_id: str) -> Tuple[Any, ...]:
    return tuple(int(part) if part.isdigit() else part for part in re.split(r"(\d+)", client_id))


def strength_order(s: Scenario) -> List[int]:
    """Client indices by descending throughput, ties by lower id."""
    ids = s.client_ids
    p = s.throughputs
    return sorted(range(s.num_clients), key=lambda i: (-p[i], natural_key(ids[i])))


def tie_key(t_round: float, v: int, h: int, n_aggregators: int) -> Tuple[float, int, int, int]:
    """Shared ordering: lower t_round, then lower v, h and lambda."""
    return (t_round, v, h, n_aggregators)


def max_aggregators(s: Scenario, h: int, v: int) -> int:
    """
    maxAggr = floor((gamma - 1) * sum_{1..h} f / sum_{h..v} f), clamped to [1, N-1].

    The denominator includes layer h.
    """
    if not 1 < h < v:
        raise PlanError("layer_range", f"need 1 < h < v, got h={h}, v={v}")
    n = s.num_clients
    upper = max(1, n - 1)
    denominator = s.model.prefix_flops(h, v)
    if denominator <= 0:
        return upper
    raw = math.floor((heterogeneity(s) - 1.0) * s.model.prefix_flops(1, h) / denominator + _FLOOR_EPS)
    clamped = min(max(raw, 1), upper)
    if clamped != raw:
        logger.debug("maxAggr clamped from %d to %d (h=%d, v=%d)", raw, clamped, h, v)
    return clamped


def strong_class_size(s: Scenario) -> int:
    """
    Number of strong clients: those whose throughput lies at or above the
    geometric mean of the highest and lowest throughput. A homogeneous
    population is all strong.
    """
    p = s.throughputs
    middle = math.sqrt(float(p.max()) * float(p.min()))
    return int(np.count_nonzero(p >= middle * (1.0 - _FLOOR_EPS)))


def _greedy_vector(
    split: LayerSplit, aggregator_idx: Sequence[int], order: Sequence[int], ids: Sequence[str]
) -> np.ndarray:
    """
    Assign non-aggregators in ``order`` to the aggregator minimising its
    resulting worst member path (FP + BP terms of that client-aggregator pair).
    Equal paths go to the aggregator with the lowest id in natural order.
    """
    p = split.p
    rates = split.rates
    r_server = split.r_server
    a = np.empty(split.n, dtype=np.int64)
    count: Dict[int, int] = {}
    worst_local: Dict[int, float] = {}
    for k in aggregator_idx:
        a[k] = k
        count[k] = 1
        worst_local[k] = 3.0 * split.weak_flops / p[k]

    chosen = set(aggregator_idx)
    for n in order:
        if n in chosen:
            continue
        best: Optional[Tuple[float, Tuple[Any, ...], int]] = None
        for k in aggregator_idx:
            local = 3.0 * split.weak_flops / p[n] + 2.0 * split.g_h / rates[n, k]
            path = (max(worst_local[k], local)
                    + 3.0 * (count[k] + 1) * split.aggr_flops / p[k]
                    + split.g_v / r_server[k])
            candidate = (path, natural_key(ids[k]), k)
            if best is None or candidate[:2] < best[:2]:
                best = candidate
        assert best is not None
        k_star = best[2]
        a[n] = k_star
        count[k_star] += 1
        worst_local[k_star] = max(worst_local[k_star], 3.0 * split.weak_flops / p[n] + 2.0 * split.g_h / rates[n, k_star])
    return a


def plan_from_vector(s: Scenario, h: int, v: int, a: np.ndarray) -> Plan:
    ids = s.client_ids
    return Plan.from_assignment(s, h, v, {ids[n]: ids[int(k)] for n, k in enumerate(a)})


def greedy_assign(s: Scenario, h: int, v: int, aggregators: Collection[str]) -> Plan:
    """
    Greedy client-to-aggregator assignment for fixed layers.

    Clients are taken in descending throughput order; aggregators map to
    themselves; ties go to the aggregator with the lowest id.
    """
    if not aggregators:
        raise PlanError("empty_aggregators", "greedy_assign needs at least one aggregator")
    for k in aggregators:
        if not s.has_client(k):
            raise PlanError("unknown_client", f"aggregator '{k}' is not a client of the scenario")
    split = LayerSplit(s, h, v)
    ids = s.client_ids
    aggregator_idx = sorted((s.index_of(k) for k in aggregators), key=lambda i: natural_key(ids[i]))
    return plan_from_vector(s, h, v, _greedy_vector(split, aggregator_idx, strength_order(s), ids))


def _aggregator_counts(s: Scenario, h: int, v: int, cfg: PlannerConfig) -> Tuple[int, List[int]]:
    """maxAggr and the deduplicated aggregator counts of the lambda sweep."""
    n = s.num_clients
    if cfg.fixed_lambda is not None:
        counts = [min(max(ceil_count(cfg.fixed_lambda, n), 1), n)]
        max_aggr = counts[0]
    else:
        max_aggr = max_aggregators(s, h, v)
        top = max_aggr
        if cfg.cover_strong_class:
            top = max(top, min(strong_class_size(s), n - 1))
        lam_max = top / n
        counts = []
        step = 1
        while True:
            lam = step * cfg.lambda_step
            if lam > lam_max + _FLOOR_EPS:
                break
            k = ceil_count(lam, n)
            if not counts or counts[-1] != k:
                counts.append(k)
            step += 1
    if cfg.max_aggregators_cap is not None:
        counts = sorted({min(k, cfg.max_aggregators_cap) for k in counts})
    return max_aggr, counts


def feasible_cut_layers(s: Scenario, candidates: Iterable[int]) -> List[int]:
    L = s.model.num_layers
    candidates = [int(v) for v in candidates]
    feasible = sorted({v for v in candidates if 2 < v < L})
    skipped = sorted(set(candidates) - set(feasible))
    if skipped:
        logger.warning("Skipping cut layers %s: need 2 < v < L=%d", skipped, L)
    return feasible


def plan(s: Scenario, candidates: Collection[int], cfg: Optional[PlannerConfig] = None) -> PlanDecision:
    """Run the heuristic over every candidate cut layer; return the best configuration seen."""
    cfg = cfg or PlannerConfig()
    if not candidates:
        raise InfeasiblePlanError("candidate cut-layer set is empty")
    if s.num_clients < 2:
        raise PlanError("client_count", f"planning needs N >= 2 clients, got {s.num_clients}")
    cut_layers = feasible_cut_layers(s, candidates)
    if not cut_layers:
        raise InfeasiblePlanError(
            f"no feasible (h, v): candidates {sorted(candidates)} leave no v with 2 < v < L={s.model.num_layers}"
        )

    order = strength_order(s)
    ids = s.client_ids
    n = s.num_clients
    max_iter = cfg.h_iterations(s.model.num_layers)
    best: Optional[Tuple[Tuple[float, int, int, int], np.ndarray, int, int]] = None
    evaluated = 0
    iterations = 0
    trajectory: List[HStep] = []

    for v in cut_layers:
        h = 2
        visited = set()
        for _ in range(max_iter):
            visited.add(h)
            iterations += 1
            split = LayerSplit(s, h, v)
            max_aggr, counts = _aggregator_counts(s, h, v, cfg)

            best_here: Optional[Tuple[Tuple[float, int, int, int], np.ndarray]] = None
            for k in counts:
                a = _greedy_vector(split, order[:k], order, ids)
                t_round = float(split.round_times(a[None, :])[0])
                evaluated += 1
                key = tie_key(t_round, v, h, k)
                logger.debug("v=%d h=%d K=%d t_round=%.6f", v, h, k, t_round)
                if best_here is None or key < best_here[0]:
                    best_here = (key, a)
            assert best_here is not None
            if best is None or best_here[0] < best[0]:
                best = (best_here[0], best_here[1], h, v)

            t_aggr = split.aggregator_fp_time(best_here[1])
            t_clients = split.client_fp_time()
            trajectory.append(HStep(v=v, h=h, max_aggr=max_aggr, best_k=best_here[0][3],
                                    best_t_round=best_here[0][0], t_aggr=t_aggr, t_clients=t_clients))

            if t_aggr > t_clients:
                next_h = int(math.ceil((h + (v - 1)) / 2))
            else:
                next_h = int(math.ceil(h / 2))
            next_h = min(max(next_h, 2), v - 1)
            if t_aggr - t_clients <= cfg.delta or next_h in visited:
                break
            h = next_h

    assert best is not None
    key, a, h_best, v_best = best
    chosen = plan_from_vector(s, h_best, v_best, a)
    breakdown = round_delay(s, chosen)
    decision = PlanDecision(
        plan=chosen,
        breakdown=breakdown,
        lam=chosen.fraction(n),
        iterations=iterations,
        evaluated_configs=evaluated,
        trajectory=tuple(trajectory),
    )
    logger.info(
        "Planned h=%d v=%d lambda=%.2f t_round=%.3f s (%d configurations)",
        chosen.h, chosen.v, decision.lam, breakdown.t_round, evaluated,
    )
    return decision


def replan(
    s: Scenario,
    changes: Sequence[SystemChange],
    candidates: Collection[int],
    cfg: Optional[PlannerConfig] = None,
    incumbent: Optional[Plan] = None,
) -> PlanDecision:
    """
    Apply ``changes`` and plan again on the changed scenario.

    When the currently deployed ``incumbent`` plan is given and still valid, it
    is kept if it beats the fresh plan on the changed scenario.
    """
    changed = apply_changes(s, changes)
    decision = plan(changed, candidates, cfg)
    if incumbent is None:
        return decision
    try:
        validate_plan(changed, incumbent, candidates)
    except PlanError as e:
        logger.info("Incumbent plan no longer valid: %s", e)
        return decision
    kept = round_delay(changed, incumbent)
    fresh_key = tie_key(decision.breakdown.t_round, decision.plan.v, decision.plan.h, len(decision.plan.aggregators))
    kept_key = tie_key(kept.t_round, incumbent.v, incumbent.h, len(incumbent.aggregators))
    if kept_key < fresh_key:
        logger.info("Keeping incumbent plan (t_round %.3f < %.3f)", kept.t_round, decision.breakdown.t_round)
        return replace(decision, plan=incumbent, breakdown=kept, lam=incumbent.fraction(changed.num_clients))
    return decision
