#!/usr/bin/env python3
"""
Exhaustive search for small instances and planner-vs-optimum comparison.

The oracle walks every candidate cut layer v, every aggregator layer h in
(1, v), every aggregator subset up to the size cap and every total assignment
of the remaining clients. All assignments of one subset are evaluated as a
single numpy batch through ``LayerSplit.round_times``, the same code path the
planner uses, so both searches agree to the last bit on shared configurations.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, replace
from typing import Any, Collection, Dict, Iterator, Optional, Tuple

import numpy as np

from scripts.delay_model import DelayBreakdown, LayerSplit, Plan, round_delay
from scripts.errors import BudgetExceededError, InfeasiblePlanError, PlanError, PlanningError
from scripts.planner import PlannerConfig, feasible_cut_layers, natural_key, plan_from_vector, plan, tie_key
from scripts.scenario import Scenario

logger = logging.getLogger(__name__)

DEFAULT_MAX_CLIENTS = 8
DEFAULT_MAX_AGGREGATOR_SET_SIZE = 3
DEFAULT_MAX_CONFIGURATIONS = 5_000_000


@dataclass(frozen=True)
class OracleBudget:
    max_clients: int = DEFAULT_MAX_CLIENTS
    max_aggregator_set_size: int = DEFAULT_MAX_AGGREGATOR_SET_SIZE
    max_configurations: int = DEFAULT_MAX_CONFIGURATIONS

    def __post_init__(self) -> None:
        for name in ("max_clients", "max_aggregator_set_size", "max_configurations"):
            if getattr(self, name) < 1:
                raise PlanningError(f"OracleBudget.{name} must be >= 1, got {getattr(self, name)}")

    def aggregator_limit(self, n_clients: int) -> int:
        """Largest subset size searched: the cap, leaving at least one plain client."""
        return max(1, min(self.max_aggregator_set_size, n_clients - 1))

    def to_record(self) -> Dict[str, int]:
        return asdict(self)


@dataclass(frozen=True)
class OracleResult:
    plan: Plan
    breakdown: DelayBreakdown
    configurations: int

    def __iter__(self) -> Iterator[Any]:
        return iter((self.plan, self.breakdown))


@dataclass(frozen=True)
class ComparisonReport:
    n_clients: int
    oracle_t: float
    heuristic_t: float
    suboptimality_pct: float
    oracle_ms: float
    heuristic_ms: float
    speedup: float
    configurations: int
    oracle_plan: Plan
    heuristic_plan: Plan

    def to_record(self) -> Dict[str, Any]:
        return {
            "N": self.n_clients,
            "oracle_t": self.oracle_t,
            "heuristic_t": self.heuristic_t,
            "suboptimality_pct": self.suboptimality_pct,
            "oracle_ms": self.oracle_ms,
            "heuristic_ms": self.heuristic_ms,
            "speedup": self.speedup,
            "configurations": self.configurations,
        }


def estimate_configurations(s: Scenario, candidates: Collection[int], b: OracleBudget) -> int:
    """
    Size of the search space: sum over (v, h) pairs and subset sizes K of
    C(N, K) * K^(N-K).
    """
    n = s.num_clients
    per_pair = sum(math.comb(n, k) * k ** (n - k) for k in range(1, b.aggregator_limit(n) + 1))
    pairs = sum(v - 2 for v in {int(v) for v in candidates if 2 < int(v) < s.model.num_layers})
    return pairs * per_pair


def _check_budget(s: Scenario, candidates: Collection[int], b: OracleBudget) -> int:
    estimate = estimate_configurations(s, candidates, b)
    if s.num_clients > b.max_clients:
        raise BudgetExceededError(estimate, b.max_configurations,
                                  f"N={s.num_clients} exceeds max_clients={b.max_clients}")
    if estimate > b.max_configurations:
        raise BudgetExceededError(estimate, b.max_configurations)
    return estimate


def _subset_assignments(n: int, subset: Tuple[int, ...]) -> np.ndarray:
    """Every total assignment with aggregator set ``subset`` as rows of aggregator indices."""
    others = [i for i in range(n) if i not in subset]
    choices = np.array(list(itertools.product(subset, repeat=len(others))), dtype=np.int64)
    A = np.empty((max(len(choices), 1), n), dtype=np.int64)
    A[:, list(subset)] = np.array(subset, dtype=np.int64)
    if others:
        A[:, others] = choices
    return A


def exhaustive_best(s: Scenario, candidates: Collection[int], b: Optional[OracleBudget] = None) -> OracleResult:
    """Global minimum round delay over the bounded configuration space."""
    b = b or OracleBudget()
    if not candidates:
        raise InfeasiblePlanError("candidate cut-layer set is empty")
    if s.num_clients < 2:
        raise PlanError("client_count", f"exhaustive search needs N >= 2 clients, got {s.num_clients}")
    cut_layers = feasible_cut_layers(s, candidates)
    if not cut_layers:
        raise InfeasiblePlanError(
            f"no feasible (h, v): candidates {sorted(candidates)} leave no v with 2 < v < L={s.model.num_layers}"
        )
    estimate = _check_budget(s, cut_layers, b)
    logger.info("Oracle search over %d configurations (N=%d, K<=%d)",
                estimate, s.num_clients, b.aggregator_limit(s.num_clients))

    n = s.num_clients
    ids = s.client_ids
    natural = sorted(range(n), key=lambda i: natural_key(ids[i]))
    best: Optional[Tuple[Tuple[float, int, int, int], np.ndarray, int, int]] = None
    evaluated = 0
    for v in cut_layers:
        for h in range(2, v):
            split = LayerSplit(s, h, v)
            for k in range(1, b.aggregator_limit(n) + 1):
                for subset in itertools.combinations(natural, k):
                    A = _subset_assignments(n, subset)
                    times = split.round_times(A)
                    evaluated += len(A)
                    i = int(np.argmin(times))
                    key = tie_key(float(times[i]), v, h, k)
                    if best is None or key < best[0]:
                        best = (key, A[i].copy(), h, v)

    assert best is not None
    _, a, h_best, v_best = best
    chosen = plan_from_vector(s, h_best, v_best, a)
    breakdown = round_delay(s, chosen)
    logger.info("Oracle optimum h=%d v=%d K=%d t_round=%.3f s", h_best, v_best, len(chosen.aggregators), breakdown.t_round)
    return OracleResult(plan=chosen, breakdown=breakdown, configurations=evaluated)


def compare(
    s: Scenario,
    candidates: Collection[int],
    cfg: Optional[PlannerConfig] = None,
    b: Optional[OracleBudget] = None,
) -> ComparisonReport:
    """
    Run planner and oracle on the same instance.

    The planner's aggregator count is capped at the oracle's subset limit so
    both searches cover the same space; wall times come from single-threaded
    runs in this process.
    """
    b = b or OracleBudget()
    cfg = cfg or PlannerConfig()
    limit = b.aggregator_limit(s.num_clients)
    if cfg.max_aggregators_cap is not None:
        limit = min(limit, cfg.max_aggregators_cap)
    cfg = replace(cfg, max_aggregators_cap=limit)

    _check_budget(s, feasible_cut_layers(s, candidates), b)

    start = time.perf_counter()
    decision = plan(s, candidates, cfg)
    heuristic_s = time.perf_counter() - start

    start = time.perf_counter()
    optimum = exhaustive_best(s, candidates, b)
    oracle_s = time.perf_counter() - start

    oracle_t = optimum.breakdown.t_round
    heuristic_t = decision.breakdown.t_round
    report = ComparisonReport(
        n_clients=s.num_clients,
        oracle_t=oracle_t,
        heuristic_t=heuristic_t,
        suboptimality_pct=(heuristic_t - oracle_t) / oracle_t * 100.0,
        oracle_ms=oracle_s * 1e3,
        heuristic_ms=heuristic_s * 1e3,
        speedup=oracle_s / heuristic_s if heuristic_s > 0 else math.inf,
        configurations=optimum.configurations,
        oracle_plan=optimum.plan,
        heuristic_plan=decision.plan,
    )
    logger.info("Suboptimality %.2f%%, speedup %.1fx", report.suboptimality_pct, report.speedup)
    return report
