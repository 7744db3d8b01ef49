#!/usr/bin/env python3
"""
Parameter sweeps and seeded batch studies.

Every study returns a pandas DataFrame with a fixed column order, one row per
sweep point or instance, in input order. Batch studies can fan out over a
process pool; ``Pool.map`` keeps results in submission order.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import replace
from multiprocessing import Pool
from typing import Any, Callable, Collection, Dict, Iterable, List, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd
from scipy import stats

from scripts.delay_model import breakdown_row, round_delay
from scripts.model_profile import ModelProfile
from scripts.oracle import OracleBudget, compare
from scripts.planner import PlannerConfig, max_aggregators, plan, replan
from scripts.scenario import GeneratorSettings, Scenario, SystemChange, apply_changes, heterogeneity

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

DECISION_COLUMNS = ["h", "v", "lambda", "t1", "t_fp", "t_s", "t_bp", "t2", "t3", "t_round", "overhead_bytes"]
LAMBDA_SWEEP_COLUMNS = ["lambda_requested", "aggregators"] + DECISION_COLUMNS
GAMMA_SWEEP_COLUMNS = ["gamma", "max_aggr_h2", "aggregators"] + DECISION_COLUMNS
N_SWEEP_COLUMNS = ["n_clients", "evaluated_configs", "iterations", "planner_ms", "t_round"]
COMPARE_COLUMNS = ["seed", "N", "oracle_t", "heuristic_t", "suboptimality_pct", "oracle_ms", "heuristic_ms", "speedup"]
REPLAN_COLUMNS = ["change", "baseline_t", "fixed_t", "replanned_t", "fixed_delta_pct", "replanned_delta_pct"]
REPLAN_BATCH_COLUMNS = ["seed"] + REPLAN_COLUMNS + ["improved"]


def parallel_map(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> List[R]:
    """Map ``fn`` over ``items``; results follow input order whatever ``jobs`` is."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with Pool(min(jobs, len(items))) as pool:
        return pool.map(fn, items)


def _decision_row(s: Scenario, candidates: Collection[int], cfg: PlannerConfig) -> Dict[str, Any]:
    decision = plan(s, candidates, cfg)
    row = breakdown_row(decision.plan, decision.lam, decision.breakdown)
    row["aggregators"] = len(decision.plan.aggregators)
    return row


def _lambda_point(task: Dict[str, Any]) -> Dict[str, Any]:
    lam = task["lambda"]
    row = _decision_row(task["scenario"], task["candidates"], replace(task["cfg"], fixed_lambda=lam))
    row["lambda_requested"] = lam
    return row


def sweep_lambda(
    s: Scenario,
    candidates: Collection[int],
    lambdas: Iterable[float],
    cfg: Optional[PlannerConfig] = None,
    jobs: int = 1,
) -> pd.DataFrame:
    """Plan with the aggregator fraction pinned to each value (maxAggr is bypassed)."""
    tasks = [
        {"scenario": s, "candidates": sorted(candidates), "lambda": float(lam), "cfg": cfg or PlannerConfig()}
        for lam in lambdas
    ]
    return pd.DataFrame(parallel_map(_lambda_point, tasks, jobs), columns=LAMBDA_SWEEP_COLUMNS)


def _gamma_point(task: Dict[str, Any]) -> Dict[str, Any]:
    settings: GeneratorSettings = task["settings"]
    model: ModelProfile = task["model"]
    candidates = task["candidates"]
    s = replace(settings, strong_p=settings.weak_p * task["gamma"]).generate(model, task["seed"])
    row = _decision_row(s, candidates, task["cfg"])
    row["gamma"] = heterogeneity(s)
    v0 = min(v for v in candidates if 2 < v < model.num_layers)
    row["max_aggr_h2"] = max_aggregators(s, 2, v0)
    return row


def sweep_gamma(
    settings: GeneratorSettings,
    model: ModelProfile,
    candidates: Collection[int],
    gammas: Iterable[float],
    seed: int = 0,
    cfg: Optional[PlannerConfig] = None,
    jobs: int = 1,
) -> pd.DataFrame:
    """
    Vary heterogeneity by scaling the strong throughput to gamma times the weak
    one; links and strong-client choice stay fixed by the seed.
    """
    tasks = [
        {"settings": settings, "model": model, "candidates": sorted(candidates), "gamma": float(gamma),
         "seed": seed, "cfg": cfg or PlannerConfig()}
        for gamma in gammas
    ]
    return pd.DataFrame(parallel_map(_gamma_point, tasks, jobs), columns=GAMMA_SWEEP_COLUMNS)


def _size_point(task: Dict[str, Any]) -> Dict[str, Any]:
    n = task["n_clients"]
    s = replace(task["settings"], n_clients=n).generate(task["model"], task["seed"])
    start = time.perf_counter()
    decision = plan(s, task["candidates"], task["cfg"])
    elapsed = time.perf_counter() - start
    return {
        "n_clients": n,
        "evaluated_configs": decision.evaluated_configs,
        "iterations": decision.iterations,
        "planner_ms": elapsed * 1e3,
        "t_round": decision.breakdown.t_round,
    }


def sweep_n_clients(
    settings: GeneratorSettings,
    model: ModelProfile,
    candidates: Collection[int],
    sizes: Iterable[int],
    seed: int = 0,
    cfg: Optional[PlannerConfig] = None,
    jobs: int = 1,
) -> pd.DataFrame:
    """Planner work and wall time as the client count grows."""
    tasks = [
        {"settings": settings, "model": model, "candidates": sorted(candidates), "n_clients": int(n),
         "seed": seed, "cfg": cfg or PlannerConfig()}
        for n in sizes
    ]
    return pd.DataFrame(parallel_map(_size_point, tasks, jobs), columns=N_SWEEP_COLUMNS)


def _compare_one(task: Dict[str, Any]) -> Dict[str, Any]:
    s = task["settings"].generate(task["model"], task["seed"])
    record = compare(s, task["candidates"], task["cfg"], task["budget"]).to_record()
    record["seed"] = task["seed"]
    return record


def compare_batch(
    settings: GeneratorSettings,
    model: ModelProfile,
    candidates: Collection[int],
    seeds: Iterable[int],
    cfg: Optional[PlannerConfig] = None,
    budget: Optional[OracleBudget] = None,
    jobs: int = 1,
) -> pd.DataFrame:
    """Planner vs oracle on one generated instance per seed."""
    tasks = [
        {"settings": settings, "model": model, "candidates": sorted(candidates), "seed": int(seed),
         "cfg": cfg or PlannerConfig(), "budget": budget or OracleBudget()}
        for seed in seeds
    ]
    rows = parallel_map(_compare_one, tasks, jobs)
    return pd.DataFrame(rows, columns=COMPARE_COLUMNS)


def _delta_pct(value: float, baseline: float) -> float:
    return (value - baseline) / baseline * 100.0


def _replan_row(
    s: Scenario,
    label: str,
    changes: Sequence[SystemChange],
    candidates: Collection[int],
    cfg: PlannerConfig,
) -> Dict[str, Any]:
    baseline = plan(s, candidates, cfg)
    changed = apply_changes(s, changes)
    fixed_t = round_delay(changed, baseline.plan).t_round
    replanned_t = replan(s, changes, candidates, cfg, incumbent=baseline.plan).breakdown.t_round
    base_t = baseline.breakdown.t_round
    return {
        "change": label,
        "baseline_t": base_t,
        "fixed_t": fixed_t,
        "replanned_t": replanned_t,
        "fixed_delta_pct": _delta_pct(fixed_t, base_t),
        "replanned_delta_pct": _delta_pct(replanned_t, base_t),
    }


def _combined_label(changes: Sequence[SystemChange]) -> str:
    return " + ".join(c.label for c in changes) if changes else "none"


def replan_study(
    s: Scenario,
    changes: Sequence[SystemChange],
    candidates: Collection[int],
    cfg: Optional[PlannerConfig] = None,
) -> pd.DataFrame:
    """
    Fixed plan vs replanned plan after system changes, relative to the
    unchanged baseline.

    One row per change applied on its own, then a row for the whole list
    applied in order (only the latter when the list holds one change or none).
    """
    cfg = cfg or PlannerConfig()
    rows = []
    if len(changes) > 1:
        rows.extend(_replan_row(s, c.label, [c], candidates, cfg) for c in changes)
    rows.append(_replan_row(s, _combined_label(changes), changes, candidates, cfg))
    return pd.DataFrame(rows, columns=REPLAN_COLUMNS)


def _replan_one(task: Dict[str, Any]) -> Dict[str, Any]:
    s = task["settings"].generate(task["model"], task["seed"])
    changes = task["changes"]
    row = _replan_row(s, _combined_label(changes), changes, task["candidates"], task["cfg"])
    row["seed"] = task["seed"]
    row["improved"] = row["replanned_t"] < row["fixed_t"]
    return row


def replan_batch(
    settings: GeneratorSettings,
    model: ModelProfile,
    candidates: Collection[int],
    changes: Sequence[SystemChange],
    seeds: Iterable[int],
    cfg: Optional[PlannerConfig] = None,
    jobs: int = 1,
) -> pd.DataFrame:
    tasks = [
        {"settings": settings, "model": model, "candidates": sorted(candidates), "changes": list(changes),
         "seed": int(seed), "cfg": cfg or PlannerConfig()}
        for seed in seeds
    ]
    return pd.DataFrame(parallel_map(_replan_one, tasks, jobs), columns=REPLAN_BATCH_COLUMNS)


def trend(frame: pd.DataFrame, x: str, y: str) -> Dict[str, float]:
    """Spearman rank correlation of ``y`` against ``x``."""
    if len(frame) < 2 or frame[x].nunique() < 2 or frame[y].nunique() < 2:
        return {"rho": math.nan, "p_value": math.nan, "n": float(len(frame))}
    rho, p_value = stats.spearmanr(frame[x], frame[y])
    return {"rho": float(rho), "p_value": float(p_value), "n": float(len(frame))}


def summarize_column(values: Iterable[float]) -> Dict[str, float]:
    """Batch statistics (count, min, max, mean, median, variance) of a numeric column."""
    data = np.asarray(list(values), dtype=float)
    if data.size == 0:
        return {"count": 0.0}
    d = stats.describe(data)
    return {
        "count": float(d.nobs),
        "min": float(d.minmax[0]),
        "max": float(d.minmax[1]),
        "mean": float(d.mean),
        "median": float(np.median(data)),
        "variance": float(d.variance) if d.nobs > 1 else 0.0,
    }
