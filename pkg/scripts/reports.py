#!/usr/bin/env python3
"""
Report emission: JSON decision records, CSV tables and Markdown summaries.

Reports carry no timestamps, so identical inputs, seed and configuration give
byte-identical plan reports. Timing columns of comparison tables are the only
run-dependent values.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import pandas as pd

from scripts.baselines import BaselineDelay, delay_reduction_pct
from scripts.delay_model import BREAKDOWN_COLUMNS, breakdown_row
from scripts.oracle import ComparisonReport
from scripts.planner import PlanDecision
from scripts.scenario import Scenario, heterogeneity

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
CSV_COLUMNS = ["h", "v", "lambda"] + BREAKDOWN_COLUMNS


def canonical_json(document: Any) -> str:
    return json.dumps(document, sort_keys=True, separators=(",", ":"))


def scenario_digest(s: Scenario) -> str:
    """sha256 over the canonical JSON of the scenario and its model profile."""
    document = s.to_document()
    document["model"] = s.model.to_document()
    return "sha256:" + hashlib.sha256(canonical_json(document).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunReport:
    scenario_digest: str
    config: Dict[str, Any]
    decision: PlanDecision
    baselines: List[BaselineDelay] = field(default_factory=list)
    comparison: Optional[ComparisonReport] = None
    trace_path: Optional[str] = None

    def to_document(self) -> Dict[str, Any]:
        document: Dict[str, Any] = {
            "scenario_digest": self.scenario_digest,
            "config": self.config,
            "decision": self.decision.to_record(),
            "delay_breakdown": self.decision.breakdown.to_record(),
            "overhead_bytes": self.decision.breakdown.overhead_bytes,
        }
        if self.baselines:
            document["baselines"] = [
                dict(b.to_record(), reduction_pct=delay_reduction_pct(self.decision.breakdown.t_round, b))
                for b in self.baselines
            ]
        if self.comparison is not None:
            document["oracle_comparison"] = self.comparison.to_record()
        if self.trace_path is not None:
            document["trace_path"] = self.trace_path
        return document

    def csv_row(self) -> Dict[str, Any]:
        return breakdown_row(self.decision.plan, self.decision.lam, self.decision.breakdown)


def build_run_report(
    s: Scenario,
    decision: PlanDecision,
    config: Mapping[str, Any],
    baselines: Optional[List[BaselineDelay]] = None,
    comparison: Optional[ComparisonReport] = None,
    trace_path: Optional[PathLike] = None,
) -> RunReport:
    return RunReport(
        scenario_digest=scenario_digest(s),
        config=dict(config),
        decision=decision,
        baselines=list(baselines or []),
        comparison=comparison,
        trace_path=None if trace_path is None else str(trace_path),
    )


def write_json(document: Any, path: PathLike) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)
        f.write("\n")
    return out


def write_table(frame: pd.DataFrame, path: PathLike, fmt: str = "csv") -> Path:
    """Write a result table as CSV or as a JSON list of row records."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        return write_json(frame.to_dict(orient="records"), out)
    frame.to_csv(out, index=False)
    return out


def write_run_report(report: RunReport, out_dir: PathLike, stem: str = "plan", fmt: str = "json") -> List[Path]:
    """JSON report plus the one-row CSV (``fmt`` picks which one comes first)."""
    out = Path(out_dir)
    json_path = write_json(report.to_document(), out / f"{stem}.json")
    csv_path = write_table(pd.DataFrame([report.csv_row()], columns=CSV_COLUMNS), out / f"{stem}.csv")
    return [json_path, csv_path] if fmt == "json" else [csv_path, json_path]


# ---------- Markdown summaries ----------

def save_markdown(text: str, path: PathLike) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        f.write(text)
    logger.info("Report saved as %s", out)
    return out


def plan_markdown(s: Scenario, report: RunReport) -> str:
    d = report.decision
    b = d.breakdown
    text = f"""
# HSFL Planning Decision ({s.model.name}, N={s.num_clients})

## Executive Summary
The planner evaluated {d.evaluated_configs} configurations over {d.iterations} aggregator-layer steps and selected aggregator layer h={d.plan.h} and cut layer v={d.plan.v} with {len(d.plan.aggregators)} local aggregators (lambda={d.lam:.2f}).

## Key Metrics
- **Round delay**: {b.t_round:.3f} s
- **Model download (T1)**: {b.t1:.3f} s
- **Batch execution (T2)**: {b.t2:.3f} s (FP {b.t_fp:.3f} s, BP {b.t_bp:.3f} s, server {b.t_s:.3f} s)
- **Communication overhead**: {b.overhead_bytes:,.0f} bytes per round
- **Heterogeneity (gamma)**: {heterogeneity(s):.2f}
- **Scenario digest**: `{report.scenario_digest}`

## Aggregators
"""
    for k in d.plan.aggregators:
        members = [n for n in d.plan.members(k) if n != k]
        text += f"- **{k}**: {', '.join(members) if members else 'no assigned clients'}\n"

    if report.baselines:
        text += "\n## Comparison Schemes\n"
        for baseline in report.baselines:
            text += (f"- **{baseline.scheme}** (v={baseline.v}): {baseline.t_round:.3f} s per round, "
                     f"HSFL reduction {delay_reduction_pct(b.t_round, baseline):.1f}%\n")

    if report.comparison is not None:
        c = report.comparison
        text += f"""
## Exhaustive Search Check
- **Optimal round delay**: {c.oracle_t:.3f} s
- **Suboptimality**: {c.suboptimality_pct:.2f}%
- **Speedup**: {c.speedup:.1f}x over {c.configurations} enumerated configurations
"""

    text += "\n## Configuration\n"
    for key, value in report.config.items():
        text += f"- {key}: {value}\n"
    return text


def sweep_markdown(frame: pd.DataFrame, dimension: str, trends: Mapping[str, Mapping[str, float]]) -> str:
    text = f"""
# {dimension.replace('_', ' ').title()} Sweep

## Executive Summary
{len(frame)} sweep points evaluated.

## Trends (Spearman rank correlation):
"""
    if not trends:
        text += "- Not enough points for a trend\n"
    for column, t in trends.items():
        text += f"- **{column}**: rho={t['rho']:.3f} (p={t['p_value']:.3g}, n={int(t['n'])})\n"
    if not frame.empty:
        text += "\n## Sweep Points\n"
        text += "```\n" + frame.to_string(index=False) + "\n```\n"
    return text


def compare_markdown(summary: Mapping[str, float], speedup: Mapping[str, float]) -> str:
    text = f"""
# Planner vs Exhaustive Search

## Executive Summary
{int(summary.get('count', 0))} seeded instances compared against the bounded exhaustive optimum.

## Suboptimality (%):
"""
    for key in ("min", "median", "mean", "max"):
        if key in summary:
            text += f"- **{key}**: {summary[key]:.2f}%\n"
    text += "\n## Speedup:\n"
    for key in ("min", "median", "max"):
        if key in speedup:
            text += f"- **{key}**: {speedup[key]:.1f}x\n"
    return text


def replan_markdown(frame: pd.DataFrame) -> str:
    text = """
# Replanning Under System Changes

## Delay Change Relative to the Unchanged Baseline:
"""
    for _, row in frame.iterrows():
        text += (f"- **{row['change']}**: fixed plan {row['fixed_delta_pct']:+.1f}%, "
                 f"replanned {row['replanned_delta_pct']:+.1f}%\n")
    if "improved" in frame.columns and len(frame):
        text += f"\n- **Instances where replanning helped**: {int(frame['improved'].sum())} of {len(frame)}\n"
    return text

