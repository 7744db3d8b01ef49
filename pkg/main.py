#!/usr/bin/env python3
"""
HSFL Planner - Main Entrypoint

This script drives the hierarchical split federated learning planning toolkit:
1. Loads a scenario, model profile and accuracy profile (or explicit cut layers)
2. Plans aggregator layer, cut layer and client-to-aggregator assignment
3. Writes JSON/CSV reports and Markdown summaries to outputs/

Usage:
    python main.py <command> [options]

Commands:
    plan       Plan one scenario and write the decision report
    sweep      Sweep lambda, gamma or the client count
    compare    Compare the planner with the exhaustive search
    replan     Fixed vs replanned delay after system changes
    simulate   Simulate one round and export the task trace
    validate   Cross-check documents, plan constraints and simulation agreement
    profiles   Export the bundled reference model profiles

Exit codes: 0 success, 1 input or validation error, 2 infeasible plan,
3 oracle budget exceeded.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence, TypeVar

import pandas as pd

from scripts.baselines import baseline_delays, baseline_frame
from scripts.constraints import check_assignment_tensor, expand_assignment
from scripts.cut_selector import (
    DEFAULT_THRESHOLD,
    candidate_cut_layers,
    check_layer_range,
    load_accuracy_profile,
)
from scripts.delay_model import Plan, load_plan, round_delay, validate_plan
from scripts.errors import BudgetExceededError, InfeasiblePlanError, PlanningError
from scripts.experiments import (
    COMPARE_COLUMNS,
    compare_batch,
    replan_batch,
    replan_study,
    summarize_column,
    sweep_gamma,
    sweep_lambda,
    sweep_n_clients,
    trend,
)
from scripts.model_profile import ModelProfile
from scripts.oracle import (
    DEFAULT_MAX_AGGREGATOR_SET_SIZE,
    DEFAULT_MAX_CLIENTS,
    DEFAULT_MAX_CONFIGURATIONS,
    OracleBudget,
    compare,
)
from scripts.pipeline_sim import check_agreement, export_trace, simulate_round
from scripts.planner import DEFAULT_DELTA, DEFAULT_LAMBDA_STEP, PlannerConfig, plan
from scripts.reference_models import DEFAULT_BATCH_SIZE, export_reference_profiles, resolve_profile
from scripts.reports import (
    build_run_report,
    compare_markdown,
    plan_markdown,
    replan_markdown,
    save_markdown,
    sweep_markdown,
    write_run_report,
    write_table,
)
from scripts.scenario import (
    GeneratorSettings,
    Scenario,
    load_changes,
    load_generator_settings,
    load_scenario,
    parse_rate,
)

logger = logging.getLogger("hsfl")

T = TypeVar("T")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_BUDGET = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; parse errors map to 1 here."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        print(f"❌ Error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)


def run_step(description: str, fn: Callable[[], T]) -> T:
    """Run one pipeline step between banners; failures are reported and re-raised."""
    print(f"\n{'='*60}")
    print(f"Running: {description}")
    print(f"{'='*60}")
    try:
        result = fn()
    except PlanningError as e:
        print(f"❌ {description} failed: {e}")
        raise
    print(f"✅ {description} completed successfully!")
    return result


def create_directories(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    print(f"📁 Directory '{out_dir}' ready")


# ---------- Input resolution ----------

def _model(args: argparse.Namespace) -> Optional[ModelProfile]:
    if getattr(args, "profile", None):
        return resolve_profile(args.profile, args.batch_size)
    return None


def _scenario(args: argparse.Namespace) -> Scenario:
    if not args.scenario:
        raise PlanningError("--scenario is required for this command")
    s = load_scenario(args.scenario, model=_model(args), seed=args.seed)
    logger.info("Scenario: N=%d clients, model %s (L=%d)", s.num_clients, s.model.name, s.model.num_layers)
    return s


def _parse_list(raw: str, kind: Callable[[str], T]) -> List[T]:
    try:
        return [kind(item) for item in raw.split(",") if item.strip()]
    except ValueError as e:
        raise PlanningError(f"cannot parse list '{raw}': {e}") from e


def _candidates(args: argparse.Namespace, model: ModelProfile) -> List[int]:
    """Cut-layer candidates from --candidates, else from the accuracy profile."""
    if args.candidates:
        candidates = _parse_list(args.candidates, int)
        if candidates and not any(2 < v < model.num_layers for v in candidates):
            raise InfeasiblePlanError(
                f"[cut_layer_range] candidates {candidates} leave no v with 2 < v < L={model.num_layers}"
            )
        return candidates
    if args.accuracy:
        accuracy = load_accuracy_profile(args.accuracy)
        check_layer_range(accuracy, model.num_layers)
        return candidate_cut_layers(accuracy, args.thr)
    raise PlanningError("neither --accuracy nor --candidates given: no candidate cut layers")


def _planner_config(args: argparse.Namespace) -> PlannerConfig:
    return PlannerConfig(delta=args.delta, lambda_step=args.lambda_step, max_h_iterations=args.max_h_iterations)


def _budget(args: argparse.Namespace) -> OracleBudget:
    return OracleBudget(
        max_clients=args.oracle_max_clients,
        max_aggregator_set_size=args.oracle_max_aggregators,
        max_configurations=args.oracle_max_configurations,
    )


def _generator(args: argparse.Namespace) -> GeneratorSettings:
    """Generator block of the scenario document (if any) overridden by flags."""
    settings = GeneratorSettings()
    if args.scenario:
        settings = load_generator_settings(args.scenario) or settings
    overrides: Dict[str, Any] = {}
    for flag, key in [("n_clients", "n_clients"), ("strong_fraction", "strong_fraction"),
                      ("strong_p", "strong_p"), ("weak_p", "weak_p"), ("server_p", "server_p"),
                      ("epochs", "epochs_per_round"), ("dataset_size", "dataset_size")]:
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    for flag in ("rate_lo", "rate_hi"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = parse_rate(value)
    return replace(settings, **overrides)


def _generator_model(args: argparse.Namespace) -> ModelProfile:
    model = _model(args)
    if model is not None:
        return model
    if args.scenario:
        return load_scenario(args.scenario, seed=args.seed).model
    raise PlanningError("generated scenarios need --profile or a --scenario document naming a model")


def _config_record(args: argparse.Namespace, candidates: Sequence[int], **extra: Any) -> Dict[str, Any]:
    record: Dict[str, Any] = {
        "delta": args.delta,
        "lambda_step": args.lambda_step,
        "max_h_iterations": args.max_h_iterations,
        "thr": args.thr,
        "candidates": list(candidates),
        "seed": args.seed,
    }
    record.update(extra)
    return record


def _seeds(args: argparse.Namespace) -> List[int]:
    return list(range(args.seed, args.seed + args.batch))


def _print_files(files: Sequence[Path]) -> None:
    print("\n📁 Generated Files:")
    for path in files:
        print(f"   📄 {path}")


# ---------- Commands ----------

def cmd_plan(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    create_directories(out_dir)
    s = run_step("Loading scenario", lambda: _scenario(args))
    candidates = run_step("Selecting candidate cut layers", lambda: _candidates(args, s.model))
    print(f"   Candidate cut layers: {candidates}")
    decision = run_step("Planning layers and assignment", lambda: plan(s, candidates, _planner_config(args)))

    baselines = baseline_delays(s, decision.plan.v)
    comparison = None
    if args.with_oracle:
        comparison = run_step("Exhaustive search check",
                              lambda: compare(s, candidates, _planner_config(args), _budget(args)))
    report = build_run_report(s, decision, _config_record(args, candidates), baselines, comparison)

    files = write_run_report(report, out_dir, stem=args.stem, fmt=args.format)
    files.append(write_table(baseline_frame(s, decision.plan.v), out_dir / f"{args.stem}_baselines.{args.format}",
                             args.format))
    files.append(save_markdown(plan_markdown(s, report), out_dir / f"{args.stem}_report.md"))

    b = decision.breakdown
    print("\n" + "="*60)
    print("📋 PLANNING SUMMARY")
    print("="*60)
    print(f"🧩 Layers: h={decision.plan.h}, v={decision.plan.v}")
    print(f"🤝 Aggregators: {', '.join(decision.plan.aggregators)} (lambda={decision.lam:.2f})")
    print(f"⏱️  Round delay: {b.t_round:.3f} s (T1 {b.t1:.3f}, T2 {b.t2:.3f}, T3 {b.t3:.3f})")
    print(f"📦 Overhead: {b.overhead_bytes:,.0f} bytes per round")
    _print_files(files)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    create_directories(out_dir)
    cfg = _planner_config(args)

    if args.dimension == "lambda":
        s = run_step("Loading scenario", lambda: _scenario(args))
        candidates = _candidates(args, s.model)
        values = _parse_list(args.values, float)
        frame = run_step("Sweeping lambda", lambda: sweep_lambda(s, candidates, values, cfg, args.jobs))
        trends = {"overhead_bytes": trend(frame, "lambda_requested", "overhead_bytes"),
                  "t_round": trend(frame, "lambda_requested", "t_round")}
    else:
        settings = _generator(args)
        model = run_step("Loading model profile", lambda: _generator_model(args))
        candidates = _candidates(args, model)
        if args.dimension == "gamma":
            gammas = _parse_list(args.values, float)
            frame = run_step("Sweeping heterogeneity",
                             lambda: sweep_gamma(settings, model, candidates, gammas, args.seed, cfg, args.jobs))
            trends = {"lambda": trend(frame, "gamma", "lambda"), "max_aggr_h2": trend(frame, "gamma", "max_aggr_h2")}
        else:
            sizes = _parse_list(args.values, int)
            frame = run_step("Sweeping client count",
                             lambda: sweep_n_clients(settings, model, candidates, sizes, args.seed, cfg, args.jobs))
            trends = {"evaluated_configs": trend(frame, "n_clients", "evaluated_configs"),
                      "planner_ms": trend(frame, "n_clients", "planner_ms")}

    stem = f"sweep_{args.dimension}"
    files = [
        write_table(frame, out_dir / f"{stem}.{args.format}", args.format),
        save_markdown(sweep_markdown(frame, args.dimension, {k: t for k, t in trends.items() if t["n"] >= 2}),
                      out_dir / f"{stem}_report.md"),
    ]
    print(f"\n📈 {len(frame)} sweep points")
    _print_files(files)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    create_directories(out_dir)
    cfg = _planner_config(args)
    budget = _budget(args)

    if args.batch:
        settings = _generator(args)
        model = run_step("Loading model profile", lambda: _generator_model(args))
        candidates = _candidates(args, model)
        frame = run_step(f"Comparing {args.batch} seeded instances",
                         lambda: compare_batch(settings, model, candidates, _seeds(args), cfg, budget, args.jobs))
    else:
        s = run_step("Loading scenario", lambda: _scenario(args))
        candidates = _candidates(args, s.model)

        def single() -> pd.DataFrame:
            record = compare(s, candidates, cfg, budget).to_record()
            record["seed"] = args.seed
            return pd.DataFrame([record])

        frame = run_step("Comparing planner and exhaustive search", single)

    frame = frame[COMPARE_COLUMNS]
    summary = summarize_column(frame["suboptimality_pct"])
    speedup = summarize_column(frame["speedup"])
    files = [
        write_table(frame, out_dir / f"compare.{args.format}", args.format),
        save_markdown(compare_markdown(summary, speedup), out_dir / "compare_report.md"),
    ]
    print(f"\n📊 Median suboptimality: {summary.get('median', float('nan')):.2f}%, "
          f"max {summary.get('max', float('nan')):.2f}%")
    print(f"⚡ Median speedup: {speedup.get('median', float('nan')):.1f}x")
    _print_files(files)
    return EXIT_OK


def cmd_replan(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    create_directories(out_dir)
    cfg = _planner_config(args)
    if not args.changes:
        raise PlanningError("--changes is required for replan")
    changes = run_step("Loading system changes", lambda: load_changes(args.changes))

    if args.batch:
        settings = _generator(args)
        model = run_step("Loading model profile", lambda: _generator_model(args))
        candidates = _candidates(args, model)
        frame = run_step(f"Replanning {args.batch} seeded instances",
                         lambda: replan_batch(settings, model, candidates, changes, _seeds(args), cfg, args.jobs))
    else:
        s = run_step("Loading scenario", lambda: _scenario(args))
        candidates = _candidates(args, s.model)
        frame = run_step("Replanning after system changes", lambda: replan_study(s, changes, candidates, cfg))

    files = [
        write_table(frame, out_dir / f"replan.{args.format}", args.format),
        save_markdown(replan_markdown(frame), out_dir / "replan_report.md"),
    ]
    for _, row in frame.iterrows():
        print(f"🔁 {row['change']}: fixed {row['fixed_delta_pct']:+.1f}%, replanned {row['replanned_delta_pct']:+.1f}%")
    _print_files(files)
    return EXIT_OK


def _plan_for(args: argparse.Namespace, s: Scenario) -> Plan:
    if args.plan:
        return load_plan(s, args.plan)
    return plan(s, _candidates(args, s.model), _planner_config(args)).plan


def cmd_simulate(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    create_directories(out_dir)
    s = run_step("Loading scenario", lambda: _scenario(args))
    p = run_step("Resolving plan", lambda: _plan_for(args, s))
    trace = run_step("Simulating one round", lambda: simulate_round(s, p))
    analytic = round_delay(s, p).t_round
    files = export_trace(trace, out_dir, stem=args.stem)
    print(f"\n⏱️  Simulated makespan: {trace.makespan:.6f} s (analytic {analytic:.6f} s)")
    _print_files(files)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    s = run_step("Loading scenario", lambda: _scenario(args))
    if args.accuracy:
        accuracy = run_step("Loading accuracy profile", lambda: load_accuracy_profile(args.accuracy))
        run_step("Checking accuracy layer range", lambda: check_layer_range(accuracy, s.model.num_layers))
    candidates = _candidates(args, s.model) if (args.candidates or args.accuracy) else None
    if candidates is None and not args.plan:
        print("\n✅ Documents are consistent (no plan to check)")
        return EXIT_OK

    p = run_step("Resolving plan", lambda: _plan_for(args, s))
    run_step("Checking plan constraints", lambda: validate_plan(s, p, candidates))
    run_step("Checking assignment tensor", lambda: check_assignment_tensor(expand_assignment(s, p), p.h, p.v))
    analytic, simulated, agree = run_step("Checking analytic/simulation agreement", lambda: check_agreement(s, p))
    print(f"\n⏱️  Analytic t_round {analytic:.9f} s, simulated {simulated:.9f} s")
    if not agree:
        print("❌ Analytic delay and simulated makespan disagree")
        return EXIT_INPUT
    print("\n🎉 All checks passed!")
    return EXIT_OK


def cmd_profiles(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    create_directories(out_dir)
    files = run_step("Exporting reference profiles", lambda: export_reference_profiles(out_dir, args.batch_size))
    _print_files(files)
    return EXIT_OK


# ---------- Parser ----------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="Scenario JSON document")
    p.add_argument("--profile", help="Model profile JSON or reference model name (overrides the scenario's model)")
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE, help="Batch size for reference models")
    p.add_argument("--accuracy", help="Accuracy profile JSON (candidate cut layers within --thr of the best)")
    p.add_argument("--candidates", help="Comma-separated candidate cut layers, e.g. 3,4")
    p.add_argument("--thr", type=float, default=DEFAULT_THRESHOLD, help="Accuracy tolerance")
    p.add_argument("--seed", type=int, default=0, help="Seed for every random choice")
    p.add_argument("--jobs", type=int, default=1, help="Worker processes for sweeps and batch studies")
    p.add_argument("--out-dir", default="outputs", help="Output directory")
    p.add_argument("--format", choices=["json", "csv"], default="csv", help="Table format")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="Balance threshold in seconds")
    p.add_argument("--lambda-step", type=float, default=DEFAULT_LAMBDA_STEP, help="Aggregator fraction step")
    p.add_argument("--max-h-iterations", type=int, default=None, help="Cap on aggregator-layer steps")
    p.add_argument("--oracle-max-clients", type=int, default=DEFAULT_MAX_CLIENTS)
    p.add_argument("--oracle-max-aggregators", type=int, default=DEFAULT_MAX_AGGREGATOR_SET_SIZE)
    p.add_argument("--oracle-max-configurations", type=int, default=DEFAULT_MAX_CONFIGURATIONS)


def _add_generator(p: argparse.ArgumentParser) -> None:
    p.add_argument("--batch", type=int, default=0, help="Number of seeded generated instances")
    p.add_argument("--n-clients", type=int, default=None)
    p.add_argument("--strong-fraction", type=float, default=None)
    p.add_argument("--strong-p", type=float, default=None, help="Strong client throughput (FLOPS/s)")
    p.add_argument("--weak-p", type=float, default=None, help="Weak client throughput (FLOPS/s)")
    p.add_argument("--server-p", type=float, default=None, help="Server throughput (FLOPS/s)")
    p.add_argument("--rate-lo", default=None, help="Lowest link rate, e.g. 20Mbps")
    p.add_argument("--rate-hi", default=None, help="Highest link rate, e.g. 25Mbps")
    p.add_argument("--epochs", type=int, default=None, help="Epochs per round")
    p.add_argument("--dataset-size", type=int, default=None, help="Samples per client")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(description="HSFL planning toolkit")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    parser.add_argument("--quiet", "-q", action="store_true", help="Warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="Plan one scenario and write the decision report")
    _add_common(p)
    p.add_argument("--stem", default="plan", help="Report file name stem")
    p.add_argument("--with-oracle", action="store_true", help="Also run the exhaustive search check")
    p.set_defaults(func=cmd_plan, format="json")

    p = sub.add_parser("sweep", help="Sweep lambda, gamma or the client count")
    _add_common(p)
    _add_generator(p)
    p.add_argument("--dimension", choices=["lambda", "gamma", "n_clients"], required=True)
    p.add_argument("--values", default="", help="Comma-separated sweep points")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="Compare the planner with the exhaustive search")
    _add_common(p)
    _add_generator(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replan", help="Fixed vs replanned delay after system changes")
    _add_common(p)
    _add_generator(p)
    p.add_argument("--changes", help="System change list JSON")
    p.set_defaults(func=cmd_replan)

    p = sub.add_parser("simulate", help="Simulate one round and export the task trace")
    _add_common(p)
    p.add_argument("--plan", help="Plan JSON (decision record or plan report); planned when omitted")
    p.add_argument("--stem", default="trace", help="Trace file name stem")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="Cross-check documents, plan constraints and simulation agreement")
    _add_common(p)
    p.add_argument("--plan", help="Plan JSON to check; planned when omitted")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("profiles", help="Export the bundled reference model profiles")
    p.add_argument("--out-dir", default="data", help="Output directory")
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE)
    p.set_defaults(func=cmd_profiles)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and map failures to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    print("🧠 HSFL Planning Toolkit")
    print("=" * 50)
    try:
        return int(args.func(args))
    except InfeasiblePlanError as e:
        print(f"❌ Infeasible: {e}")
        return EXIT_INFEASIBLE
    except BudgetExceededError as e:
        print(f"❌ Oracle budget exceeded: {e}")
        return EXIT_BUDGET
    except PlanningError as e:
        print(f"❌ Error: {e}")
        return EXIT_INPUT
    except OSError as e:
        print(f"❌ Error: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    exit_code = main()
    sys.exit(exit_code)
