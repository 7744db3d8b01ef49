import json
from dataclasses import replace

import pandas as pd
import pytest

from scripts.baselines import baseline_delays
from scripts.oracle import compare
from scripts.planner import PlannerConfig, plan
from scripts.reports import (
    CSV_COLUMNS,
    build_run_report,
    compare_markdown,
    plan_markdown,
    replan_markdown,
    scenario_digest,
    sweep_markdown,
    write_run_report,
    write_table,
)


@pytest.fixture
def tiny_report(tiny):
    decision = plan(tiny, [3])
    return build_run_report(tiny, decision, PlannerConfig().to_record(), baseline_delays(tiny, 3))


def test_digest_is_stable(tiny):
    assert scenario_digest(tiny) == scenario_digest(replace(tiny))
    assert scenario_digest(tiny).startswith("sha256:")


def test_digest_tracks_inputs(tiny):
    slower = replace(tiny, clients=(replace(tiny.clients[0], throughput=99.0), tiny.clients[1]))
    assert scenario_digest(slower) != scenario_digest(tiny)
    other_model = replace(tiny, model=replace(tiny.model, batch_size=2))
    assert scenario_digest(other_model) != scenario_digest(tiny)


def test_report_document(tiny_report):
    document = tiny_report.to_document()
    assert document["decision"]["h"] == 2
    assert document["decision"]["v"] == 3
    assert document["delay_breakdown"]["t_round"] == pytest.approx(132.0)
    assert document["overhead_bytes"] == pytest.approx(10200.0)
    assert document["config"]["delta"] == 0.5
    assert [b["scheme"] for b in document["baselines"]] == ["locsfl", "sequential_sfl"]
    assert "oracle_comparison" not in document


def test_report_with_comparison(tiny):
    decision = plan(tiny, [3])
    report = build_run_report(tiny, decision, {}, comparison=compare(tiny, [3]), trace_path="trace.json")
    document = report.to_document()
    assert document["oracle_comparison"]["suboptimality_pct"] == 0.0
    assert document["trace_path"] == "trace.json"


def test_reports_are_byte_identical(tiny, tiny_report, tmp_path):
    first = write_run_report(tiny_report, tmp_path / "a")
    again = build_run_report(tiny, plan(tiny, [3]), PlannerConfig().to_record(), baseline_delays(tiny, 3))
    second = write_run_report(again, tmp_path / "b")
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()


def test_csv_row_matches_json(tiny_report, tmp_path):
    json_path, csv_path = write_run_report(tiny_report, tmp_path)
    document = json.loads(json_path.read_text())
    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == CSV_COLUMNS
    row = frame.iloc[0]
    assert row["lambda"] == document["decision"]["lambda"]
    for column, value in document["delay_breakdown"].items():
        assert row[column] == pytest.approx(value, rel=1e-15)


def test_csv_first_when_asked(tiny_report, tmp_path):
    paths = write_run_report(tiny_report, tmp_path, stem="run", fmt="csv")
    assert [p.name for p in paths] == ["run.csv", "run.json"]


def test_write_table_formats(tmp_path):
    frame = pd.DataFrame({"a": [1, 2], "b": [0.5, 1.5]})
    csv_path = write_table(frame, tmp_path / "t.csv")
    assert pd.read_csv(csv_path).equals(frame)
    json_path = write_table(frame, tmp_path / "t.json", fmt="json")
    assert json.loads(json_path.read_text()) == [{"a": 1, "b": 0.5}, {"a": 2, "b": 1.5}]


def test_markdown_summaries(tiny, tiny_report):
    text = plan_markdown(tiny, tiny_report)
    assert "## Executive Summary" in text
    assert "h=2" in text and "v=3" in text
    assert "132.000 s" in text
    assert "**c2**: c1" in text

    frame = pd.DataFrame({"x": [1, 2], "y": [3, 4]})
    assert "rho=1.000" in sweep_markdown(frame, "lambda", {"y": {"rho": 1.0, "p_value": 0.0, "n": 2.0}})
    assert "Not enough points" in sweep_markdown(frame.head(0), "gamma", {})

    assert "**median**: 1.50%" in compare_markdown({"count": 2.0, "median": 1.5}, {"median": 12.0})

    replans = pd.DataFrame([{"change": "none", "fixed_delta_pct": 0.0, "replanned_delta_pct": 0.0}])
    assert "**none**: fixed plan +0.0%, replanned +0.0%" in replan_markdown(replans)
