import json
from dataclasses import replace

import numpy as np
import pytest

from builders import make_profile, make_scenario, random_plan
from formula_reference import reference_delay
from scripts.constraints import expand_assignment
from scripts.delay_model import (
    LayerSplit,
    Plan,
    load_plan,
    round_delay,
    round_overhead,
    t1,
    t_bp,
    t_fp,
    t_s,
    validate_plan,
)
from scripts.errors import PlanError
from scripts.scenario import ClientSpec, Scenario, uniform_rates


def test_tiny_components(tiny, p0):
    assert t1(tiny, p0) == pytest.approx(60.0)
    assert t_fp(tiny, p0) == pytest.approx(5.0)
    assert t_s(tiny, p0) == pytest.approx(0.6)
    assert t_bp(tiny, p0) == pytest.approx(7.0)


def test_tiny_round(tiny, p0):
    d = round_delay(tiny, p0)
    assert d.t2 == pytest.approx(12.0)
    assert d.t3 == d.t1
    assert d.t_round == pytest.approx(132.0)
    assert d.overhead_bytes == pytest.approx(10200.0)
    assert round_overhead(tiny, p0) == d.overhead_bytes


def test_tiny_matches_formula_reference(tiny, p0):
    expected = reference_delay(tiny, expand_assignment(tiny, p0), p0.h, p0.v)
    assert round_delay(tiny, p0).to_record() == pytest.approx(expected)


@pytest.mark.parametrize("seed", range(25))
def test_random_plans_match_formula_reference(random_scenario, seed):
    rng = np.random.default_rng(seed)
    s = random_scenario(int(rng.integers(2, 9)), seed, epochs=int(rng.integers(1, 4)))
    p = random_plan(s, rng)
    expected = reference_delay(s, expand_assignment(s, p), p.h, p.v)
    assert round_delay(s, p).to_record() == pytest.approx(expected, rel=1e-12)


def test_zero_weights_download_instantly(tiny, p0):
    s = replace(tiny, model=make_profile([100] * 4, [0] * 4, [50] * 4))
    assert t1(s, p0) == 0.0


def test_single_self_aggregating_client_is_pure_compute(tiny_profile):
    s = Scenario(clients=(ClientSpec("c1", 100.0),), server_throughput=1000.0,
                 rates=uniform_rates(1, np.inf), epochs_per_round=1, model=tiny_profile)
    p = Plan(h=2, v=3, aggregators=("c1",), assign={"c1": "c1"})
    # 200/100 weak side + 100/100 aggregator side
    assert t_fp(s, p) == pytest.approx(3.0)
    assert t1(s, p) == 0.0


def test_empty_server_tail(tiny):
    s = replace(tiny, model=make_profile([100, 100, 100, 0], [1000] * 4, [50] * 4))
    p = Plan(h=2, v=3, aggregators=("c2",), assign={"c1": "c2", "c2": "c2"})
    assert t_s(s, p) == 0.0


def test_slow_server_dominates_backward(tiny, p0):
    s = replace(tiny, server_throughput=1.0)
    assert t_bp(s, p0) == t_s(s, p0) == pytest.approx(600.0)


def test_rounds_scale_with_batch_executions(tiny, p0):
    s = replace(tiny, epochs_per_round=3,
                clients=tuple(replace(c, dataset_size=2) for c in tiny.clients))
    d = round_delay(s, p0)
    assert d.t_round == pytest.approx(60 + 6 * 12 + 60)
    assert d.overhead_bytes == pytest.approx(10000 + 6 * 200)


def test_all_self_plan_moves_no_weak_activations(tiny):
    p = Plan(h=2, v=3, aggregators=("c1", "c2"), assign={"c1": "c1", "c2": "c2"})
    # both download layers 1..3 twice, plus g_v per client
    assert round_overhead(tiny, p) == pytest.approx(2 * 6000 + 2 * 50)


def test_overhead_ignores_throughput_and_rates(random_scenario):
    s = random_scenario(6, 4)
    p = random_plan(s, np.random.default_rng(4))
    faster = replace(
        s,
        clients=tuple(replace(c, throughput=c.throughput * 3) for c in s.clients),
        rates=s.rates * 0.25,
        server_throughput=s.server_throughput / 2,
    )
    assert round_overhead(faster, p) == round_overhead(s, p)


def test_layer_terms_move_with_h(random_scenario):
    s = random_scenario(5, 1)
    v = 7
    splits = [LayerSplit(s, h, v) for h in range(2, v)]
    weak = [split.weak_flops for split in splits]
    pooled = [split.aggr_flops for split in splits]
    assert weak == sorted(weak)
    assert pooled == sorted(pooled, reverse=True)


def test_batch_terms_match_single_rows(random_scenario):
    s = random_scenario(5, 2)
    rng = np.random.default_rng(2)
    plans = [random_plan(s, rng) for _ in range(10)]
    split = LayerSplit(s, 2, 6)
    A = np.array([[s.index_of(p.assign[n]) for n in s.client_ids] for p in plans])
    batched = split.round_times(A)
    for row, t in zip(A, batched):
        assert split.breakdown(row).t_round == t


@pytest.mark.parametrize("plan,constraint", [
    (Plan(1, 3, ("c2",), {"c1": "c2", "c2": "c2"}), "layer_range"),
    (Plan(2, 4, ("c2",), {"c1": "c2", "c2": "c2"}), "layer_range"),
    (Plan(2, 3, (), {"c1": "c2", "c2": "c2"}), "empty_aggregators"),
    (Plan(2, 3, ("c9",), {"c1": "c9", "c2": "c9"}), "unknown_client"),
    (Plan(2, 3, ("c2",), {"c1": "c2", "c2": "c2", "c3": "c2"}), "unknown_client"),
    (Plan(2, 3, ("c2",), {"c1": "c1", "c2": "c2"}), "not_aggregator"),
    (Plan(2, 3, ("c2",), {"c2": "c2"}), "unassigned"),
    (Plan(2, 3, ("c1", "c2"), {"c1": "c2", "c2": "c2"}), "aggregator_self"),
])
def test_validate_plan_names_constraint(tiny, plan, constraint):
    with pytest.raises(PlanError) as e:
        validate_plan(tiny, plan)
    assert e.value.constraint == constraint


def test_validate_plan_candidates(tiny, p0):
    validate_plan(tiny, p0, candidates=[3])
    with pytest.raises(PlanError) as e:
        validate_plan(tiny, p0, candidates=[2])
    assert e.value.constraint == "cut_layer_candidates"


def test_round_delay_rejects_invalid_plan(tiny):
    with pytest.raises(PlanError):
        round_delay(tiny, Plan(2, 2, ("c2",), {"c1": "c2", "c2": "c2"}))


def test_load_plan(data_dir, tiny, p0, tmp_path):
    assert load_plan(tiny, data_dir / "tiny_plan.json") == p0

    wrapped = tmp_path / "report.json"
    wrapped.write_text(json.dumps({"decision": p0.to_record()}))
    assert load_plan(tiny, wrapped) == p0

    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"h": 2, "v": 3}))
    with pytest.raises(PlanError) as e:
        load_plan(tiny, broken)
    assert e.value.constraint == "plan_document"
    with pytest.raises(PlanError):
        load_plan(tiny, tmp_path / "absent.json")


def test_plan_helpers(tiny, p0):
    assert p0.members("c2") == ["c1", "c2"]
    assert p0.fraction(tiny.num_clients) == 0.5
    assert Plan.from_assignment(tiny, 2, 3, {"c2": "c2", "c1": "c2"}) == p0


def test_uneven_rates_pick_the_slowest_link(tiny_profile):
    s = make_scenario([100, 200], tiny_profile)
    rates = np.array(s.rates)
    rates[0, 2] = rates[2, 0] = 25.0
    s = replace(s, rates=rates)
    p = Plan(2, 3, ("c2",), {"c1": "c2", "c2": "c2"})
    # c1 downloads 2000 B at 25 B/s
    assert t1(s, p) == pytest.approx(80.0)
