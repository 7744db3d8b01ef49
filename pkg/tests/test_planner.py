import itertools
from dataclasses import replace

import numpy as np
import pytest

from builders import make_profile, make_scenario
from scripts.delay_model import LayerSplit, round_delay, validate_plan
from scripts.errors import InfeasiblePlanError, PlanError, PlanningError
from scripts.planner import (
    PlannerConfig,
    greedy_assign,
    max_aggregators,
    plan,
    replan,
    strength_order,
    strong_class_size,
)
from scripts.scenario import THROUGHPUT_SCALE, SystemChange, apply_changes

FLAT = make_profile([100] * 8, [1000] * 8, [50] * 8)


def test_config_defaults_and_validation():
    cfg = PlannerConfig()
    assert cfg.delta == 0.5
    assert cfg.lambda_step == 0.01
    assert cfg.h_iterations(8) == 4
    assert cfg.h_iterations(34) == 7
    assert PlannerConfig(max_h_iterations=2).h_iterations(34) == 2
    for bad in (dict(delta=0.0), dict(lambda_step=0.0), dict(lambda_step=1.5),
                dict(fixed_lambda=0.0), dict(max_aggregators_cap=0), dict(max_h_iterations=0)):
        with pytest.raises(PlanningError):
            PlannerConfig(**bad)


def test_max_aggregators_tiny(tiny):
    assert max_aggregators(tiny, 2, 3) == 1


def test_max_aggregators_homogeneous_clamps_to_one(tiny_profile):
    s = make_scenario([100, 100, 100, 100], tiny_profile)
    assert max_aggregators(s, 2, 3) == 1


def test_max_aggregators_grows_with_h():
    s = make_scenario([17.6e9] * 3 + [2.4e9] * 7, FLAT)
    # (7.33 - 1) * 200 / 600 -> 2
    assert max_aggregators(s, 2, 7) == 2
    # raw (7.33 - 1) * 600 / 200 = 19, clamped to N - 1
    assert max_aggregators(s, 6, 7) == 9


def test_max_aggregators_needs_ordered_layers(tiny):
    with pytest.raises(PlanError):
        max_aggregators(tiny, 3, 3)


@pytest.mark.parametrize("throughputs,expected", [
    ([17.6e9] * 3 + [2.4e9] * 7, 3),
    ([12.32e9, 17.6e9, 1.68e9, 2.4e9, 2.4e9], 2),
    ([100, 200], 1),
    ([100, 100, 100], 3),
])
def test_strong_class_size(tiny_profile, throughputs, expected):
    assert strong_class_size(make_scenario(throughputs, tiny_profile)) == expected


def test_sweep_reaches_the_strong_class_past_max_aggr():
    s = make_scenario([200, 200, 150, 150], FLAT)
    assert max(max_aggregators(s, h, 5) for h in range(2, 5)) == 1
    covered = plan(s, [5])
    narrow = plan(s, [5], PlannerConfig(cover_strong_class=False))
    assert covered.plan.aggregators == ("c1", "c2")
    assert narrow.plan.aggregators == ("c1",)
    assert covered.breakdown.t_round < narrow.breakdown.t_round


def test_strength_order_ties_by_natural_id(tiny_profile):
    s = make_scenario([5.0] * 10 + [1.0], tiny_profile)
    s = replace(s, clients=tuple(replace(c, throughput=9.0) if c.id in ("c2", "c10") else c for c in s.clients))
    ids = s.client_ids
    assert [ids[i] for i in strength_order(s)][:3] == ["c2", "c10", "c1"]


def test_greedy_tiny_single_aggregator(tiny, p0):
    assert greedy_assign(tiny, 2, 3, ["c2"]) == p0


def test_greedy_tie_goes_to_lower_id(tiny_profile):
    s = make_scenario([200, 200, 100], tiny_profile)
    for aggregators in (["c1", "c2"], ["c2", "c1"]):
        p = greedy_assign(s, 2, 3, aggregators)
        assert p.assign == {"c1": "c1", "c2": "c2", "c3": "c1"}


def test_greedy_tie_uses_natural_id_order(tiny_profile):
    s = make_scenario([200, 200, 100], tiny_profile)
    s = replace(s, clients=tuple(replace(c, id=new) for c, new in zip(s.clients, ("c10", "c2", "c3"))))
    for aggregators in (["c10", "c2"], ["c2", "c10"]):
        assert greedy_assign(s, 2, 3, aggregators).assign["c3"] == "c2"


def test_greedy_balances_weak_clients(tiny_profile):
    s = make_scenario([1000, 1000, 100, 100, 100, 100], tiny_profile)
    p = greedy_assign(s, 2, 3, ["c1", "c2"])
    assert len(p.members("c1")) == 3
    assert len(p.members("c2")) == 3
    validate_plan(s, p)


def test_greedy_rejects_bad_aggregators(tiny):
    with pytest.raises(PlanError):
        greedy_assign(tiny, 2, 3, [])
    with pytest.raises(PlanError):
        greedy_assign(tiny, 2, 3, ["c7"])


@pytest.mark.parametrize("seed", range(20))
def test_greedy_within_twice_the_best_assignment(random_scenario, seed):
    s = random_scenario(6, seed)
    order = strength_order(s)
    ids = s.client_ids
    aggregators = sorted(order[:2])
    h, v = 3, 6
    greedy_t = round_delay(s, greedy_assign(s, h, v, [ids[k] for k in aggregators])).t_round

    split = LayerSplit(s, h, v)
    others = [i for i in range(s.num_clients) if i not in aggregators]
    rows = []
    for choice in itertools.product(aggregators, repeat=len(others)):
        a = np.arange(s.num_clients)
        a[others] = choice
        rows.append(a)
    best_t = float(split.round_times(np.array(rows)).min())
    assert best_t <= greedy_t + 1e-9
    assert greedy_t <= 2 * best_t


def test_plan_tiny(tiny, p0):
    decision = plan(tiny, [3])
    assert decision.plan == p0
    assert decision.breakdown.t_round == pytest.approx(132.0)
    assert decision.lam == 0.5
    chosen, breakdown = decision
    assert chosen == p0 and breakdown == decision.breakdown


def test_plan_record(tiny):
    record = plan(tiny, [3]).to_record()
    assert record["h"] == 2 and record["v"] == 3
    assert record["aggregators"] == ["c2"]
    assert record["assignment"] == {"c1": "c2", "c2": "c2"}
    assert record["delay_breakdown"]["t_round"] == pytest.approx(132.0)
    assert record["evaluated_configs"] >= 1
    assert record["trajectory"][0]["h"] == 2


def test_plan_infeasible(tiny):
    with pytest.raises(InfeasiblePlanError):
        plan(tiny, [])
    with pytest.raises(InfeasiblePlanError):
        plan(tiny, [2, 4])


def test_plan_needs_two_clients(tiny_profile):
    s = make_scenario([100], tiny_profile)
    with pytest.raises(PlanError):
        plan(s, [3])


def test_plan_skips_infeasible_candidates(tiny, p0):
    assert plan(tiny, [1, 3, 4]).plan == p0


@pytest.mark.parametrize("seed", range(10))
def test_plan_output_is_valid(random_scenario, seed):
    s = random_scenario(8, seed)
    candidates = [4, 5, 6]
    decision = plan(s, candidates)
    validate_plan(s, decision.plan, candidates)
    assert decision.plan.v in candidates
    assert decision.iterations <= len(candidates) * PlannerConfig().h_iterations(s.model.num_layers)
    assert all(2 <= step.h < step.v for step in decision.trajectory)
    assert decision.breakdown.t_round == min(step.best_t_round for step in decision.trajectory)


@pytest.mark.parametrize("n_clients", [10, 20, 40])
def test_work_stays_within_the_iteration_bound(random_scenario, n_clients):
    s = random_scenario(n_clients, 1)
    candidates = [4, 5, 6]
    cfg = PlannerConfig()
    decision = plan(s, candidates, cfg)
    max_iterations = len(candidates) * cfg.h_iterations(s.model.num_layers)
    assert decision.iterations <= max_iterations
    assert decision.evaluated_configs <= decision.iterations * (n_clients - 1)
    assert len(decision.trajectory) == decision.iterations


def test_heavier_models_push_the_layers_deeper():
    s = make_scenario([400] + [100] * 7, FLAT, rate=50.0, server_p=1e9)
    cfg = PlannerConfig(max_aggregators_cap=1)
    chosen = []
    for num_layers, v in ((6, 4), (8, 6), (12, 10)):
        model = make_profile([100] * num_layers, [1] * num_layers, [1] * num_layers)
        chosen.append(plan(replace(s, model=model), [v], cfg))
    assert [d.plan.h for d in chosen] == [3, 4, 8]
    assert [d.plan.v for d in chosen] == [4, 6, 10]
    assert [d.lam for d in chosen] == [1 / 8] * 3


def test_plan_is_deterministic(random_scenario):
    s = random_scenario(10, 3)
    assert plan(s, [4, 5, 6]) == plan(s, [4, 5, 6])


@pytest.mark.parametrize("seed", range(5))
def test_uniform_scaling_keeps_the_decision(random_scenario, seed):
    s = random_scenario(8, seed)
    factor = 4.0
    faster = replace(
        s,
        clients=tuple(replace(c, throughput=c.throughput * factor) for c in s.clients),
        server_throughput=s.server_throughput * factor,
        rates=s.rates * factor,
    )
    cfg = PlannerConfig()
    original = plan(s, [4, 5, 6], cfg)
    scaled = plan(faster, [4, 5, 6], replace(cfg, delta=cfg.delta / factor))
    assert scaled.plan == original.plan
    assert scaled.breakdown.t_round == pytest.approx(original.breakdown.t_round / factor)


def test_fixed_lambda_pins_the_aggregator_count(random_scenario):
    s = random_scenario(10, 0)
    assert len(plan(s, [5], PlannerConfig(fixed_lambda=0.5)).plan.aggregators) == 5
    assert len(plan(s, [5], PlannerConfig(fixed_lambda=1.0)).plan.aggregators) == 10


def test_aggregator_cap(random_scenario):
    s = random_scenario(10, 0)
    decision = plan(s, [5], PlannerConfig(fixed_lambda=0.5, max_aggregators_cap=2))
    assert len(decision.plan.aggregators) == 2


def test_aggregators_are_the_strongest(random_scenario):
    s = random_scenario(10, 6)
    decision = plan(s, [4, 5, 6])
    p = s.throughputs
    chosen = [s.index_of(k) for k in decision.plan.aggregators]
    others = [i for i in range(s.num_clients) if i not in chosen]
    assert p[chosen].min() >= p[others].max()


def test_replan_without_changes(random_scenario):
    s = random_scenario(8, 2)
    assert replan(s, [], [4, 5, 6]) == plan(s, [4, 5, 6])


@pytest.mark.parametrize("seed", range(10))
def test_replan_never_loses_to_the_fixed_plan(random_scenario, seed):
    s = random_scenario(8, seed)
    base = plan(s, [4, 5, 6])
    changes = [SystemChange(THROUGHPUT_SCALE, targets=("c1", "c2", "c3"), factor=0.7)]
    fixed = round_delay(apply_changes(s, changes), base.plan).t_round
    fresh = replan(s, changes, [4, 5, 6], incumbent=base.plan)
    assert fresh.breakdown.t_round <= fixed


def test_replan_evaluates_on_the_changed_scenario(tiny):
    changes = [SystemChange(THROUGHPUT_SCALE, factor=0.5)]
    decision = replan(tiny, changes, [3])
    assert decision.breakdown == round_delay(apply_changes(tiny, changes), decision.plan)


def test_replan_drops_an_incumbent_outside_candidates(random_scenario):
    s = random_scenario(6, 1)
    old = plan(s, [4])
    decision = replan(s, [], [5], incumbent=old.plan)
    assert decision.plan.v == 5


def test_slow_strong_clients_lose_their_role(tiny_profile):
    s = make_scenario([100, 400, 100, 100], tiny_profile)
    assert "c2" in plan(s, [3]).plan.aggregators
    slowed = replan(s, [SystemChange(THROUGHPUT_SCALE, targets=("c2",), factor=0.1)], [3])
    assert "c2" not in slowed.plan.aggregators
