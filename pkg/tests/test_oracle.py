import math

import numpy as np
import pytest

from builders import make_scenario, sample_configurations
from scripts.delay_model import round_delay, validate_plan
from scripts.errors import BudgetExceededError, InfeasiblePlanError, PlanError, PlanningError
from scripts.experiments import compare_batch
from scripts.oracle import (
    OracleBudget,
    compare,
    estimate_configurations,
    exhaustive_best,
)
from scripts.reference_models import reference_profile
from scripts.scenario import GeneratorSettings


def test_budget_defaults_and_limits():
    b = OracleBudget()
    assert (b.max_clients, b.max_aggregator_set_size) == (8, 3)
    assert b.aggregator_limit(2) == 1
    assert b.aggregator_limit(8) == 3
    with pytest.raises(PlanningError):
        OracleBudget(max_clients=0)


def test_tiny_matches_planner(tiny, p0):
    result = exhaustive_best(tiny, [3])
    assert result.plan == p0
    assert result.breakdown.t_round == pytest.approx(132.0)
    # {c1} and {c2} as the single aggregator
    assert result.configurations == 2
    assert estimate_configurations(tiny, [3], OracleBudget()) == 2


def test_estimate_counts_every_assignment(random_scenario):
    s = random_scenario(5, 0)
    # (v=4: 2 pairs) + (v=5: 3 pairs), K <= 3: 5 + 10 * 8 + 10 * 9
    assert estimate_configurations(s, [4, 5], OracleBudget()) == 5 * (5 + 80 + 90)
    assert exhaustive_best(s, [4, 5]).configurations == 5 * 175


@pytest.mark.parametrize("seed", range(5))
def test_oracle_never_loses_to_planner(random_scenario, seed):
    s = random_scenario(6, seed)
    report = compare(s, [4, 5, 6])
    assert report.oracle_t <= report.heuristic_t
    assert report.suboptimality_pct >= 0.0
    assert report.speedup > 0
    validate_plan(s, report.oracle_plan, [4, 5, 6])
    assert report.configurations == estimate_configurations(s, [4, 5, 6], OracleBudget())


def test_optimum_beats_sampled_configurations(random_scenario):
    s = random_scenario(5, 9)
    budget = OracleBudget()
    optimum = exhaustive_best(s, [4, 5, 6], budget).breakdown.t_round
    samples = sample_configurations(s, [4, 5, 6], budget, count=1000, seed=3)
    assert len(samples) == 1000
    assert all(round_delay(s, p).t_round >= optimum for p in samples)
    assert all(len(p.aggregators) <= 3 for p in samples)


def test_smaller_cap_never_improves(random_scenario):
    s = random_scenario(6, 4)
    wide = exhaustive_best(s, [5], OracleBudget(max_aggregator_set_size=3)).breakdown.t_round
    narrow = exhaustive_best(s, [5], OracleBudget(max_aggregator_set_size=1)).breakdown.t_round
    assert narrow >= wide


def test_budget_guards(random_scenario):
    with pytest.raises(BudgetExceededError, match="max_clients"):
        exhaustive_best(random_scenario(9, 0), [4])
    with pytest.raises(BudgetExceededError) as e:
        exhaustive_best(random_scenario(6, 0), [4, 5], OracleBudget(max_configurations=10))
    assert e.value.estimate > e.value.guard == 10
    with pytest.raises(BudgetExceededError):
        compare(random_scenario(9, 0), [4])


def test_preconditions(tiny, tiny_profile):
    with pytest.raises(InfeasiblePlanError):
        exhaustive_best(tiny, [])
    with pytest.raises(InfeasiblePlanError):
        exhaustive_best(tiny, [4])
    with pytest.raises(PlanError):
        exhaustive_best(make_scenario([100], tiny_profile), [3])


def test_comparison_record(tiny):
    record = compare(tiny, [3]).to_record()
    assert list(record) == ["N", "oracle_t", "heuristic_t", "suboptimality_pct", "oracle_ms",
                            "heuristic_ms", "speedup", "configurations"]
    assert record["N"] == 2
    assert record["suboptimality_pct"] == 0.0


def test_result_unpacks(tiny, p0):
    chosen, breakdown = exhaustive_best(tiny, [3])
    assert chosen == p0
    assert breakdown.t_round == pytest.approx(132.0)


@pytest.mark.slow
@pytest.mark.parametrize("model,candidates", [("small", [4, 5, 6]), ("alexnet", [4, 5, 6]), ("vgg11", [6, 8])])
def test_suboptimality_over_a_seeded_batch(random_scenario, model, candidates):
    profile = None if model == "small" else reference_profile(model)
    gaps = []
    for seed in range(100):
        s = random_scenario(3 + seed % 6, seed, model=profile)
        report = compare(s, candidates)
        assert report.oracle_t <= report.heuristic_t
        gaps.append(report.suboptimality_pct)
    assert float(np.median(gaps)) <= 15.0
    assert max(gaps) <= 100.0
    assert not any(math.isnan(g) for g in gaps)


@pytest.mark.slow
def test_planner_is_much_faster_than_the_search():
    settings = GeneratorSettings(n_clients=8, epochs_per_round=1, dataset_size=64)
    frame = compare_batch(settings, reference_profile("vgg11"), [6, 8], range(5))
    assert (frame["N"] == 8).all()
    assert float(frame["speedup"].median()) >= 5.0
