import datetime
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flex_scheduler.exceptions import ConfigurationError, UsageError
from flex_scheduler.load_data import extract_signature
from flex_scheduler.schemas import ExperimentConfig, RunReport
from flex_scheduler.settings import RunSettings
from flex_scheduler.simulation import (
    Dataset,
    GroundTruth,
    OracleUser,
    average_reports,
    builtin_categories,
    experiment_variants,
    generate_synthetic,
    load_experiment_config,
    observe_days,
    run_comparisons,
    run_prequential,
    simulate,
    simulate_user_decision,
)
from flex_scheduler.simulation.prequential import _Tally
from flex_scheduler.user_flexibility import ContextKey

RATES = {context: 0.1 for context in ContextKey.all()}


# Synthetic households


def test_generate_synthetic__daily_operation(evening_device):
    load, events = generate_synthetic(evening_device, seed=1, n_days=10)

    assert len(events) == 10
    assert all(event.ready_time.hour == 19 for event in events)
    assert all(event.energy_per_hour == (1.0, 0.5) for event in events)
    assert len(load) == 240
    assert load.values[19] == 1.0


def test_generate_synthetic__never_active(evening_device):
    idle = evening_device.model_copy(update={"activation_probability": [0.0] * 7})

    load, events = generate_synthetic(idle, seed=1, n_days=10)

    assert len(events) == 0
    assert not np.any(load.values)


def test_generate_synthetic__is_deterministic(regular_household):
    _, first = generate_synthetic(regular_household, seed=21, n_days=30)
    _, second = generate_synthetic(regular_household, seed=21, n_days=30)

    assert first.events == second.events


def test_generate_synthetic__durations_stay_near_the_signature():
    config = builtin_categories()["family_teenagers"].model_copy(update={"duration_jitter": {-1: 0.2, 0: 0.6, 1: 0.2}})
    _, events = generate_synthetic(config, seed=4, n_days=200)

    length = extract_signature(events).length

    assert np.median([abs(event.duration - length) for event in events]) <= 1


def test_generate_synthetic__no_days(evening_device):
    with pytest.raises(ConfigurationError):
        generate_synthetic(evening_device, seed=1, n_days=0)


def test_builtin_categories():
    categories = builtin_categories()

    assert len(categories) == 13
    assert "regular_household" in categories
    assert all(name == config.category for name, config in categories.items())


def test_observe_days(evening_device):
    dataset = Dataset.from_synthetic(evening_device, seed=1, n_days=3)

    observed, truths = observe_days(dataset)

    assert [(day.t_es, day.t_le) for day in observed] == [(19, 43), (19, 43), (19, 47)]
    assert truths[0] == GroundTruth(t_es=19, next_ready=43)
    assert truths[2] == GroundTruth(t_es=19, next_ready=None)


# Simulated user


@pytest.mark.parametrize("mode", ["deadline", "stochastic", "both"])
def test_simulate_user_decision__no_delay(mode, context):
    oracle = OracleUser(mode=mode, rates=RATES)

    decision = simulate_user_decision(oracle, 10, 2, GroundTruth(t_es=10, next_ready=11), context, seed=0)

    assert decision.accepted
    assert decision.feedback.delay == 0


def test_simulate_user_decision__deadline_missed(context):
    oracle = OracleUser(mode="deadline")

    decision = simulate_user_decision(oracle, 19, 2, GroundTruth(t_es=10, next_ready=20), context, seed=0)

    assert decision.outcome == "rejected"
    assert decision.manual_delay == 0
    assert decision.feedback.manual_delay == 0


def test_simulate_user_decision__deadline_met(context):
    oracle = OracleUser(mode="deadline")

    decision = simulate_user_decision(oracle, 18, 2, GroundTruth(t_es=10, next_ready=20), context, seed=0)

    assert decision.accepted
    assert decision.delay == 8


def test_simulate_user_decision__acceptance_frequency(context):
    oracle = OracleUser(mode="stochastic", rates={key: math.log(2) / 5 for key in ContextKey.all()})
    rng = np.random.default_rng(0)

    decisions = [simulate_user_decision(oracle, 15, 1, GroundTruth(t_es=10), context, rng) for _ in range(10_000)]

    assert np.mean([decision.accepted for decision in decisions]) == pytest.approx(0.5, abs=0.02)


def test_simulate_user_decision__inactive_day(context):
    decision = simulate_user_decision(OracleUser(mode="deadline"), 12, 1, GroundTruth(), context, seed=0)

    assert decision.outcome == "rejected"
    assert decision.feedback is None


def test_simulate_user_decision__proposal_before_ready(context):
    decision = simulate_user_decision(OracleUser(mode="deadline"), 8, 1, GroundTruth(t_es=10), context, seed=0)

    assert decision.outcome == "rejected"
    assert decision.feedback is None


def test_simulate_user_decision__manual_delay_is_valid(context):
    oracle = OracleUser(mode="stochastic", rates={key: 50.0 for key in ContextKey.all()})
    rng = np.random.default_rng(3)

    for _ in range(200):
        decision = simulate_user_decision(oracle, 16, 1, GroundTruth(t_es=10), context, rng)
        assert decision.outcome == "rejected"
        assert 0 <= decision.manual_delay < decision.delay
        decision.feedback.validate()


def test_OracleUser__missing_rates():
    with pytest.raises(ConfigurationError):
        OracleUser(mode="both")


# Prequential runs


def test_run_prequential__too_few_days(evening_device, synthetic_market):
    dataset = Dataset.from_synthetic(evening_device, seed=1, n_days=10)

    with pytest.raises(ConfigurationError):
        run_prequential(dataset, synthetic_market)


def test_run_prequential__is_deterministic(synthetic_dataset, synthetic_market):
    first = run_prequential(synthetic_dataset, synthetic_market, seed=5)
    second = run_prequential(synthetic_dataset, synthetic_market, seed=5)

    assert first.model_dump() == second.model_dump()


def test_run_prequential__accounting(synthetic_dataset, synthetic_market):
    report = run_prequential(synthetic_dataset, synthetic_market, seed=5)

    accepted = [row for row in report.proposals if row.outcome == "accepted"]
    assert report.n_accepted + report.n_rejected == report.n_proposals == len(report.proposals)
    assert report.n_proposals <= report.n_predicted_active <= report.n_test_days
    assert report.n_accepted == len(accepted)
    assert report.spot_savings == pytest.approx(sum(row.delta_spot for row in accepted))
    assert report.reg_savings == pytest.approx(sum(row.delta_reg for row in accepted))
    assert 0.0 <= report.acceptance_rate <= 1.0
    assert report.seeds == [5]


@pytest.mark.parametrize("scenario", ["ideal", "predicted"])
def test_run_prequential__no_flexibility_makes_no_proposals(evening_device, synthetic_market, scenario):
    dataset = Dataset.from_synthetic(evening_device, seed=1, n_days=40)
    run = RunSettings(scenario=scenario, manual_flexibility=0)

    report = run_prequential(dataset, synthetic_market, run, seed=5)

    assert report.n_test_days == 8
    assert report.n_proposals == 0
    assert report.spot_savings == 0.0
    assert report.reg_savings == 0.0
    assert report.unconditional_savings == 0.0


def test_run_prequential__every_proposal_expects_savings(synthetic_dataset, synthetic_market):
    report = run_prequential(synthetic_dataset, synthetic_market, RunSettings(scenario="ideal"), seed=5)

    assert report.n_proposals > 0
    assert all(row.delay > 0 for row in report.proposals)


def test_run_prequential__savings_stay_a_share_of_the_base_cost(synthetic_dataset, synthetic_market):
    report = run_prequential(synthetic_dataset, synthetic_market, seed=5)

    assert -100.0 <= report.spot_savings_pct <= 100.0
    assert -100.0 <= report.reg_savings_pct <= 100.0


def test_Tally__percentages_of_a_negative_base():
    tally = _Tally()

    tally.count(delta_spot=0.5, delta_reg=-3.0, base_spot=0.1, base_reg=0.2)
    tally.count(delta_spot=0.2, delta_reg=1.0, base_spot=1.0, base_reg=-2.0)

    assert tally.accepted == 2
    assert tally.percentage(tally.spot_saved, tally.spot_base) == pytest.approx(100 * 0.7 / 1.5)
    assert tally.percentage(tally.reg_saved, tally.reg_base) == pytest.approx(100 * -2.0 / 5.0)


money = st.floats(-50.0, 50.0, allow_nan=False)


@given(st.lists(st.tuples(money, money, money, money), min_size=1, max_size=20))
def test_Tally__percentages_are_bounded(operations):
    tally = _Tally()
    for delta_spot, delta_reg, base_spot, base_reg in operations:
        tally.count(delta_spot, delta_reg, base_spot, base_reg)

    assert -100.0 - 1e-9 <= tally.percentage(tally.spot_saved, tally.spot_base) <= 100.0 + 1e-9
    assert -100.0 - 1e-9 <= tally.percentage(tally.reg_saved, tally.reg_base) <= 100.0 + 1e-9


def test_run_prequential__fully_flexible_user_accepts_everything(evening_device, synthetic_market):
    flexible = evening_device.model_copy(update={"flex_rate": 1e-9})
    dataset = Dataset.from_synthetic(flexible, seed=1, n_days=40)

    report = run_prequential(dataset, synthetic_market, RunSettings(scenario="ideal"), seed=5, oracle_mode="stochastic")

    assert report.n_proposals == 8
    assert report.acceptance_rate == 1.0


def test_run_prequential__one_level_makes_no_proposals(synthetic_dataset, synthetic_market):
    report = run_prequential(synthetic_dataset, synthetic_market, RunSettings(predictor="one_level"), seed=5)

    assert report.n_proposals == 0
    assert report.n_test_days == 12
    assert 0.0 <= report.day_accuracy <= 1.0


# Experiments


def test_experiment_variants():
    config = ExperimentConfig(mu_grid=[0.04, 0.08], flexibility_grid=[0, 4])

    variants = experiment_variants(config)

    assert [variant.name for variant in variants] == [
        "learning_rate/uniform",
        "learning_rate/adaptive-mu0.04",
        "learning_rate/adaptive-mu0.08",
        "predictor/two_level",
        "predictor/one_level",
        "flexibility/ideal-00h",
        "flexibility/predicted-00h",
        "flexibility/ideal-04h",
        "flexibility/predicted-04h",
        "offer/probabilistic",
        "offer/standard",
    ]
    assert variants[2].settings.flexibility.mu0 == 0.08
    assert variants[-1].settings.forecast.min_std == 2.0
    assert variants[-1].run.offer_kind == "standard"
    assert variants[-1].run.forecast_noise == 2.0
    assert variants[-2].run.forecast_noise == 2.0
    assert variants[0].run.forecast_noise is None


def test_run_comparisons__first_shuffle_does_not_depend_on_the_count():
    config = ExperimentConfig(categories=["regular_household"], n_days=40, experiments=["offer"], n_shuffles=1)

    single = run_comparisons(config, seed=3)
    several = run_comparisons(config.model_copy(update={"n_shuffles": 5}), seed=3)

    assert set(several.reports) == {"offer/probabilistic", "offer/standard"}
    assert len(several.runs["offer/standard"]) == 5
    for name in single.reports:
        assert single.runs[name][0].model_dump(exclude={"config_digest"}) == several.runs[name][0].model_dump(
            exclude={"config_digest"},
        )


def test_simulate__same_report_on_any_worker_count():
    config = ExperimentConfig(categories=["regular_household", "single_worker", "evening_laundry"], n_days=60)

    single = simulate(config, seed=8, workers=1)
    threaded = simulate(config, seed=8, workers=3)

    assert threaded.model_dump_json() == single.model_dump_json()


# Experiment trends

TREND_CATEGORIES = ["family_young_children", "single_worker", "shift_worker", "regular_household"]


@pytest.mark.slow()
def test_run_comparisons__adaptive_models_are_accepted_more_often():
    config = ExperimentConfig(categories=TREND_CATEGORIES, experiments=["learning_rate"], n_shuffles=2)

    reports = run_comparisons(config, seed=42).reports

    uniform = reports["learning_rate/uniform"]
    adaptive = [reports[f"learning_rate/adaptive-mu{mu}"] for mu in config.mu_grid]
    assert all(report.acceptance_rate >= uniform.acceptance_rate + 0.10 for report in adaptive)
    assert all(later.acceptance_rate >= earlier.acceptance_rate - 0.02 for earlier, later in zip(adaptive, adaptive[1:]))
    assert all(uniform.spot_savings_pct > report.spot_savings_pct for report in adaptive)
    assert all(-100.0 <= report.reg_savings_pct <= 100.0 for report in reports.values())


@pytest.mark.slow()
def test_run_comparisons__acceptance_peaks_at_a_few_hours_of_flexibility():
    config = ExperimentConfig(categories=TREND_CATEGORIES, experiments=["flexibility"], flexibility_grid=[0, 2, 4, 6, 10], n_shuffles=2)

    reports = run_comparisons(config, seed=42).reports

    acceptance = {hours: reports[f"flexibility/predicted-{hours:02d}h"].acceptance_rate for hours in config.flexibility_grid}
    assert acceptance[0] < acceptance[4]
    assert max(acceptance[4], acceptance[6]) > acceptance[10]


@pytest.mark.slow()
def test_run_comparisons__predicted_savings_follow_the_ideal_ones():
    config = ExperimentConfig(categories=TREND_CATEGORIES, experiments=["flexibility"], flexibility_grid=[0, 4, 8], n_shuffles=2)

    reports = run_comparisons(config, seed=42).reports

    assert reports["flexibility/ideal-00h"].spot_savings == reports["flexibility/predicted-00h"].spot_savings == 0.0
    for hours in (4, 8):
        ideal = reports[f"flexibility/ideal-{hours:02d}h"].spot_savings
        predicted = reports[f"flexibility/predicted-{hours:02d}h"].spot_savings
        assert 0.3 * ideal <= predicted <= ideal


@pytest.mark.slow()
def test_run_comparisons__probabilistic_offers_hold_up_under_forecast_noise():
    config = ExperimentConfig(categories=TREND_CATEGORIES, experiments=["offer"], n_shuffles=3)

    reports = run_comparisons(config, seed=42).reports

    assert reports["offer/probabilistic"].acceptance_rate >= reports["offer/standard"].acceptance_rate


@pytest.mark.slow()
def test_run_comparisons__two_level_prediction_beats_the_top_decile_baseline():
    config = ExperimentConfig(categories=["regular_household"], experiments=["predictor"], n_shuffles=1)

    reports = run_comparisons(config, seed=42).reports

    two_level, one_level = reports["predictor/two_level"], reports["predictor/one_level"]
    assert two_level.day_accuracy > one_level.day_accuracy
    assert two_level.hour_rmse < one_level.hour_rmse
    assert two_level.day_accuracy >= 0.70
    assert two_level.hour_rmse <= 4.5


def test_average_reports():
    reports = [
        RunReport(name="a", acceptance_rate=0.5, n_proposals=2, hour_rmse=None, seeds=[1]),
        RunReport(name="b", acceptance_rate=1.0, n_proposals=4, hour_rmse=3.0, seeds=[2]),
    ]

    average = average_reports("mean", reports)

    assert average.name == "mean"
    assert average.acceptance_rate == 0.75
    assert average.n_proposals == 6
    assert average.hour_rmse == 3.0
    assert average.seeds == [1, 2]


def test_average_reports__nothing_to_average():
    assert average_reports("empty", []) == RunReport(name="empty")


def test_load_experiment_config(tmp_path):
    path = tmp_path / "experiment.yaml"
    path.write_text("name: trial\nn_days: 40\ncategories: [regular_household]\nstart_date: 2017-03-01\n")

    config = load_experiment_config(path)

    assert config.name == "trial"
    assert config.n_days == 40
    assert config.start_date == datetime.date(2017, 3, 1)


def test_load_experiment_config__json(tmp_path):
    path = tmp_path / "experiment.json"
    path.write_text('{"name": "trial", "experiments": ["offer"]}')

    assert load_experiment_config(path).experiments == ["offer"]


def test_load_experiment_config__invalid(tmp_path):
    path = tmp_path / "experiment.yaml"
    path.write_text("n_days: -4\n")

    with pytest.raises(UsageError):
        load_experiment_config(path)


def test_load_experiment_config__missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_experiment_config(tmp_path / "missing.yaml")
