import datetime
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flex_scheduler.exceptions import ContractViolation, DomainError, InsufficientDataError, InvalidObservationError
from flex_scheduler.load_data import EventSeries, OperationEvent
from flex_scheduler.settings import FlexibilitySettings
from flex_scheduler.simulation import GroundTruth, OracleUser, simulate_user_decision
from flex_scheduler.user_flexibility import (
    ContextKey,
    FeedbackObservation,
    UniformFlexModel,
    UserFlexModel,
    acceptance_probability,
    fit_offline,
    fit_rate,
    flexibility_model_from_document,
    reinitialize,
    sgd_step,
    squared_error,
    squared_error_gradient,
    update_online,
)
from tests.factories import HOUR

MONDAY = datetime.datetime(2017, 1, 2, 10, tzinfo=datetime.timezone.utc)


def accepted(context, delay) -> FeedbackObservation:
    return FeedbackObservation(context=context, delay=delay, outcome="accepted")


def rejected(context, delay, manual_delay) -> FeedbackObservation:
    return FeedbackObservation(context=context, delay=delay, outcome="rejected", manual_delay=manual_delay)


def test_acceptance_probability__no_delay(context):
    assert acceptance_probability(UserFlexModel.constant(0.3), context, 0) == 1.0


def test_acceptance_probability__long_delay(context):
    assert acceptance_probability(UserFlexModel.constant(0.1), context, 200) < 1e-8


def test_acceptance_probability__half_life(context):
    model = UserFlexModel.constant(math.log(2) / 24)

    assert acceptance_probability(model, context, 24) == pytest.approx(0.5)


def test_acceptance_probability__negative_delay(context):
    with pytest.raises(DomainError):
        acceptance_probability(UserFlexModel.constant(0.1), context, -1)


def test_sgd_step__zero_residual():
    assert sgd_step(0.3, 0.5, 0.0, 1.0) == 0.3


def test_sgd_step__rate_is_floored():
    assert sgd_step(0.1, 0.5, 10.0, 1.0) == 1e-6


def test_sgd_step__gradient():
    assert squared_error_gradient(0.1, 10.0, 1.0) == pytest.approx(4.651, abs=1e-3)


def test_sgd_step__invalid_arguments():
    with pytest.raises(DomainError):
        sgd_step(0.0, 0.5, 1.0, 1.0)


@given(
    rate=st.floats(0.01, 1.0),
    x=st.floats(0.0, 20.0),
    y=st.floats(0.0, 1.0),
)
def test_squared_error_gradient__matches_finite_differences(rate, x, y):
    step = 1e-6
    numeric = (squared_error(rate + step, x, y) - squared_error(rate - step, x, y)) / (2 * step)

    assert squared_error_gradient(rate, x, y) == pytest.approx(numeric, rel=1e-4, abs=1e-6)


def test_update_online__acceptances_lower_the_rate(context):
    model = UserFlexModel.constant(0.2)
    rates = [model.bucket(context).rate]

    for _ in range(20):
        update_online(model, accepted(context, 5))
        rates.append(model.bucket(context).rate)

    assert all(later <= earlier for earlier, later in zip(rates, rates[1:]))
    assert model.acceptance_probability(context, 5) > 0.99


def test_update_online__rejections_raise_the_rate(context):
    model = UserFlexModel.constant(0.01)
    rates = [model.bucket(context).rate]

    for _ in range(10):
        update_online(model, rejected(context, 6, 5))
        rates.append(model.bucket(context).rate)

    assert all(later >= earlier for earlier, later in zip(rates, rates[1:]))
    assert model.acceptance_probability(context, 5) < 0.1


def test_update_online__rejection_regresses_on_the_proposed_delay(context):
    waited = UserFlexModel.constant(0.1)
    started_at_once = UserFlexModel.constant(0.1)

    update_online(waited, rejected(context, 6, 5))
    update_online(started_at_once, rejected(context, 6, 0))

    assert waited.bucket(context).rate == started_at_once.bucket(context).rate
    assert waited.bucket(context).rate == pytest.approx(sgd_step(0.1, 0.08, 6.0, 0.0))


def test_update_online__manual_rejection_target(context):
    model = UserFlexModel.constant(0.1, rejection_target="manual")

    update_online(model, rejected(context, 6, 2))

    assert model.bucket(context).rate == pytest.approx(sgd_step(0.1, 0.08, 2.0, 0.0))


def test_flexibility_model_from_document__settings_pick_the_rejection_target():
    document = UserFlexModel.constant(0.1).to_document()

    model = flexibility_model_from_document(document, FlexibilitySettings(rejection_target="manual"))

    assert model.rejection_target == "manual"


@pytest.mark.parametrize("time_scale", [1.0, 5.0])
def test_update_online__steps_in_units_of_the_time_scale(context, time_scale):
    model = UserFlexModel.constant(0.1, time_scale=time_scale)

    update_online(model, accepted(context, 5))

    expected = sgd_step(0.1 * time_scale, 0.08, 5 / time_scale, 1.0) / time_scale
    assert model.bucket(context).rate == pytest.approx(expected)


def test_update_online__converges_to_the_true_rate(context):
    true_rate = 0.12
    oracle = OracleUser(mode="both", rates={key: true_rate for key in ContextKey.all()})
    truth = GroundTruth(t_es=10, next_ready=34)

    errors = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        model = UserFlexModel.constant(0.04, time_scale=5.0, reset_period="never")
        for _ in range(300):
            delay = int(rng.integers(1, 11))
            decision = simulate_user_decision(oracle, truth.t_es + delay, 2, truth, context, rng)
            update_online(model, decision.feedback)
        errors.append(abs(model.bucket(context).rate - true_rate) / true_rate)

    assert np.mean(errors) <= 0.3


def test_update_online__learning_rate_decays(context):
    model = UserFlexModel.constant(0.2, mu0=0.08, decay=50.0)

    for _ in range(3):
        update_online(model, accepted(context, 1))

    assert model.bucket(context).n == 3
    assert model.bucket(context).learning_rate(model.decay) == pytest.approx(0.08 / (1 + 3 / 50))
    assert model.bucket(ContextKey("weekend", "summer")).n == 0


def test_update_online__only_the_observed_context_changes(context):
    model = UserFlexModel.constant(0.2)

    update_online(model, accepted(context, 5))

    assert model.bucket(context).rate < 0.2
    assert {label: rate for label, rate in model.rates().items() if label != context.label} == {
        key.label: 0.2 for key in ContextKey.all() if key != context
    }


def test_update_online__zero_delay_acceptance_keeps_the_rate(context):
    model = UserFlexModel.constant(0.2)

    update_online(model, accepted(context, 0))

    assert model.bucket(context).rate == pytest.approx(0.2)


@pytest.mark.parametrize(
    "observation",
    [
        FeedbackObservation(context=ContextKey("weekday", "winter"), delay=-1, outcome="accepted"),
        FeedbackObservation(context=ContextKey("weekday", "winter"), delay=4, outcome="rejected"),
        FeedbackObservation(context=ContextKey("weekday", "winter"), delay=4, outcome="rejected", manual_delay=4),
        FeedbackObservation(context=ContextKey("weekday", "winter"), delay=4, outcome="rejected", manual_delay=-1),
    ],
)
def test_update_online__invalid_observation(observation):
    with pytest.raises(InvalidObservationError):
        update_online(UserFlexModel.constant(0.2), observation)


def test_reinitialize(context):
    model = UserFlexModel.constant(0.2)
    for _ in range(3):
        update_online(model, accepted(context, 2))
    rate = model.bucket(context).rate

    reinitialize(model, datetime.date(2017, 3, 1))
    reinitialize(model, datetime.date(2017, 3, 1))

    bucket = model.bucket(context)
    assert bucket.n == 0
    assert bucket.rate == rate
    assert bucket.last_reset == datetime.date(2017, 3, 1)
    assert bucket.learning_rate(model.decay) == bucket.mu0


def test_maybe_reinitialize__resets_once_per_season(context):
    model = UserFlexModel.constant(0.2)

    model.maybe_reinitialize(datetime.date(2017, 1, 15))
    update_online(model, accepted(context, 2))
    model.maybe_reinitialize(datetime.date(2017, 2, 20))

    assert model.bucket(context).n == 1

    model.maybe_reinitialize(datetime.date(2017, 3, 1))

    assert model.bucket(context).n == 0


def test_maybe_reinitialize__december_starts_the_next_winter(context):
    model = UserFlexModel.constant(0.2)

    model.maybe_reinitialize(datetime.date(2016, 12, 20))
    update_online(model, accepted(context, 2))
    model.maybe_reinitialize(datetime.date(2017, 1, 5))

    assert model.bucket(context).n == 1


def test_maybe_reinitialize__never(context):
    model = UserFlexModel.constant(0.2, reset_period="never")
    update_online(model, accepted(context, 2))

    model.maybe_reinitialize(datetime.date(2017, 6, 1))

    assert model.bucket(context).n == 1


def test_fit_rate__exponential_draws():
    intervals = np.random.default_rng(3).exponential(scale=20.0, size=2000)

    assert fit_rate(intervals) == pytest.approx(1 / intervals.mean(), rel=0.1)


def test_fit_rate__recovers_exponential_rates():
    true_rate = 0.05
    errors = [
        abs(fit_rate(np.random.default_rng(seed).exponential(scale=1 / true_rate, size=500)) - true_rate) / true_rate
        for seed in range(20)
    ]

    assert np.mean(errors) <= 0.15


def test_fit_rate__no_intervals():
    with pytest.raises(InsufficientDataError):
        fit_rate([])


def test_fit_offline__identical_intervals():
    events = EventSeries(
        device_id="device",
        events=tuple(
            OperationEvent(ready_time=MONDAY + day * 24 * HOUR, duration_hours=1, energy_per_hour=(1.0,)) for day in range(5)
        ),
    )

    model = fit_offline(events)

    assert len(model.rates()) == 8
    assert all(rate == pytest.approx(1 / 24, rel=0.5) for rate in model.rates().values())


def test_fit_offline__buckets_step_in_the_configured_unit():
    events = EventSeries(
        device_id="device",
        events=tuple(
            OperationEvent(ready_time=MONDAY + hours * HOUR, duration_hours=1, energy_per_hour=(1.0,))
            for hours in (0, 20, 50, 75, 100, 130, 170)
        ),
    )

    model = fit_offline(events, settings=FlexibilitySettings(time_unit=2.0))

    assert {model.bucket(key).time_scale for key in ContextKey.all()} == {2.0}


def test_fit_offline__is_deterministic():
    events = EventSeries(
        device_id="device",
        events=tuple(
            OperationEvent(ready_time=MONDAY + hours * HOUR, duration_hours=1, energy_per_hour=(1.0,))
            for hours in (0, 20, 50, 75, 100, 130, 170)
        ),
    )

    assert fit_offline(events, seed=4).rates() == fit_offline(events, seed=4).rates()


def test_fit_offline__single_operation():
    events = EventSeries(device_id="device", events=(OperationEvent(ready_time=MONDAY, duration_hours=1, energy_per_hour=(1.0,)),))

    with pytest.raises(InsufficientDataError):
        fit_offline(events)


def test_UniformFlexModel(context):
    model = UniformFlexModel()

    assert model.acceptance_probability(context, 0) == 1.0
    assert model.acceptance_probability(context, 500) == 1.0
    update_online(model, accepted(context, 3))
    assert model.rates() == {}


def test_UniformFlexModel__negative_delay(context):
    with pytest.raises(DomainError):
        UniformFlexModel().acceptance_probability(context, -0.5)


def test_UniformFlexModel__document_round_trip():
    assert isinstance(flexibility_model_from_document(UniformFlexModel().to_document()), UniformFlexModel)


def test_UserFlexModel__document_round_trip(context):
    model = UserFlexModel.constant(0.2)
    model.maybe_reinitialize(datetime.date(2017, 1, 15))
    update_online(model, accepted(context, 4))

    restored = flexibility_model_from_document(model.to_document())

    assert isinstance(restored, UserFlexModel)
    assert restored.rates() == model.rates()
    assert restored.bucket(context).n == 1
    assert restored.bucket(context).last_reset == datetime.date(2017, 1, 15)


def test_UserFlexModel__missing_bucket(context):
    with pytest.raises(ContractViolation):
        UserFlexModel(buckets={}).bucket(context)


def test_ContextKey__from_date():
    assert ContextKey.from_date(datetime.date(2017, 1, 7)) == ContextKey("weekend", "winter")
    assert ContextKey.from_date(datetime.datetime(2017, 7, 12, 8)) == ContextKey("weekday", "summer")


def test_ContextKey__from_label():
    assert ContextKey.from_label("weekday-autumn") == ContextKey("weekday", "autumn")
    assert ContextKey("weekend", "spring").label == "weekend-spring"


def test_ContextKey__from_label__unknown():
    with pytest.raises(ContractViolation):
        ContextKey.from_label("holiday-winter")


def test_ContextKey__all():
    keys = ContextKey.all()

    assert len(keys) == 8
    assert len(set(keys)) == 8
