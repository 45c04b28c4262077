"""
Prequential (test-then-train) evaluation of one device.

The first share of the days trains the forecast and flexibility models. Each later day is
forecast, scheduled and decided by the simulated user before its outcome is used to update
the models.
"""

import datetime
import logging
from dataclasses import dataclass, field

from ..exceptions import ConfigurationError, InfeasibleFlexOfferError, InsufficientDataError, NoFeasibleScheduleError
from ..flexoffer import ProbabilisticFlexOffer, collapse_to_standard, make_flexoffer
from ..forecast import (
    DayPrediction,
    ObservedDay,
    evaluate_predictions,
    predict_one_level,
    predict_two_level,
    prequential_update,
    train_forecast_models,
    train_one_level,
)
from ..load_data import DeviceSignature, EventSeries, extract_events, extract_signature, ingest_load_csv
from ..market import MarketSeries, reg_contribution, spot_cost
from ..schemas import DatasetSource, ProposalRowDocument, RunReport, SyntheticDeviceConfig
from ..scheduler import schedule
from ..settings import RunSettings, Settings
from ..typing import FlexibilityModel, OracleMode, Optional
from ..user_flexibility import ContextKey, UniformFlexModel, fit_offline
from ..utils import derive_rng, derive_seed
from .oracle import GroundTruth, OracleUser, simulate_user_decision
from .synthetic import generate_synthetic, true_rate

__all__ = [
    "Dataset",
    "observe_days",
    "run_prequential",
]


logger = logging.getLogger(__name__)

HOUR = datetime.timedelta(hours=1)


@dataclass(frozen=True)
class Dataset:
    """Ground-truth operations of one device over a span of whole days."""

    device_id: str
    events: EventSeries
    start_date: datetime.date
    n_days: int
    true_rates: dict[ContextKey, float] = field(default_factory=dict)
    default_oracle_mode: OracleMode = "both"

    @classmethod
    def from_synthetic(
        cls,
        config: SyntheticDeviceConfig,
        seed: int,
        n_days: int,
        start_date: datetime.date = datetime.date(2017, 1, 1),
    ) -> "Dataset":
        _, events = generate_synthetic(config, seed, n_days, start_date)
        return cls(
            device_id=config.category,
            events=events,
            start_date=start_date,
            n_days=n_days,
            true_rates={context: true_rate(config, context.label) for context in ContextKey.all()},
        )

    @classmethod
    def from_source(cls, source: DatasetSource, settings: Optional[Settings] = None) -> "Dataset":
        settings = settings or Settings()
        try:
            with open(source.load_csv, "rb") as file:
                series = ingest_load_csv(file, device_id=source.device_id)
        except OSError as error:
            msg = f"Cannot read load data for {source.device_id}: {error}"
            raise ConfigurationError(msg) from error

        events = extract_events(series, settings.detection.on_threshold, settings.detection.idle_gap)
        rates = {context: source.oracle_rate for context in ContextKey.all()} if source.oracle_rate else {}
        return cls(
            device_id=source.device_id,
            events=events,
            start_date=series.start.date(),
            n_days=len(series) // 24,
            true_rates=rates,
            default_oracle_mode="deadline",
        )

    def day(self, offset: int) -> datetime.date:
        return self.start_date + datetime.timedelta(days=offset)

    def midnight(self, offset: int) -> datetime.datetime:
        return datetime.datetime.combine(self.day(offset), datetime.time(), tzinfo=datetime.timezone.utc)


def observe_days(dataset: Dataset, horizon: int = 48) -> tuple[list[ObservedDay], list[GroundTruth]]:
    """
    The first operation of each day, with the next ready action in hours from that midnight.
    Observed latest ends are capped at the horizon; the ground truth keeps them uncapped.
    """
    events = list(dataset.events)
    observed: list[ObservedDay] = []
    truths: list[GroundTruth] = []
    cursor = 0
    for offset in range(dataset.n_days):
        midnight = dataset.midnight(offset)
        tomorrow = midnight + datetime.timedelta(days=1)
        while cursor < len(events) and events[cursor].ready_time < midnight:
            cursor += 1

        if cursor == len(events) or events[cursor].ready_time >= tomorrow:
            observed.append(ObservedDay(day=dataset.day(offset), active=False))
            truths.append(GroundTruth())
            continue

        t_es = int((events[cursor].ready_time - midnight) / HOUR)
        next_ready = int((events[cursor + 1].ready_time - midnight) / HOUR) if cursor + 1 < len(events) else None
        t_le = horizon - 1 if next_ready is None else min(next_ready, horizon - 1)
        observed.append(ObservedDay(day=dataset.day(offset), active=True, t_es=t_es, t_le=t_le))
        truths.append(GroundTruth(t_es=t_es, next_ready=next_ready))

    return observed, truths


@dataclass
class _Tally:
    proposals: list[ProposalRowDocument] = field(default_factory=list)
    accepted: int = 0
    feedback: int = 0
    spot_saved: float = 0.0
    reg_saved: float = 0.0
    spot_base: float = 0.0
    reg_base: float = 0.0
    unconditional: float = 0.0

    def count(self, delta_spot: float, delta_reg: float, base_spot: float, base_reg: float) -> None:
        """
        Add an accepted operation. Each base is the larger of the unshifted cost and the saving
        in magnitude, so neither percentage leaves [-100, 100].
        """
        self.accepted += 1
        self.spot_saved += delta_spot
        self.reg_saved += delta_reg
        self.spot_base += max(abs(base_spot), abs(delta_spot))
        self.reg_base += max(abs(base_reg), abs(delta_reg))

    def percentage(self, saved: float, base: float) -> float:
        return 100 * saved / base if base else 0.0


def _flex_model(run: RunSettings, settings: Settings, training: EventSeries, seed: int) -> FlexibilityModel:
    if run.flex_model == "uniform":
        return UniformFlexModel()
    flexibility = settings.flexibility
    return fit_offline(training, mu0=flexibility.mu0, epochs=flexibility.epochs, seed=seed, settings=flexibility)


def _offer(
    run: RunSettings,
    forecast: Optional[ProbabilisticFlexOffer],
    observed: ObservedDay,
    signature: DeviceSignature,
) -> Optional[ProbabilisticFlexOffer]:
    if run.manual_flexibility == 0:
        # Nothing to shift.
        return None

    if run.scenario == "ideal":
        if not observed.active:
            return None
        t_le = observed.t_le if run.manual_flexibility is None else observed.t_es + signature.length + run.manual_flexibility
        if t_le - observed.t_es < signature.length:
            return None
        pfo = make_flexoffer(observed.t_es, t_le, signature).as_probabilistic()
    else:
        if forecast is None:
            return None
        pfo = forecast
        if run.manual_flexibility is not None:
            pfo = pfo.with_manual_flexibility(run.manual_flexibility)

    if run.offer_kind == "standard":
        pfo = collapse_to_standard(pfo).as_probabilistic()
    return pfo


def _one_level_report(
    name: str,
    train_days: list[ObservedDay],
    test_days: list[ObservedDay],
    seed: int,
    digest: str,
) -> RunReport:
    """Prediction metrics of the 1-level baseline. It makes no proposals."""
    model = train_one_level(train_days)
    predictions = predict_one_level(model, [observed.day for observed in test_days])
    score = evaluate_predictions(predictions, test_days)
    return RunReport(
        name=name,
        day_accuracy=score.day_accuracy,
        hour_rmse=score.hour_rmse,
        n_test_days=len(test_days),
        n_predicted_active=sum(prediction.active for prediction in predictions),
        seeds=[seed],
        config_digest=digest,
    )


def run_prequential(
    dataset: Dataset,
    market: MarketSeries,
    run: Optional[RunSettings] = None,
    settings: Optional[Settings] = None,
    *,
    seed: int = 42,
    oracle_mode: Optional[OracleMode] = None,
    name: str = "run",
    config_digest: str = "",
) -> RunReport:
    """
    Train on the first days of `dataset`, then forecast, schedule, decide and learn day by day.

    Savings are counted on accepted proposals only, against the cost of running the device
    at the user's actual ready hour. Market day `i` prices dataset day `i`.
    """
    run = run or RunSettings()
    settings = settings or Settings()
    simulation = settings.simulation
    if dataset.n_days < simulation.min_days:
        msg = f"Dataset {dataset.device_id} spans {dataset.n_days} days, at least {simulation.min_days} are needed."
        raise ConfigurationError(msg)

    observed, truths = observe_days(dataset, settings.forecast.horizon)
    split = min(max(round(dataset.n_days * simulation.train_fraction), 1), dataset.n_days - 1)
    train_days, test_days = observed[:split], observed[split:]
    if run.predictor == "one_level":
        return _one_level_report(name, train_days, test_days, seed, config_digest)

    training_events = dataset.events.between(dataset.midnight(0), dataset.midnight(split))
    if not training_events:
        msg = f"Dataset {dataset.device_id} has no operations in its training days."
        raise InsufficientDataError(msg)

    signature = extract_signature(training_events)
    models = train_forecast_models(train_days, settings.forecast)
    flex = _flex_model(run, settings, training_events, derive_seed(seed, 1))
    oracle = OracleUser(mode=oracle_mode or dataset.default_oracle_mode, rates=dataset.true_rates)
    rng = derive_rng(seed, 2)
    noise = derive_rng(seed, 3)
    window_hours = settings.forecast.horizon + signature.length + (run.manual_flexibility or 0)
    skip_first_hour = settings.market.skip_first_reg_hour

    tally = _Tally()
    predictions: list[DayPrediction] = []
    for offset in range(split, dataset.n_days):
        today, truth = observed[offset], truths[offset]
        context = ContextKey.from_date(today.day)
        flex.maybe_reinitialize(today.day)

        prediction = predict_two_level(models, today.day)
        predictions.append(prediction)
        shift = float(noise.normal(0.0, run.forecast_noise)) if run.forecast_noise else 0.0
        forecast = models.forecast(today.day, signature.length, es_shift=shift) if prediction.active else None
        window = market.window(offset, window_hours)

        try:
            offered = None if forecast is None else ProbabilisticFlexOffer.from_forecast(forecast, signature)
            pfo = _offer(run, offered, today, signature)
            proposal = None
            if pfo is not None:
                proposal = schedule(
                    pfo,
                    window,
                    flex,
                    context,
                    dataset.device_id,
                    day=today.day,
                    skip_first_hour=skip_first_hour,
                    audit=False,
                )
        except (InfeasibleFlexOfferError, NoFeasibleScheduleError) as error:
            logger.debug("No proposal for %s on %s: %s", dataset.device_id, today.day, error)
            proposal = None

        if proposal is not None and proposal.expected_utility <= 0:
            logger.debug("No shift of %s on %s is expected to save anything.", dataset.device_id, today.day)
            proposal = None

        if proposal is not None:
            acceptance = flex.acceptance_probability(context, max(proposal.delay, 0))
            decision = simulate_user_decision(oracle, proposal.chosen_t, signature.length, truth, context, rng)

            delta_spot = delta_reg = 0.0
            if truth.t_es is not None and decision.delay >= 0:
                base_spot = spot_cost(signature.per_hour_demand, truth.t_es, window)
                base_reg = reg_contribution(signature.per_hour_demand, truth.t_es, window, skip_first_hour=skip_first_hour)
                delta_spot = base_spot - spot_cost(signature.per_hour_demand, proposal.chosen_t, window)
                delta_reg = base_reg - reg_contribution(
                    signature.per_hour_demand,
                    proposal.chosen_t,
                    window,
                    skip_first_hour=skip_first_hour,
                )
                tally.unconditional += delta_spot + delta_reg
                if decision.accepted:
                    tally.count(delta_spot, delta_reg, base_spot, base_reg)

            if decision.feedback is not None:
                flex.update_online(decision.feedback)
                tally.feedback += 1

            tally.proposals.append(
                ProposalRowDocument(
                    device=dataset.device_id,
                    date=today.day.isoformat(),
                    t_es=proposal.reference_t_es if truth.t_es is None else truth.t_es,
                    chosen_t=proposal.chosen_t,
                    delay=proposal.delay if truth.t_es is None else decision.delay,
                    delta_spot=delta_spot,
                    delta_reg=delta_reg,
                    acceptance_prob=acceptance,
                    outcome=decision.outcome,
                ),
            )

        prequential_update(models, today)

    score = evaluate_predictions(predictions, test_days)
    n_proposals = len(tally.proposals)
    logger.info(
        "%s/%s: %d proposals, %d accepted, day accuracy %.3f.",
        name,
        dataset.device_id,
        n_proposals,
        tally.accepted,
        score.day_accuracy,
    )
    return RunReport(
        name=name,
        acceptance_rate=tally.accepted / n_proposals if n_proposals else 0.0,
        spot_savings_pct=tally.percentage(tally.spot_saved, tally.spot_base),
        reg_savings_pct=tally.percentage(tally.reg_saved, tally.reg_base),
        day_accuracy=score.day_accuracy,
        hour_rmse=score.hour_rmse,
        n_proposals=n_proposals,
        n_accepted=tally.accepted,
        n_rejected=n_proposals - tally.accepted,
        n_test_days=len(test_days),
        n_predicted_active=sum(prediction.active for prediction in predictions),
        n_feedback=tally.feedback,
        spot_savings=tally.spot_saved,
        reg_savings=tally.reg_saved,
        unconditional_savings=tally.unconditional,
        rates=flex.rates(),
        true_rates={context.label: rate for context, rate in sorted(dataset.true_rates.items())},
        seeds=[seed],
        config_digest=config_digest,
        proposals=tally.proposals,
    )
