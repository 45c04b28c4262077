"""
Experiment files and the comparative experiments run over them.

Every experiment variant runs the prequential evaluation on each dataset against a number of
day-shuffled copies of the market, and averages the results. Runs are independent and seeded
by their position, so they may execute in parallel and are merged in submission order.
"""

import datetime
import json
import logging
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError

from ..exceptions import ConfigurationError, UsageError
from ..market import MarketSeries, generate_synthetic_market, ingest_market_csv, shuffle_market
from ..schemas import ExperimentConfig, RunReport
from ..settings import RunSettings, Settings
from ..typing import Any, Callable, ExperimentName, Optional, Union
from ..utils import config_digest, derive_seed, run_tasks
from .prequential import Dataset, run_prequential
from .synthetic import builtin_categories

__all__ = [
    "DEFAULT_FORECAST_NOISE",
    "ComparisonBundle",
    "Variant",
    "average_reports",
    "experiment_variants",
    "load_experiment_config",
    "load_market",
    "resolve_datasets",
    "run_comparisons",
    "simulate",
]


logger = logging.getLogger(__name__)

DEFAULT_FORECAST_NOISE = 2.0
"""Deviation (hours) of the earliest-start noise when comparing probabilistic and standard flex-offers."""


@dataclass(frozen=True)
class Variant:
    experiment: ExperimentName
    name: str
    run: RunSettings
    settings: Settings


@dataclass(frozen=True)
class ComparisonBundle:
    name: str
    reports: dict[str, RunReport]
    """Variant name to its result averaged over every shuffle and dataset."""

    runs: dict[str, list[RunReport]] = field(default_factory=dict)
    """Variant name to its result per market shuffle, averaged over datasets."""

    def experiment(self, experiment: ExperimentName) -> dict[str, RunReport]:
        return {name: report for name, report in self.reports.items() if name.startswith(f"{experiment}/")}


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read a JSON or YAML (by suffix) experiment file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        msg = f"Cannot read experiment file {path}: {error}"
        raise ConfigurationError(msg) from error

    try:
        data = yaml.safe_load(text) if path.suffix in {".yaml", ".yml"} else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as error:
        msg = f"Experiment file {path} is not valid: {error}"
        raise UsageError(msg) from error

    try:
        return ExperimentConfig(**(data or {}))
    except (TypeError, ValidationError) as error:
        msg = f"Invalid experiment file {path}: {error}"
        raise UsageError(msg) from error


def resolve_datasets(config: ExperimentConfig, seed: int) -> list[Dataset]:
    """
    Synthetic datasets for the named built-in categories and the inline device configurations,
    followed by the recorded datasets. No names and no devices mean every built-in category.
    """
    categories = builtin_categories()
    names = config.categories or ([] if config.devices or config.datasets else list(categories))
    unknown = sorted(set(names) - set(categories))
    if unknown:
        msg = f"Unknown household categories: {', '.join(unknown)}."
        raise ConfigurationError(msg)

    synthetic = [categories[name] for name in names] + list(config.devices)
    datasets = [
        Dataset.from_synthetic(device, derive_seed(seed, 100, index), config.n_days, config.start_date)
        for index, device in enumerate(synthetic)
    ]
    datasets.extend(Dataset.from_source(source, config.settings) for source in config.datasets)
    return datasets


def load_market(config: ExperimentConfig, seed: int, path: Optional[Union[str, Path]] = None) -> MarketSeries:
    path = path or config.market_csv
    if path is None:
        start = datetime.datetime.combine(config.start_date, datetime.time(), tzinfo=datetime.timezone.utc)
        return generate_synthetic_market(derive_seed(seed, 200), config.n_days, start)

    try:
        with open(path, "rb") as file:
            return ingest_market_csv(file)
    except OSError as error:
        msg = f"Cannot read market data {path}: {error}"
        raise ConfigurationError(msg) from error


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def _mean_by_key(mappings: list[dict[str, float]]) -> dict[str, float]:
    keys = sorted({key for mapping in mappings for key in mapping})
    return {key: _mean([mapping[key] for mapping in mappings if key in mapping]) for key in keys}


def average_reports(name: str, reports: list[RunReport]) -> RunReport:
    """Mean of the rates and percentages, sum of the counts and absolute savings."""
    if not reports:
        return RunReport(name=name)

    rmse = [report.hour_rmse for report in reports if report.hour_rmse is not None]
    return RunReport(
        name=name,
        acceptance_rate=_mean([report.acceptance_rate for report in reports]),
        spot_savings_pct=_mean([report.spot_savings_pct for report in reports]),
        reg_savings_pct=_mean([report.reg_savings_pct for report in reports]),
        day_accuracy=_mean([report.day_accuracy for report in reports]),
        hour_rmse=_mean(rmse) if rmse else None,
        n_proposals=sum(report.n_proposals for report in reports),
        n_accepted=sum(report.n_accepted for report in reports),
        n_rejected=sum(report.n_rejected for report in reports),
        n_test_days=sum(report.n_test_days for report in reports),
        n_predicted_active=sum(report.n_predicted_active for report in reports),
        n_feedback=sum(report.n_feedback for report in reports),
        spot_savings=sum(report.spot_savings for report in reports),
        reg_savings=sum(report.reg_savings for report in reports),
        unconditional_savings=sum(report.unconditional_savings for report in reports),
        rates=_mean_by_key([report.rates for report in reports]),
        true_rates=_mean_by_key([report.true_rates for report in reports]),
        seeds=[seed for report in reports for seed in report.seeds],
        config_digest=reports[0].config_digest,
        proposals=[row for report in reports for row in report.proposals],
    )


def _with(settings: Settings, section: str, **changes: Any) -> Settings:
    return settings.model_copy(update={section: getattr(settings, section).model_copy(update=changes)})


def experiment_variants(config: ExperimentConfig) -> list[Variant]:
    run, settings = config.run, config.settings
    variants: list[Variant] = []

    if "learning_rate" in config.experiments:
        uniform = run.model_copy(update={"flex_model": "uniform"})
        variants.append(Variant("learning_rate", "learning_rate/uniform", uniform, settings))
        adaptive = run.model_copy(update={"flex_model": "adaptive"})
        for mu in config.mu_grid:
            tuned = _with(settings, "flexibility", mu0=mu)
            variants.append(Variant("learning_rate", f"learning_rate/adaptive-mu{mu:g}", adaptive, tuned))

    if "predictor" in config.experiments:
        for predictor in ("two_level", "one_level"):
            variants.append(
                Variant("predictor", f"predictor/{predictor}", run.model_copy(update={"predictor": predictor}), settings),
            )

    if "flexibility" in config.experiments:
        for hours in config.flexibility_grid:
            for scenario in ("ideal", "predicted"):
                changed = run.model_copy(update={"scenario": scenario, "manual_flexibility": hours})
                variants.append(Variant("flexibility", f"flexibility/{scenario}-{hours:02d}h", changed, settings))

    if "offer" in config.experiments:
        noise = DEFAULT_FORECAST_NOISE if config.forecast_noise is None else config.forecast_noise
        noisy = _with(settings, "forecast", min_std=max(settings.forecast.min_std, noise))
        for offer_kind in ("probabilistic", "standard"):
            changed = run.model_copy(update={"offer_kind": offer_kind, "forecast_noise": noise})
            variants.append(Variant("offer", f"offer/{offer_kind}", changed, noisy))

    return variants


def run_comparisons(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> ComparisonBundle:
    """
    Run every variant of the configured experiments on every dataset against `N` market
    shuffles, shuffle `i` using seed `seed + i`.
    """
    seed = config.seed if seed is None else seed
    n_shuffles = config.n_shuffles or config.settings.simulation.n_shuffles
    workers = workers or config.settings.simulation.workers
    digest = config_digest({"config": config.model_dump(mode="json"), "seed": seed})

    datasets = resolve_datasets(config, seed)
    if not datasets:
        msg = "The experiment has no datasets."
        raise ConfigurationError(msg)
    market = load_market(config, seed)
    shuffles = [shuffle_market(market, seed + index) for index in range(n_shuffles)]
    variants = experiment_variants(config)

    tasks: list[Callable[[], RunReport]] = [
        partial(
            run_prequential,
            dataset,
            shuffled,
            variant.run,
            variant.settings,
            seed=derive_seed(seed, 300, index, shuffle),
            oracle_mode=config.oracle_mode,
            name=variant.name,
            config_digest=digest,
        )
        for variant in variants
        for shuffle, shuffled in enumerate(shuffles)
        for index, dataset in enumerate(datasets)
    ]
    logger.info("Running %d variants over %d datasets and %d shuffles.", len(variants), len(datasets), n_shuffles)
    results = iter(run_tasks(tasks, workers))

    reports: dict[str, RunReport] = {}
    runs: dict[str, list[RunReport]] = {}
    for variant in variants:
        per_shuffle = [average_reports(variant.name, [next(results) for _ in datasets]) for _ in shuffles]
        runs[variant.name] = per_shuffle
        reports[variant.name] = average_reports(variant.name, per_shuffle)

    return ComparisonBundle(name=config.name, reports=reports, runs=runs)


def simulate(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    market: Optional[MarketSeries] = None,
) -> RunReport:
    """The configured run on every dataset against the unshuffled market, averaged over datasets."""
    seed = config.seed if seed is None else seed
    workers = workers or config.settings.simulation.workers
    digest = config_digest({"config": config.model_dump(mode="json"), "seed": seed})

    datasets = resolve_datasets(config, seed)
    if not datasets:
        msg = "The experiment has no datasets."
        raise ConfigurationError(msg)
    market = market or load_market(config, seed)

    tasks: list[Callable[[], RunReport]] = [
        partial(
            run_prequential,
            dataset,
            market,
            config.run,
            config.settings,
            seed=derive_seed(seed, 300, index, 0),
            oracle_mode=config.oracle_mode,
            name=config.name,
            config_digest=digest,
        )
        for index, dataset in enumerate(datasets)
    ]
    return average_reports(config.name, run_tasks(tasks, workers))
