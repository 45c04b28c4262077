"""Command-line entry point: `flex-scheduler <command> [flags]`."""

import argparse
import asyncio
import datetime
import logging
import sys
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError

from . import __version__
from .exceptions import DataError, FlexSchedulerError, NextLogicBlock, ParseError, RangeError, UsageError
from .flexoffer import ProbabilisticFlexOffer
from .forecast import ForecastModels, train_forecast_models
from .load_data import DeviceSignature, LoadSeries, extract_events, extract_signature, ingest_load_csv
from .market import MarketSeries, ingest_market_csv
from .pipeline import BasePipeline
from .report import dumps, write_document, write_report
from .schemas import ExperimentConfig, ModelBundleDocument, SeriesDocument
from .scheduler import schedule
from .settings import Settings
from .simulation import Dataset, load_experiment_config, observe_days, run_comparisons, simulate
from .typing import Any, ClassVar, DataConditional, DataDict, Optional, PipelinesDict, Sequence, SeriesKind
from .user_flexibility import ContextKey, fit_offline, flexibility_model_from_document

__all__ = [
    "CommandPipeline",
    "build_parser",
    "main",
    "run",
]


logger = logging.getLogger(__name__)

COMMANDS = ("ingest", "signature", "train", "schedule", "simulate", "compare")


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Experiment file (JSON or YAML).")
    common.add_argument("--seed", type=int, default=None, help="Base seed. Defaults to the experiment's, or 42.")
    common.add_argument("--out", type=Path, help="Output file or directory. Prints to stdout when omitted.")
    common.add_argument("--device", help="Device identifier.")
    common.add_argument("--date", type=datetime.date.fromisoformat, help="Day to schedule (YYYY-MM-DD).")
    common.add_argument("--input", type=Path, help="Load or market CSV, or an ingested series JSON.")
    common.add_argument("--kind", choices=["load", "market"], default="load", help="Kind of series to ingest.")
    common.add_argument("--models", type=Path, help="Model bundle written by `train`.")
    common.add_argument("--market", type=Path, help="Market CSV or ingested market JSON.")
    common.add_argument("--workers", type=int, default=None, help="Parallel simulation runs.")
    common.add_argument("-v", "--verbose", action="count", default=0, help="INFO logging; twice for DEBUG.")

    parser = _ArgumentParser(prog="flex-scheduler", description="Demand-response scheduling with user flexibility.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    descriptions = {
        "ingest": "Validate a load or market CSV into a series JSON.",
        "signature": "Extract the device signature from load data.",
        "train": "Fit forecast and user flexibility models.",
        "schedule": "Propose a start time for one device and day.",
        "simulate": "Run the prequential evaluation of an experiment.",
        "compare": "Run the comparative experiments.",
    }
    for command in COMMANDS:
        commands.add_parser(command, parents=[common], help=descriptions[command], description=descriptions[command])
    return parser


# Argument models


class _Arguments(BaseModel):
    model_config = ConfigDict(extra="ignore", arbitrary_types_allowed=True)


class IngestArguments(_Arguments):
    input: Path
    kind: SeriesKind = "load"
    device: str = "device"
    out: Optional[Path] = None


class SignatureArguments(_Arguments):
    input: Path
    config: Optional[Path] = None
    out: Optional[Path] = None


class TrainArguments(_Arguments):
    input: Path
    device: Optional[str] = None
    config: Optional[Path] = None
    seed: int = 42
    out: Optional[Path] = None


class ScheduleArguments(_Arguments):
    models: Path
    market: Path
    date: datetime.date
    device: Optional[str] = None
    config: Optional[Path] = None
    out: Optional[Path] = None


class ExperimentArguments(_Arguments):
    config: Optional[Path] = None
    seed: Optional[int] = None
    market: Optional[Path] = None
    workers: Optional[int] = None
    out: Path = Path("reports")


# Steps


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as error:
        msg = f"Cannot read {path}: {error}"
        raise DataError(msg) from error


def _read_json_document(path: Path, document_class: type[BaseModel]) -> Any:
    try:
        return document_class.model_validate_json(_read_bytes(path))
    except ValidationError as error:
        msg = f"{path} is not a valid {document_class.__name__}: {error}"
        raise ParseError(msg) from error


def _settings(config: Optional[Path]) -> Settings:
    return load_experiment_config(config).settings if config is not None else Settings()


def _load_series(path: Path, device: Optional[str]) -> LoadSeries:
    if path.suffix == ".json":
        return LoadSeries.from_document(_read_json_document(path, SeriesDocument))
    return ingest_load_csv(_read_bytes(path), device_id=device or path.stem)


def _load_market(path: Path) -> MarketSeries:
    if path.suffix == ".json":
        return MarketSeries.from_document(_read_json_document(path, SeriesDocument))
    return ingest_market_csv(_read_bytes(path))


def choose_series_kind(input: Path, kind: SeriesKind, device: str, out: Optional[Path]) -> DataConditional:  # noqa: A002
    return kind, {"input": input, "device": device, "out": out}


def ingest_load(input: Path, device: str, out: Optional[Path]) -> DataDict:  # noqa: A002
    series = ingest_load_csv(_read_bytes(input), device_id=device)
    return {"document": series.to_document(), "out": out}


def ingest_market(input: Path, device: str, out: Optional[Path]) -> DataDict:  # noqa: A002, ARG001
    return {"document": ingest_market_csv(_read_bytes(input)).to_document(), "out": out}


def signature_from_load(input: Path, config: Optional[Path], out: Optional[Path]) -> DataDict:  # noqa: A002
    detection = _settings(config).detection
    events = extract_events(_load_series(input, None), detection.on_threshold, detection.idle_gap)
    return {"document": extract_signature(events).to_document(), "out": out}


def train_models(input: Path, device: Optional[str], config: Optional[Path], seed: int, out: Optional[Path]) -> DataDict:  # noqa: A002
    settings = _settings(config)
    series = _load_series(input, device)
    events = extract_events(series, settings.detection.on_threshold, settings.detection.idle_gap)
    dataset = Dataset(device_id=series.device_id, events=events, start_date=series.start.date(), n_days=len(series) // 24)
    observed, _ = observe_days(dataset, settings.forecast.horizon)

    flexibility = settings.flexibility
    bundle = ModelBundleDocument(
        device_id=series.device_id,
        signature=extract_signature(events).to_document(),
        forecast=train_forecast_models(observed, settings.forecast).to_document(),
        flexibility=fit_offline(events, flexibility.mu0, flexibility.epochs, seed, flexibility).to_document(),
    )
    return {"document": bundle, "out": out}


async def read_bundle(
    models: Path,
    market: Path,  # noqa: ARG001
    date: datetime.date,
    device: Optional[str],
    config: Optional[Path],
    out: Optional[Path],
) -> DataDict:
    bundle: ModelBundleDocument = await asyncio.to_thread(_read_json_document, models, ModelBundleDocument)
    if device is not None and device != bundle.device_id:
        msg = f"Model bundle is for device {bundle.device_id!r}, not {device!r}."
        raise DataError(msg)

    settings = await asyncio.to_thread(_settings, config)
    return {"bundle": bundle, "settings": settings, "date": date, "out": out}


async def read_market(
    models: Path,  # noqa: ARG001
    market: Path,
    date: datetime.date,  # noqa: ARG001
    device: Optional[str],  # noqa: ARG001
    config: Optional[Path],  # noqa: ARG001
    out: Optional[Path],  # noqa: ARG001
) -> DataDict:
    return {"market": await asyncio.to_thread(_load_market, market)}


def forecast_day(
    bundle: ModelBundleDocument,
    settings: Settings,
    market: MarketSeries,
    date: datetime.date,
    out: Optional[Path],
) -> DataDict:
    signature = DeviceSignature.from_document(bundle.signature)
    forecast = ForecastModels.from_document(bundle.forecast, settings.forecast).forecast(date, signature.length)
    if forecast is None:
        raise NextLogicBlock(document={"proposal": None, "reason": "no predicted activation"}, out=out)

    return {
        "bundle": bundle,
        "pfo": ProbabilisticFlexOffer.from_forecast(forecast, signature),
        "market": market,
        "date": date,
        "settings": settings,
        "out": out,
    }


def propose(
    bundle: ModelBundleDocument,
    pfo: ProbabilisticFlexOffer,
    market: MarketSeries,
    date: datetime.date,
    settings: Settings,
    out: Optional[Path],
) -> DataDict:
    day_index = (date - market.start.date()).days
    hours = settings.forecast.horizon
    if day_index < 0 or day_index * 24 + hours > len(market):
        msg = f"Market data does not cover the {hours} hours from {date.isoformat()}."
        raise RangeError(msg)

    flex = flexibility_model_from_document(bundle.flexibility, settings.flexibility)
    proposal = schedule(
        pfo,
        market.window(day_index, hours),
        flex,
        ContextKey.from_date(date),
        bundle.device_id,
        day=date,
        skip_first_hour=settings.market.skip_first_reg_hour,
    )
    return {"document": {"proposal": proposal.to_document().model_dump(mode="json"), "reason": None}, "out": out}


def emit(document: Any, out: Optional[Path]) -> DataDict:
    if out is None:
        sys.stdout.write(dumps(document))
        return {"written": []}
    return {"written": [str(write_document(document, out))]}


def _experiment(config: Optional[Path]) -> ExperimentConfig:
    return load_experiment_config(config) if config is not None else ExperimentConfig()


def run_simulation(
    config: Optional[Path],
    seed: Optional[int],
    market: Optional[Path],
    workers: Optional[int],
    out: Path,
) -> DataDict:
    experiment = _experiment(config)
    report = simulate(experiment, seed, workers, _load_market(market) if market else None)
    json_path, csv_path = write_report(report, out / experiment.name)
    return {"written": [str(json_path), str(csv_path)]}


def run_comparison(
    config: Optional[Path],
    seed: Optional[int],
    market: Optional[Path],
    workers: Optional[int],
    out: Path,
) -> DataDict:
    experiment = _experiment(config)
    if market is not None:
        experiment = experiment.model_copy(update={"market_csv": str(market)})

    bundle = run_comparisons(experiment, seed, workers)
    written: list[str] = []
    for name, report in bundle.reports.items():
        written.extend(str(path) for path in write_report(report, out / name))
    return {"written": written}


def announce(written: list[str]) -> DataDict:
    for path in written:
        logger.info("Wrote %s", path)
    return {"written": written}


class CommandPipeline(BasePipeline):
    pipelines: ClassVar[PipelinesDict] = {
        "ingest": [
            IngestArguments,
            choose_series_kind,
            {"load": ingest_load, "market": ingest_market},
            emit,
        ],
        "signature": [SignatureArguments, signature_from_load, emit],
        "train": [TrainArguments, train_models, emit],
        "schedule": [ScheduleArguments, (read_bundle, read_market), [forecast_day, propose], emit],
        "simulate": [ExperimentArguments, run_simulation, announce],
        "compare": [ExperimentArguments, run_comparison, announce],
    }


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def _fail(error: Exception, error_code: str) -> None:
    sys.stderr.write(f"error: {error}\nerror_code={error_code}\n")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run a command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as error:
        _fail(error, error.error_code)
        return error.exit_code

    _configure_logging(args.verbose)
    data = {key: value for key, value in vars(args).items() if value is not None}
    try:
        CommandPipeline(args.command).process(data)
    except FlexSchedulerError as error:
        logger.debug("Command %s failed.", args.command, exc_info=True)
        _fail(error, error.error_code)
        return error.exit_code
    except Exception as error:  # noqa: BLE001
        logger.debug("Command %s crashed.", args.command, exc_info=True)
        _fail(error, "internal_error")
        return 3
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
