"""Byte-stable JSON and CSV output."""

import json
import logging
from pathlib import Path

import pandas as pd
from pydantic import BaseModel, ValidationError

from .exceptions import ReportIOError
from .schemas import RunReport
from .typing import Any, Union
from .utils import round_floats

__all__ = [
    "REPORT_COLUMNS",
    "dumps",
    "read_report",
    "write_document",
    "write_report",
]


logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "device",
    "date",
    "t_es",
    "chosen_t",
    "delay",
    "delta_spot",
    "delta_reg",
    "acceptance_prob",
    "outcome",
]


def dumps(document: Union[BaseModel, Any]) -> str:
    """JSON with sorted keys and floats rounded to 9 significant digits."""
    if isinstance(document, BaseModel):
        document = document.model_dump(mode="json", by_alias=True)
    return json.dumps(round_floats(document), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as error:
        msg = f"Cannot write {path}: {error}"
        raise ReportIOError(msg) from error


def write_document(document: Union[BaseModel, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    _write(path, dumps(document))
    return path


def write_report(report: RunReport, path: Union[str, Path]) -> tuple[Path, Path]:
    """Write the report as JSON, and its proposals as a CSV next to it."""
    json_path = Path(path).with_suffix(".json")
    csv_path = json_path.with_suffix(".csv")

    frame = pd.DataFrame([row.model_dump() for row in report.proposals], columns=REPORT_COLUMNS)
    table = frame.to_csv(index=False, float_format="%.9g", lineterminator="\n")

    _write(json_path, dumps(report))
    _write(csv_path, table)
    logger.info("Wrote %s with %d proposals.", json_path, len(report.proposals))
    return json_path, csv_path


def read_report(path: Union[str, Path]) -> RunReport:
    path = Path(path)
    try:
        return RunReport.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as error:
        msg = f"Cannot read {path}: {error}"
        raise ReportIOError(msg) from error
    except ValidationError as error:
        msg = f"{path} is not a run report: {error}"
        raise ReportIOError(msg) from error
