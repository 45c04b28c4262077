import pytest

from flex_scheduler.exceptions import ReportIOError
from flex_scheduler.report import REPORT_COLUMNS, dumps, read_report, write_document, write_report
from flex_scheduler.schemas import ProposalRowDocument, RunReport


def make_report() -> RunReport:
    rows = [
        ProposalRowDocument(
            device="washer",
            date="2017-02-01",
            t_es=18,
            chosen_t=22,
            delay=4,
            delta_spot=0.125,
            delta_reg=-0.5,
            acceptance_prob=0.75,
            outcome="accepted",
        ),
        ProposalRowDocument(
            device="washer",
            date="2017-02-02",
            t_es=19,
            chosen_t=25,
            delay=6,
            delta_spot=0.0,
            delta_reg=0.0,
            acceptance_prob=0.5,
            outcome="rejected",
        ),
    ]
    return RunReport(
        name="trial",
        acceptance_rate=0.5,
        n_proposals=2,
        n_accepted=1,
        n_rejected=1,
        spot_savings=0.125,
        reg_savings=-0.5,
        rates={"weekday-winter": 0.0625},
        seeds=[42],
        proposals=rows,
    )


def test_dumps__sorted_and_rounded():
    assert dumps({"b": 0.1 + 0.2, "a": 1}) == '{\n  "a": 1,\n  "b": 0.3\n}\n'


def test_dumps__non_finite_values_are_null():
    assert dumps({"value": float("nan")}) == '{\n  "value": null\n}\n'


def test_write_report(tmp_path):
    report = make_report()

    json_path, csv_path = write_report(report, tmp_path / "trial")

    assert json_path.name == "trial.json"
    assert read_report(json_path) == report
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert lines[1] == "washer,2017-02-01,18,22,4,0.125,-0.5,0.75,accepted"
    assert len(lines) == 3


def test_write_report__no_proposals(tmp_path):
    _, csv_path = write_report(RunReport(name="empty"), tmp_path / "empty.json")

    assert csv_path.read_text() == ",".join(REPORT_COLUMNS) + "\n"


def test_write_report__byte_identical(tmp_path):
    first, _ = write_report(make_report(), tmp_path / "first")
    second, _ = write_report(make_report(), tmp_path / "second")

    assert first.read_bytes() == second.read_bytes()


def test_write_report__unwritable_path(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")

    with pytest.raises(ReportIOError):
        write_report(make_report(), blocker / "trial")


def test_write_document__creates_directories(tmp_path):
    path = write_document({"proposal": None}, tmp_path / "nested" / "proposal.json")

    assert path.read_text() == '{\n  "proposal": null\n}\n'


def test_read_report__not_a_report(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"n_proposals": "many"}')

    with pytest.raises(ReportIOError):
        read_report(path)


def test_read_report__missing(tmp_path):
    with pytest.raises(ReportIOError):
        read_report(tmp_path / "missing.json")
