"""
Tests for result aggregation and the report files.
"""

import math

import pytest

from toddlerlab.config import ReportConfig
from toddlerlab.exceptions import ValidationException
from toddlerlab.models import Regime, Task
from toddlerlab.report import (
    CURVES_CSV,
    RESULTS_CSV,
    RESULTS_MD,
    ResultRow,
    aggregate,
    curves_csv,
    parse_results_csv,
    relative_improvement,
    results_csv,
    results_markdown,
    standard_error,
    write_report,
)
from toddlerlab.transfer import CellResult


def _results():
    return [
        CellResult(Regime.PROPOSED, Task.CLASSIFICATION, 0, 90.0, (1.0, 0.5)),
        CellResult(Regime.PROPOSED, Task.CLASSIFICATION, 1, 80.0, (1.2, 0.6)),
        CellResult(Regime.AUTOENCODER, Task.CLASSIFICATION, 0, 50.0, (1.1,)),
        CellResult(Regime.AUTOENCODER, Task.CLASSIFICATION, 1, 50.0, (1.1,)),
        CellResult(Regime.PROPOSED, Task.DISTANCE, 0, 20.0, ()),
        CellResult(Regime.AUTOENCODER, Task.DISTANCE, 0, 40.0, ()),
    ]


class TestAggregation:
    """Mean and standard error per (regime, task)."""

    def test_standard_error(self):
        assert standard_error([5.0]) == 0.0
        assert standard_error([1.0, 3.0]) == pytest.approx(math.sqrt(2.0) / math.sqrt(2.0))

    def test_rows_are_ordered_by_task_then_regime(self):
        rows = aggregate(_results())
        assert [(r.task, r.regime) for r in rows] == [
            (Task.CLASSIFICATION, Regime.AUTOENCODER),
            (Task.CLASSIFICATION, Regime.PROPOSED),
            (Task.DISTANCE, Regime.AUTOENCODER),
            (Task.DISTANCE, Regime.PROPOSED),
        ]
        proposed = rows[1]
        assert proposed.mean == pytest.approx(85.0)
        assert proposed.stderr == pytest.approx(5.0)
        assert proposed.seeds == 2
        assert proposed.metric == "accuracy"

    def test_relative_improvement(self):
        assert relative_improvement(60.0, 50.0, Task.CLASSIFICATION) == pytest.approx(20.0)
        assert relative_improvement(20.0, 40.0, Task.DISTANCE) == pytest.approx(50.0)
        assert relative_improvement(0.5, 0.0, Task.LOCALIZATION) is None


class TestCsv:
    """results.csv and curves.csv."""

    def test_results_csv(self):
        text = results_csv(aggregate(_results()))
        lines = text.splitlines()
        assert lines[0] == "regime,task,metric,mean,stderr,seeds"
        assert lines[2] == "proposed,classification,accuracy,85.000000,5.000000,2"
        assert len(lines) == 5

    def test_parse_results_csv(self):
        rows = aggregate(_results())
        assert parse_results_csv(results_csv(rows)) == rows

    def test_parse_rejects_wrong_header(self):
        with pytest.raises(ValidationException):
            parse_results_csv("regime,task\n")
        with pytest.raises(ValidationException):
            parse_results_csv("")

    def test_parse_rejects_bad_rows(self):
        header = "regime,task,metric,mean,stderr,seeds\n"
        with pytest.raises(ValidationException, match="row 2"):
            parse_results_csv(header + "nobody,distance,relative_l1,1.0,0.0,1\n")
        with pytest.raises(ValidationException):
            parse_results_csv(header + "random,distance,relative_l1,1.0\n")

    def test_curves_csv(self):
        lines = curves_csv(_results()).splitlines()
        assert lines[0] == "regime,task,seed,epoch,loss"
        assert lines[1] == "proposed,classification,0,1,1.000000"
        assert lines[2] == "proposed,classification,0,2,0.500000"
        assert len(lines) == 1 + 2 + 2 + 1 + 1


class TestMarkdown:
    """The results table."""

    def test_table_layout(self):
        text = results_markdown(aggregate(_results()))
        lines = text.splitlines()
        assert lines[0] == "| Task | Random | Autoencoder | Proposed | Supervised |"
        assert lines[1] == "|---|---|---|---|---|"
        expected = "| Classification (Accuracy) | - | 50.0 ± 0.0 | 85.0 ± 5.0 | -"
        assert lines[2].startswith(expected)
        assert lines[4].startswith("| Recognition (IOU) | - | - | - | - |")

    def test_relative_improvement_notes(self):
        text = results_markdown(aggregate(_results()))
        assert "Relative improvement of Proposed over Autoencoder:" in text
        assert "- Classification: +70.0%" in text
        assert "- Distance estimation: +50.0%" in text

    def test_notes_can_be_disabled(self):
        config = ReportConfig(decimals=2, relative_improvement=False)
        text = results_markdown(aggregate(_results()), config)
        assert "Relative improvement" not in text
        assert "85.00 ± 5.00" in text

    def test_empty_rows(self):
        text = results_markdown([])
        assert text.count("| - | - | - | - |") == len(Task)
        assert "Relative improvement" not in text


def test_write_report(tmp_path):
    rows = write_report(tmp_path / "report", _results())
    for name in (RESULTS_CSV, RESULTS_MD, CURVES_CSV):
        assert (tmp_path / "report" / name).is_file()
    text = (tmp_path / "report" / RESULTS_CSV).read_text(encoding="utf-8")
    assert parse_results_csv(text) == rows
    assert isinstance(rows[0], ResultRow)
