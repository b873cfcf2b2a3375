import csv
import json

import numpy as np
import pytest

from adaptsiam.experiment import SequenceResult
from adaptsiam.imaging import BBox
from adaptsiam.report import emit_report, fmt, write_table
from adaptsiam.tracker import TrackerOutput


def _result(name, n=5):
    outs = [TrackerOutput(i, BBox(1, 2, 3, 4), 0.5, regularity=0.25, change=i == 3) for i in range(n)]
    return SequenceResult(name, outs, np.full(n, 0.5), 0.4, 1.0, 1, 200.0, 0.5, runtime=1.23, occluded=[False] * n)


def test_fmt():
    assert fmt(0.1) == "0.100000" and fmt(3) == "3" and fmt(True) == "true"
    with pytest.raises(ValueError):
        fmt(float("nan"))


def test_empty_results_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path)


def test_report_contents(tmp_path):
    agg = emit_report([_result("b"), _result("a", 3)], tmp_path, {"tau": 0.5})
    doc = json.loads((tmp_path / "report.json").read_text())
    assert list(doc["sequences"]) == ["a", "b"]
    assert doc["aggregate"]["frames"] == 8 and "runtime" not in doc["aggregate"]
    assert doc["aggregate"]["robustness"] == pytest.approx(2 * 1000 / 8)
    assert agg["mean_iou"] == pytest.approx(0.5)
    assert "0.500000" in (tmp_path / "report.json").read_text()
    rows = list(csv.reader(open(tmp_path / "curves" / "b.csv")))
    assert rows[0] == ["frame", "overlap", "regularity", "change"] and len(rows) == 6
    assert rows[4] == ["3", "0.500000", "0.250000", "1"]
    emit_report([_result("a")], tmp_path / "t", timing=True)
    assert "runtime" in json.loads((tmp_path / "t" / "report.json").read_text())["aggregate"]


def test_table(tmp_path):
    write_table(tmp_path, [{"arm": "x", "mode": "frozen", "tau": 0.5, "alpha": 0.5, "eao_lite": 0.3,
                            "robustness": 1.0, "mean_iou": 0.4, "success_auc": 0.35}])
    lines = (tmp_path / "table.csv").read_text().splitlines()
    assert lines[0] == "arm,mode,tau,alpha,eao_lite,robustness,mean_iou,success_auc"
    assert lines[1] == "x,frozen,0.500000,0.500000,0.300000,1.000000,0.400000,0.350000"
    with pytest.raises(ValueError):
        write_table(tmp_path, [])
