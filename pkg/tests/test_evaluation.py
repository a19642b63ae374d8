import csv

import numpy as np
import pytest

from partgrad.detection import PartDetection
from partgrad.discovery import BoundingBox, PartAnnotation
from partgrad.evaluation import (
    accuracy, localization_report, normalized_error, write_report,
)
from partgrad.figures import render_error_curves
from partgrad.net import NetError


def det(image_id, part_id, x, y, occluded=False):
    return PartDetection(image_id, part_id, x, y, occluded, 0, 1.0)


def test_error_zero_when_exact():
    box = BoundingBox(0, 0, 30, 40)
    assert normalized_error((3.0, 4.0), (3.0, 4.0), box) == 0.0


def test_error_equal_to_diagonal_is_one():
    box = BoundingBox(0, 0, 30, 40)  # diagonal 50
    assert normalized_error((0.0, 0.0), (30.0, 40.0), box) == pytest.approx(1.0)


def test_error_hand_computed():
    box = BoundingBox(10, 10, 3, 4)  # diagonal 5
    # distance sqrt(3^2 + 4^2) = 5 -> error exactly 1; half that -> 0.5
    assert normalized_error((0.0, 0.0), (3.0, 4.0), box) == pytest.approx(
        1.0, abs=1e-12)
    assert normalized_error((0.0, 0.0), (1.5, 2.0), box) == pytest.approx(
        0.5, abs=1e-12)


def test_degenerate_box_rejected():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 4)


def three_image_fixture():
    boxes = {f"im{i}": BoundingBox(0, 0, 6, 8) for i in range(3)}  # diag 10
    anns = [PartAnnotation("im0", "head", 1.0, 1.0, True),
            PartAnnotation("im1", "head", 2.0, 2.0, True),
            PartAnnotation("im2", "head", 3.0, 3.0, True),
            PartAnnotation("im0", "tail", 5.0, 5.0, True),
            PartAnnotation("im1", "tail", 5.0, 5.0, False),  # invisible gt
            PartAnnotation("im2", "tail", 5.0, 5.0, True)]
    dets = [det("im0", "head", 1.0, 1.0),            # error 0
            det("im1", "head", 2.0, 6.0),            # error 0.4
            det("im2", "head", 3.0, 3.0),
            det("im0", "tail", 5.0, 11.0),           # error 0.6
            det("im1", "tail", 0.0, 0.0),            # skipped: invisible gt
            det("im2", "tail", None, None, occluded=True)]  # counted skip
    return dets, anns, boxes


def test_report_three_image_hand_check():
    dets, anns, boxes = three_image_fixture()
    report = localization_report(dets, anns, boxes)
    head = report.parts["head"]
    assert head.mean == pytest.approx(0.4 / 3, abs=1e-12)
    assert head.skipped == 0
    tail = report.parts["tail"]
    assert tail.errors == pytest.approx([0.6], abs=1e-12)
    assert tail.skipped == 1
    assert report.overall_mean == pytest.approx(1.0 / 4, abs=1e-12)


def test_report_requires_overlap():
    dets = [det("other", "head", 1.0, 1.0)]
    anns = [PartAnnotation("im0", "head", 1.0, 1.0, True)]
    with pytest.raises(NetError):
        localization_report(dets, anns, {"im0": BoundingBox(0, 0, 5, 5)})


def test_report_sorted_curves():
    dets, anns, boxes = three_image_fixture()
    report = localization_report(dets, anns, boxes)
    errs = report.parts["head"].sorted_errors
    assert errs == sorted(errs)


def test_accuracy():
    assert accuracy([1, 2, 3], [1, 2, 0]) == pytest.approx(2 / 3)
    with pytest.raises(NetError):
        accuracy([1, 2], [1, 2, 3])


def test_write_report_files(tmp_path):
    dets, anns, boxes = three_image_fixture()
    report = localization_report(dets, anns, boxes)
    write_report(report, tmp_path)
    with open(tmp_path / "report.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["part_id", "mean_error", "count", "skipped"]
    overall = rows[-1]
    assert overall[0] == "overall"
    assert float(overall[1]) == pytest.approx(0.25, abs=1e-6)
    assert overall[2:] == ["4", "1"]
    with open(tmp_path / "curve_head.csv") as f:
        curve = list(csv.reader(f))
    assert curve[0] == ["rank", "error"]
    assert len(curve) == 4


def test_curve_figure_written_and_deterministic(tmp_path):
    dets, anns, boxes = three_image_fixture()
    report = localization_report(dets, anns, boxes)
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    render_error_curves(report, a)
    render_error_curves(report, b)
    assert a.stat().st_size > 0
    assert a.read_bytes() == b.read_bytes()
