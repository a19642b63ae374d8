"""Localization-error and classification-accuracy evaluation.

Errors are Euclidean pixel distances normalized by the diagonal of the
ground-truth bounding box. Pairs where the ground truth is visible but the
prediction occluded are excluded from the means and counted separately.
"""

import csv
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .net import NetError


def normalized_error(pred, gt, bbox):
    """||pred - gt|| / bbox diagonal."""
    diag = bbox.diagonal
    if diag <= 0:
        raise NetError("degenerate bounding box")
    return float(np.hypot(pred[0] - gt[0], pred[1] - gt[1])) / diag


@dataclass
class PartErrors:
    errors: List[float] = field(default_factory=list)
    skipped: int = 0

    @property
    def mean(self):
        return float(np.mean(self.errors)) if self.errors else float("nan")

    @property
    def sorted_errors(self):
        return sorted(self.errors)


@dataclass
class LocalizationReport:
    parts: Dict[str, PartErrors]

    @property
    def overall_mean(self):
        all_errors = [e for p in self.parts.values() for e in p.errors]
        return float(np.mean(all_errors)) if all_errors else float("nan")


def localization_report(detections, annotations, bboxes):
    """Join detections with annotations and boxes on (image_id, part_id)."""
    ann_index = {(a.image_id, a.part_id): a for a in annotations}
    parts: Dict[str, PartErrors] = {}
    joined = 0
    for det in detections:
        key = (det.image_id, det.part_id)
        ann = ann_index.get(key)
        box = bboxes.get(det.image_id)
        if ann is None or box is None:
            continue
        joined += 1
        rec = parts.setdefault(det.part_id, PartErrors())
        if not ann.visible:
            continue
        if det.occluded:
            rec.skipped += 1
            continue
        rec.errors.append(normalized_error((det.x, det.y), (ann.x, ann.y), box))
    if joined == 0:
        raise NetError("detections, annotations and boxes share no ids")
    return LocalizationReport(parts)


def accuracy(predictions, labels):
    """Fraction of exact matches."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise NetError("prediction/label length mismatch")
    return float(np.mean(predictions == labels))


def write_report(report, out_dir):
    """report.csv plus one curve_<part>.csv per part (rank, sorted error)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["part_id", "mean_error", "count", "skipped"])
        for part_id in sorted(report.parts):
            rec = report.parts[part_id]
            writer.writerow([part_id, f"{rec.mean:.6f}", len(rec.errors),
                             rec.skipped])
        total = sum(len(p.errors) for p in report.parts.values())
        skipped = sum(p.skipped for p in report.parts.values())
        writer.writerow(["overall", f"{report.overall_mean:.6f}", total, skipped])
    for part_id in sorted(report.parts):
        rec = report.parts[part_id]
        with open(out_dir / f"curve_{part_id}.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["rank", "error"])
            for rank, err in enumerate(rec.sorted_errors):
                writer.writerow([rank, f"{err:.6f}"])
