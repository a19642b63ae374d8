"""Dataset ingestion: manifest, annotation CSVs and the CUB-style adapter.

A manifest is a flat key=value file naming the image list, part
annotations, bounding boxes and the train/test split, with paths resolved
relative to the manifest's directory.
"""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

from .discovery import BoundingBox, PartAnnotation
from .imagefiles import read_image


class DatasetError(RuntimeError):
    pass


@dataclass
class DatasetManifest:
    root: Path
    images_file: Path
    parts_file: Path
    bboxes_file: Path
    split_file: Path


@dataclass
class Dataset:
    images: Dict[str, object]            # image_id -> (3, H, W) array
    labels: Dict[str, int]
    annotations: List[PartAnnotation]
    bboxes: Dict[str, BoundingBox]
    split: Dict[str, str]                # image_id -> "train" | "test"

    def ids(self, subset=None):
        if subset is None:
            return list(self.images)
        return [i for i in self.images if self.split.get(i) == subset]


def read_manifest(path):
    path = Path(path)
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DatasetError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    root = path.parent / values.get("root", ".")
    try:
        return DatasetManifest(
            root=root,
            images_file=root / values["images"],
            parts_file=root / values["parts"],
            bboxes_file=root / values["bboxes"],
            split_file=root / values["split"],
        )
    except KeyError as exc:
        raise DatasetError(f"{path}: missing manifest key {exc}") from exc


def _rows(path, expected_fields):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}:1: empty file")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != expected_fields:
                raise DatasetError(
                    f"{path}:{lineno}: expected {expected_fields} fields, "
                    f"got {len(row)}")
            yield path, lineno, row


def load_dataset(manifest, load_images=True, allow_png=False):
    """Materialize images, labels, part annotations, boxes and the split."""
    if isinstance(manifest, (str, Path)):
        manifest = read_manifest(manifest)
    images, labels = {}, {}
    for path, lineno, (image_id, rel, label) in _rows(manifest.images_file, 3):
        if image_id in images:
            raise DatasetError(f"{path}:{lineno}: duplicate image id {image_id}")
        img_path = manifest.root / rel
        if not img_path.exists():
            raise DatasetError(f"{path}:{lineno}: missing image file {img_path}")
        try:
            labels[image_id] = int(label)
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: bad label {label!r}") from exc
        images[image_id] = read_image(img_path, allow_png=allow_png) \
            if load_images else img_path
    annotations = []
    for path, lineno, (image_id, part_id, x, y, vis) in _rows(manifest.parts_file, 5):
        try:
            annotations.append(PartAnnotation(image_id, part_id,
                                              float(x), float(y), vis == "1"))
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: bad annotation row") from exc
    bboxes = {}
    for path, lineno, (image_id, x, y, w, h) in _rows(manifest.bboxes_file, 5):
        try:
            bboxes[image_id] = BoundingBox(float(x), float(y), float(w), float(h))
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: bad bounding box") from exc
    split = {}
    for path, lineno, (image_id, subset) in _rows(manifest.split_file, 2):
        if subset not in ("train", "test"):
            raise DatasetError(f"{path}:{lineno}: split must be train or test")
        split[image_id] = subset
    return Dataset(images, labels, annotations, bboxes, split)


def parse_cub_part_locs(path):
    """CUB-style space-separated part_locs: image_id part_id x y visible."""
    annotations = []
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 5:
                raise DatasetError(
                    f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
            image_id, part_id, x, y, vis = fields
            annotations.append(PartAnnotation(image_id, part_id,
                                              float(x), float(y), vis == "1"))
    return annotations


def write_parts_csv(annotations, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "part_id", "x", "y", "visible"])
        for a in annotations:
            writer.writerow([a.image_id, a.part_id, repr(a.x), repr(a.y),
                             1 if a.visible else 0])
