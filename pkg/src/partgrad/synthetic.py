"""Synthetic shape datasets with exact part ground truth.

Two variants:
  "shapes"      4 classes from the orientations of two parts: a red
                ellipse ("head") and a blue rectangle ("tail"), each
                either horizontal or vertical, at random positions.
  "finegrained" 2 classes that differ only by the orientation of a thin
                bar inside the head disk; the tail square is identical
                across classes.

Shape centers are recorded as ground-truth part locations, boxes cover
both shapes. Generation is fully determined by the seed.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imagefiles import write_ppm

EXT_LONG = 8
EXT_SHORT = 3
DISK_RADIUS = 6
TAIL_HALF = 5
BAR_HALF = 3
MARGIN = 12
MIN_SEPARATION = 22

HEAD_COLOR = (0.85, 0.15, 0.15)
TAIL_COLOR = (0.15, 0.25, 0.9)
NOISE = 0.02


@dataclass
class SyntheticSpec:
    image_size: int = 64
    variant: str = "shapes"   # "shapes" | "finegrained"
    num_train: int = 400
    num_test: int = 100
    seed: int = 0

    @property
    def num_classes(self):
        return 4 if self.variant == "shapes" else 2


def _paint(img, mask, color):
    for ch in range(3):
        img[ch][mask] = color[ch]


def _place_parts(rng, size):
    lo, hi = MARGIN, size - MARGIN
    while True:
        head = rng.integers(lo, hi, size=2)
        tail = rng.integers(lo, hi, size=2)
        if np.hypot(*(head - tail)) >= MIN_SEPARATION:
            return head, tail


def render_sample(spec, rng, label):
    """One image plus its part centers and bounding box."""
    size = spec.image_size
    img = rng.uniform(0.0, NOISE, size=(3, size, size))
    (hx, hy), (tx, ty) = _place_parts(rng, size)
    ys, xs = np.mgrid[0:size, 0:size]
    if spec.variant == "shapes":
        a, b = (EXT_LONG, EXT_SHORT) if label % 2 == 0 else (EXT_SHORT, EXT_LONG)
        _paint(img, ((xs - hx) / a) ** 2 + ((ys - hy) / b) ** 2 <= 1.0, HEAD_COLOR)
        w, h = (EXT_LONG, EXT_SHORT) if label // 2 == 0 else (EXT_SHORT, EXT_LONG)
        _paint(img, (np.abs(xs - tx) <= w) & (np.abs(ys - ty) <= h), TAIL_COLOR)
    else:
        _paint(img, (xs - hx) ** 2 + (ys - hy) ** 2 <= DISK_RADIUS ** 2, HEAD_COLOR)
        _paint(img, (np.abs(xs - tx) <= TAIL_HALF) & (np.abs(ys - ty) <= TAIL_HALF),
               TAIL_COLOR)
        if label == 0:
            img[:, hy, hx - BAR_HALF:hx + BAR_HALF + 1] = 1.0
        else:
            img[:, hy - BAR_HALF:hy + BAR_HALF + 1, hx] = 1.0
    m = EXT_LONG
    box = (float(min(hx, tx) - m - 2), float(min(hy, ty) - m - 2),
           float(abs(hx - tx) + 2 * m + 4), float(abs(hy - ty) + 2 * m + 4))
    parts = {"head": (float(hx), float(hy)), "tail": (float(tx), float(ty))}
    return img, parts, box


def recover_label(image, variant="shapes"):
    """Rule-based class check straight from the rendered pixels."""
    red = (image[0] > 0.5) & (image[2] < 0.5)
    blue = (image[2] > 0.5) & (image[0] < 0.5)

    def orientation(mask):
        ys, xs = np.nonzero(mask)
        return 0 if np.ptp(xs) >= np.ptp(ys) else 1

    if variant == "shapes":
        return orientation(red) + 2 * orientation(blue)
    white = (image[0] > 0.95) & (image[1] > 0.95) & (image[2] > 0.95)
    return orientation(white)


def generate_synthetic(spec, out_dir):
    """Write images, annotation CSVs and a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    rows_images, rows_parts, rows_boxes, rows_split = [], [], [], []
    total = spec.num_train + spec.num_test
    for i in range(total):
        label = int(rng.integers(0, spec.num_classes))
        img, parts, box = render_sample(spec, rng, label)
        image_id = f"img{i:05d}"
        rel = f"images/{image_id}.ppm"
        write_ppm(out_dir / rel, img)
        rows_images.append([image_id, rel, label])
        for part_id, (px, py) in sorted(parts.items()):
            rows_parts.append([image_id, part_id, repr(px), repr(py), 1])
        rows_boxes.append([image_id] + [repr(v) for v in box])
        rows_split.append([image_id, "train" if i < spec.num_train else "test"])

    def dump(name, header, rows):
        with open(out_dir / name, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)

    dump("images.csv", ["image_id", "path", "label"], rows_images)
    dump("parts.csv", ["image_id", "part_id", "x", "y", "visible"], rows_parts)
    dump("bboxes.csv", ["image_id", "x", "y", "width", "height"], rows_boxes)
    dump("split.csv", ["image_id", "split"], rows_split)
    manifest = out_dir / "manifest.txt"
    with open(manifest, "w") as f:
        f.write("root=.\nimages=images.csv\nparts=parts.csv\n"
                "bboxes=bboxes.csv\nsplit=split.csv\n")
    return manifest
