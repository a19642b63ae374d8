"""Localizing discovered parts in new images.

One gradient map per distinct channel, one GMM fit per association. No
bounding box or inter-part geometry is consulted unless a box is passed
explicitly, in which case gradient mass outside the box is zeroed before
the center fit (the coordinate frame is preserved).
"""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .centers import fit_activation_center
from .gradmaps import channel_gradient_map
from .net import NetError

ZERO_MAP_EPS = 1e-12


@dataclass
class PartDetection:
    image_id: str
    part_id: str
    x: Optional[float]
    y: Optional[float]
    occluded: bool
    channel: int
    cluster_weight: float


def detect_parts(net, x, associations, layer_index, cfg,
                 image_id="", bbox=None):
    """One detection per association; channel maps shared between parts are
    computed once."""
    if not associations:
        raise NetError("empty association set")
    channels = net.channel_count(layer_index)
    maps = {}
    for a in associations:
        if not 0 <= a.channel < channels:
            raise NetError(f"channel {a.channel} invalid for layer {layer_index}")
        if a.channel not in maps:
            maps[a.channel] = channel_gradient_map(net, x, layer_index, a.channel)
    detections = []
    for a in associations:
        gmap = maps[a.channel]
        if bbox is not None:
            gmap = _mask_to_box(gmap, bbox)
        if np.abs(gmap).max() < ZERO_MAP_EPS:
            detections.append(PartDetection(image_id, a.part_id, None, None,
                                            True, a.channel, 0.0))
            continue
        center = fit_activation_center(gmap, cfg)
        detections.append(PartDetection(image_id, a.part_id, center.x, center.y,
                                        False, a.channel, center.cluster_weight))
    return detections


def _mask_to_box(gmap, bbox):
    h, w = gmap.shape
    ys, xs = np.mgrid[0:h, 0:w]
    inside = ((bbox.x <= xs) & (xs <= bbox.x + bbox.width)
              & (bbox.y <= ys) & (ys <= bbox.y + bbox.height))
    return np.where(inside, gmap, 0.0)


def save_detections(detections, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "part_id", "x", "y", "occluded"])
        for d in detections:
            if d.occluded:
                writer.writerow([d.image_id, d.part_id, "", "", 1])
            else:
                writer.writerow([d.image_id, d.part_id,
                                 f"{d.x:.2f}", f"{d.y:.2f}", 0])


def load_detections(path):
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            occ = row["occluded"] == "1"
            out.append(PartDetection(
                row["image_id"], row["part_id"],
                None if occ else float(row["x"]),
                None if occ else float(row["y"]),
                occ, -1, 0.0))
    return out
