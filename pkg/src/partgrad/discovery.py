"""Channel selection: which channels behave like part detectors.

Three strategies share a table of activation centers computed over the
training images: supervised matching against annotated part locations,
counting how often a center lands inside the bounding box, and total
distance to the bounding box border.
"""

import csv
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .centers import fit_activation_center
from .gradmaps import channel_gradient_map
from .net import NetError

# a channel must be usable (part visible, center not occluded) on at least
# this fraction of the part's images to compete in the part strategy
MIN_SUPPORT = 0.25


class NoAssociationError(RuntimeError):
    pass


@dataclass
class PartAnnotation:
    image_id: str
    part_id: str
    x: float
    y: float
    visible: bool


@dataclass
class BoundingBox:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("bounding box needs positive extents")

    def contains(self, px, py):
        """Closed box: points on the edge count as inside."""
        return (self.x <= px <= self.x + self.width
                and self.y <= py <= self.y + self.height)

    def distance(self, px, py):
        """Euclidean distance to the nearest point of the box; 0 inside."""
        dx = max(self.x - px, 0.0, px - (self.x + self.width))
        dy = max(self.y - py, 0.0, py - (self.y + self.height))
        return float(np.hypot(dx, dy))

    @property
    def diagonal(self):
        return float(np.hypot(self.width, self.height))


@dataclass
class ChannelAssociation:
    part_id: str
    channel: int
    score: float
    strategy: str


class CenterTable:
    """Activation center per (image, channel) of one layer."""

    def __init__(self, image_ids, positions, occluded, image_size):
        self.image_ids = list(image_ids)
        self.positions = np.asarray(positions, dtype=np.float64)
        self.occluded = np.asarray(occluded, dtype=bool)
        self.image_size = tuple(image_size)  # (W, H)
        n, c = self.occluded.shape
        assert self.positions.shape == (n, c, 2)
        self._row = {im: i for i, im in enumerate(self.image_ids)}

    @property
    def num_channels(self):
        return self.occluded.shape[1]

    def row(self, image_id):
        return self._row[image_id]

    def center(self, image_id, channel):
        i = self._row[image_id]
        if self.occluded[i, channel]:
            return None
        return tuple(self.positions[i, channel])


def compute_center_table(net, images: Dict[str, np.ndarray], layer_index, cfg):
    """Fit one activation center per image and channel of the given layer."""
    channels = net.channel_count(layer_index)
    image_ids = list(images.keys())
    n = len(image_ids)
    positions = np.zeros((n, channels, 2))
    occluded = np.zeros((n, channels), dtype=bool)
    for i, image_id in enumerate(image_ids):
        x = images[image_id]
        for c in range(channels):
            gmap = channel_gradient_map(net, x, layer_index, c)
            center = fit_activation_center(gmap, cfg)
            if center.occluded:
                occluded[i, c] = True
            else:
                positions[i, c] = center.position
    _, h, w = net.input_shape
    return CenterTable(image_ids, positions, occluded, (w, h))


def select_channel_part(table: CenterTable,
                        annotations: List[PartAnnotation]) -> ChannelAssociation:
    """Channel minimizing the summed squared distance between its centers
    and the annotated part positions."""
    visible = [a for a in annotations if a.visible and a.image_id in table._row]
    if not visible:
        raise NoAssociationError("part has no visible annotated image")
    part_id = visible[0].part_id
    best = None
    for c in range(table.num_channels):
        total, count = 0.0, 0
        for ann in visible:
            i = table.row(ann.image_id)
            if table.occluded[i, c]:
                continue
            mx, my = table.positions[i, c]
            total += (mx - ann.x) ** 2 + (my - ann.y) ** 2
            count += 1
        if count < MIN_SUPPORT * len(visible) or count == 0:
            continue
        key = (total, c)
        if best is None or key < best[0]:
            best = (key, c, total / count)
    if best is None:
        raise NoAssociationError(f"no usable channel for part {part_id}")
    _, channel, mean_sq = best
    return ChannelAssociation(part_id, channel, mean_sq, "part")


def select_channels_counting(table: CenterTable,
                             bboxes: Dict[str, BoundingBox],
                             proposals: int) -> List[ChannelAssociation]:
    """The `proposals` channels whose centers most often fall inside the box."""
    if proposals < 1 or proposals > table.num_channels:
        raise NetError(f"proposal count {proposals} out of range")
    counts = np.zeros(table.num_channels, dtype=int)
    for image_id, box in bboxes.items():
        if image_id not in table._row:
            continue
        i = table.row(image_id)
        for c in range(table.num_channels):
            if table.occluded[i, c]:
                continue
            mx, my = table.positions[i, c]
            if box.contains(mx, my):
                counts[c] += 1
    order = sorted(range(table.num_channels), key=lambda c: (-counts[c], c))
    return [ChannelAssociation(f"proposal_{rank}", c, float(counts[c]), "counting")
            for rank, c in enumerate(order[:proposals])]


def select_channels_bbox(table: CenterTable,
                         bboxes: Dict[str, BoundingBox],
                         proposals: int) -> List[ChannelAssociation]:
    """The `proposals` channels with the lowest total distance to the box
    border (zero inside); occluded centers cost one image diagonal."""
    if proposals < 1 or proposals > table.num_channels:
        raise NetError(f"proposal count {proposals} out of range")
    w, h = table.image_size
    penalty = float(np.hypot(w, h))
    costs = np.zeros(table.num_channels)
    for image_id, box in bboxes.items():
        if image_id not in table._row:
            continue
        i = table.row(image_id)
        for c in range(table.num_channels):
            if table.occluded[i, c]:
                costs[c] += penalty
            else:
                mx, my = table.positions[i, c]
                costs[c] += box.distance(mx, my)
    order = sorted(range(table.num_channels), key=lambda c: (costs[c], c))
    return [ChannelAssociation(f"proposal_{rank}", c, float(costs[c]), "bbox")
            for rank, c in enumerate(order[:proposals])]


def save_associations(associations, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["part_id", "channel", "score", "strategy"])
        for a in associations:
            writer.writerow([a.part_id, a.channel, repr(float(a.score)),
                             a.strategy])


def load_associations(path):
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            out.append(ChannelAssociation(row["part_id"], int(row["channel"]),
                                          float(row["score"]), row["strategy"]))
    return out
