"""Per-channel and per-class gradient maps of the input image.

A gradient map holds non-negative magnitudes with the spatial shape of the
input image. Channel maps sum the gradients of all elements of one channel
in a single seeded backward pass; the color axis is then collapsed.
"""

import numpy as np

from .net import NetError


class ZeroMapError(ValueError):
    """Raised when an all-zero map cannot be normalized; consumers treat
    this as the part being occluded."""


def _reduce_color(grad, mode):
    if mode == "max":
        return np.abs(grad).max(axis=0)
    if mode == "sum":
        return np.abs(grad).sum(axis=0)
    raise NetError(f"unknown color reduction {mode!r}")


def channel_gradient_map(net, x, layer_index, channel, color_reduce="max"):
    """Magnitude map of the summed input gradient of one channel of layer
    `layer_index`. Exactly one backward pass."""
    seed = net.channel_seed(layer_index, channel)
    grad = net.backward_seeded(x, layer_index, seed)
    return _reduce_color(grad, color_reduce)


def class_gradient_map(net, x, class_id=None, color_reduce="max"):
    """Magnitude map of the gradient of a class score; the winning class
    is used when class_id is None."""
    if class_id is None:
        class_id = int(np.argmax(net.scores(x)))
    n_classes = net.num_classes
    if not 0 <= class_id < n_classes:
        raise NetError(f"class {class_id} out of range")
    seed = np.zeros(n_classes)
    seed[class_id] = 1.0
    grad = net.backward_seeded(x, len(net.layers) - 1, seed)
    return _reduce_color(grad, color_reduce)


def nearest_rank_quantile(values, q):
    """ceil(q*N)-th smallest value."""
    flat = np.sort(np.asarray(values).ravel())
    k = int(np.ceil(q * flat.size))
    return flat[max(k, 1) - 1]


def threshold_map(gmap, q):
    """Binary mask: 1 where the value reaches the q-quantile (nearest rank)."""
    gmap = np.asarray(gmap)
    if gmap.size == 0:
        raise NetError("empty map")
    if not 0.0 < q < 1.0:
        raise NetError(f"quantile {q} outside (0, 1)")
    return gmap >= nearest_rank_quantile(gmap, q)


def normalize_map(gmap):
    """Rescale so the values sum to 1; all-zero maps signal ZeroMapError."""
    gmap = np.asarray(gmap, dtype=np.float64)
    total = gmap.sum()
    if total <= 0.0:
        raise ZeroMapError("gradient map is all zero")
    return gmap / total
