"""Part-based image classification.

Features are hidden-layer activations of the network on the warped full
image plus one block per part, extracted from a square patch around the
detected position and warped to the network input size. Occluded parts
contribute a zero block so the layout never changes. Classification is a
linear one-vs-all model trained with the hinge loss.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .net import NetError

MODEL_MAGIC = b"PDDM"
MODEL_VERSION = 1


def patch_side(n, m, lam):
    """Square patch side from image extents and area fraction lam."""
    if n < 1 or m < 1:
        raise NetError("image extents must be positive")
    if not 0.0 < lam <= 1.0:
        raise NetError("lambda must lie in (0, 1]")
    p = int(round(np.sqrt(n * m * lam)))
    return max(1, min(p, n, m))


def extract_patch(image, center, p):
    """p x p crop centered at (x, y), shifted minimally to stay inside."""
    _, h, w = image.shape
    if p > min(h, w):
        raise NetError("patch larger than image")
    cx, cy = center
    left = int(round(cx)) - p // 2
    top = int(round(cy)) - p // 2
    left = min(max(left, 0), w - p)
    top = min(max(top, 0), h - p)
    return image[:, top:top + p, left:left + p]


def bilinear_resize(image, out_h, out_w):
    """Deterministic bilinear resampling of a (C, H, W) image."""
    c, h, w = image.shape
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    tl = image[:, y0][:, :, x0]
    tr = image[:, y0][:, :, x1]
    bl = image[:, y1][:, :, x0]
    br = image[:, y1][:, :, x1]
    top = tl * (1 - wx) + tr * wx
    bot = bl * (1 - wx) + br * wx
    return top * (1 - wy) + bot * wy


def hidden_activations(net, image, hidden_layer=None):
    """Flattened activations of a hidden layer on an image warped to the
    network input size. Defaults to the last hidden layer."""
    if hidden_layer is None:
        hidden_layer = len(net.layers) - 2
    _, h, w = net.input_shape
    warped = bilinear_resize(image, h, w)
    return net.forward(warped)[hidden_layer].reshape(-1)


def feature_vector(net, image, detections, lam=0.1, hidden_layer=None):
    """Global activation block followed by one block per detection, in
    detection order; occluded detections give zero blocks."""
    if hidden_layer is None:
        hidden_layer = len(net.layers) - 2
    blocks = [hidden_activations(net, image, hidden_layer)]
    _, h, w = image.shape
    p = patch_side(h, w, lam)
    for det in detections:
        if det.occluded:
            blocks.append(np.zeros_like(blocks[0]))
        else:
            patch = extract_patch(image, (det.x, det.y), p)
            blocks.append(hidden_activations(net, patch, hidden_layer))
    return np.concatenate(blocks)


@dataclass
class OvaConfig:
    learning_rate: float = 0.01
    epochs: int = 50
    reg: float = 1e-4
    seed: int = 0


@dataclass
class LinearOvaModel:
    weights: np.ndarray  # (classes, features)
    biases: np.ndarray   # (classes,)

    @property
    def num_classes(self):
        return self.weights.shape[0]

    @property
    def feature_length(self):
        return self.weights.shape[1]


def train_classifier(features, labels, config=None):
    """One hinge-loss linear model per class, epoch-ordered subgradient
    descent with L2 regularization."""
    if config is None:
        config = OvaConfig()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    classes = int(labels.max()) + 1 if labels.size else 0
    if classes < 2:
        raise NetError("need at least two classes")
    n, d = features.shape
    weights = np.zeros((classes, d))
    biases = np.zeros(classes)
    for epoch in range(config.epochs):
        lr = config.learning_rate / (1.0 + 0.1 * epoch)
        for i in range(n):
            x = features[i]
            for c in range(classes):
                t = 1.0 if labels[i] == c else -1.0
                margin = t * (weights[c] @ x + biases[c])
                weights[c] *= 1.0 - lr * config.reg
                if margin < 1.0:
                    weights[c] += lr * t * x
                    biases[c] += lr * t
    return LinearOvaModel(weights, biases)


def predict(model, features):
    """Argmax of class scores; ties break to the lowest class index."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != model.feature_length:
        raise NetError("feature length does not match model layout")
    scores = features @ model.weights.T + model.biases
    return scores.argmax(axis=1)


def save_model(model, path):
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<III", MODEL_VERSION, model.num_classes,
                            model.feature_length))
        f.write(model.weights.astype("<f4").tobytes())
        f.write(model.biases.astype("<f4").tobytes())


def load_model(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MODEL_MAGIC:
        raise NetError("not a classifier model file")
    version, classes, d = struct.unpack_from("<III", data, 4)
    if version != MODEL_VERSION:
        raise NetError(f"unsupported model version {version}")
    need = 16 + 4 * classes * d + 4 * classes
    if len(data) < need:
        raise NetError("truncated model file")
    weights = np.frombuffer(data, dtype="<f4", count=classes * d,
                            offset=16).reshape(classes, d).astype(np.float64)
    biases = np.frombuffer(data, dtype="<f4", count=classes,
                           offset=16 + 4 * classes * d).astype(np.float64)
    return LinearOvaModel(weights, biases)
