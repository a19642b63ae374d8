"""Minimal convolutional network with seeded reverse-mode input gradients.

Layers operate on single images shaped (channels, height, width) in float64.
The backward pass can be seeded at any layer's output, which yields the
seed-weighted sum of Jacobian rows with respect to the input in one pass.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

WEIGHTS_MAGIC = b"PDDW"
WEIGHTS_VERSION = 1


class NetError(ValueError):
    """Invalid input to a network operation."""


class WeightFormatError(RuntimeError):
    """Malformed or unsupported weight container file."""


def _im2col(x, kh, kw, pad):
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    oh = h + 2 * pad - kh + 1
    ow = w + 2 * pad - kw + 1
    s0, s1, s2 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, (c, kh, kw, oh, ow), (s0, s1, s2, s1, s2), writeable=False)
    return windows.reshape(c * kh * kw, oh * ow).copy(), (oh, ow)


def _col2im(cols, in_shape, kh, kw, pad):
    c, h, w = in_shape
    oh = h + 2 * pad - kh + 1
    ow = w + 2 * pad - kw + 1
    gx = np.zeros((c, h + 2 * pad, w + 2 * pad))
    cols = cols.reshape(c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            gx[:, i:i + oh, j:j + ow] += cols[:, i, j]
    if pad:
        gx = gx[:, pad:-pad, pad:-pad]
    return gx


class Layer:
    kind = "base"

    def out_shape(self, in_shape):
        raise NotImplementedError

    def forward(self, x):
        """Return (output, cache)."""
        raise NotImplementedError

    def backward(self, gy, cache):
        """Gradient with respect to the layer input."""
        raise NotImplementedError

    def param_grads(self, gy, cache):
        """Gradients for self.params, same order."""
        return []

    @property
    def params(self):
        return []


class Conv2d(Layer):
    kind = "convolution"

    def __init__(self, in_channels, out_channels, kernel, pad=0):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.pad = pad
        self.weight = np.zeros((out_channels, in_channels, kernel, kernel))
        self.bias = np.zeros(out_channels)

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise NetError(f"conv expects {self.in_channels} input channels, got {c}")
        k, p = self.kernel, self.pad
        return (self.out_channels, h + 2 * p - k + 1, w + 2 * p - k + 1)

    def forward(self, x):
        cols, (oh, ow) = _im2col(x, self.kernel, self.kernel, self.pad)
        wmat = self.weight.reshape(self.out_channels, -1)
        y = (wmat @ cols + self.bias[:, None]).reshape(self.out_channels, oh, ow)
        return y, (x.shape, cols)

    def backward(self, gy, cache):
        in_shape, _ = cache
        wmat = self.weight.reshape(self.out_channels, -1)
        gcols = wmat.T @ gy.reshape(self.out_channels, -1)
        return _col2im(gcols, in_shape, self.kernel, self.kernel, self.pad)

    def param_grads(self, gy, cache):
        _, cols = cache
        gflat = gy.reshape(self.out_channels, -1)
        gw = (gflat @ cols.T).reshape(self.weight.shape)
        gb = gflat.sum(axis=1)
        return [gw, gb]

    @property
    def params(self):
        return [self.weight, self.bias]


class ReLU(Layer):
    kind = "relu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, gy, cache):
        return gy * cache


class MaxPool2d(Layer):
    kind = "maxpool"

    def __init__(self, window=2):
        self.window = window

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, h // self.window, w // self.window)

    def forward(self, x):
        c, h, w = x.shape
        s = self.window
        oh, ow = h // s, w // s
        v = x[:, :oh * s, :ow * s].reshape(c, oh, s, ow, s)
        v = v.transpose(0, 1, 3, 2, 4).reshape(c, oh, ow, s * s)
        # argmax picks the first maximum, i.e. the lowest flat index in the window
        idx = v.argmax(axis=-1)
        y = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)

    def backward(self, gy, cache):
        in_shape, idx = cache
        c, h, w = in_shape
        s = self.window
        oh, ow = h // s, w // s
        gwin = np.zeros((c, oh, ow, s * s))
        np.put_along_axis(gwin, idx[..., None], gy[..., None], axis=-1)
        gx = np.zeros(in_shape)
        gx[:, :oh * s, :ow * s] = (
            gwin.reshape(c, oh, ow, s, s).transpose(0, 1, 3, 2, 4)
            .reshape(c, oh * s, ow * s))
        return gx


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, out_features):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = np.zeros((out_features, in_features))
        self.bias = np.zeros(out_features)

    def out_shape(self, in_shape):
        n = int(np.prod(in_shape))
        if n != self.in_features:
            raise NetError(f"dense expects {self.in_features} inputs, got {n}")
        return (self.out_features,)

    def forward(self, x):
        xf = x.reshape(-1)
        return self.weight @ xf + self.bias, (x.shape, xf)

    def backward(self, gy, cache):
        in_shape, _ = cache
        return (self.weight.T @ gy).reshape(in_shape)

    def param_grads(self, gy, cache):
        _, xf = cache
        return [np.outer(gy, xf), gy.copy()]

    @property
    def params(self):
        return [self.weight, self.bias]


class Network:
    """Ordered layer stack over a fixed input shape."""

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.layer_shapes = []
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
            self.layer_shapes.append(shape)

    @property
    def num_classes(self):
        return self.layer_shapes[-1][0]

    @property
    def last_pool_index(self):
        for i in range(len(self.layers) - 1, -1, -1):
            if self.layers[i].kind == "maxpool":
                return i
        raise NetError("network has no pooling layer")

    def channel_count(self, layer_index):
        shape = self.layer_shapes[layer_index]
        if len(shape) != 3:
            raise NetError(f"layer {layer_index} output is not channel-organized")
        return shape[0]

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise NetError(f"input shape {x.shape} != network input {self.input_shape}")
        return x

    def forward(self, x):
        """All per-layer outputs, in order."""
        x = self._check_input(x)
        outs = []
        for layer in self.layers:
            x, _ = layer.forward(x)
            outs.append(x)
        return outs

    def scores(self, x):
        return self.forward(x)[-1]

    def _forward_cached(self, x, upto):
        caches = []
        for layer in self.layers[:upto + 1]:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward_seeded(self, x, layer_index, seed):
        """Seed-weighted sum of Jacobian rows of layer `layer_index`'s output
        with respect to the input image."""
        x = self._check_input(x)
        if not 0 <= layer_index < len(self.layers):
            raise NetError(f"layer index {layer_index} out of range")
        seed = np.asarray(seed, dtype=np.float64)
        out_shape = self.layer_shapes[layer_index]
        if seed.size != int(np.prod(out_shape)):
            raise NetError(
                f"seed length {seed.size} != {int(np.prod(out_shape))} "
                f"elements of layer {layer_index}")
        _, caches = self._forward_cached(x, layer_index)
        g = seed.reshape(out_shape)
        for k in range(layer_index, -1, -1):
            g = self.layers[k].backward(g, caches[k])
        return g

    def channel_seed(self, layer_index, channel):
        """Flat seed that is 1 on every element of one channel, 0 elsewhere."""
        shape = self.layer_shapes[layer_index]
        if len(shape) != 3:
            raise NetError(f"layer {layer_index} output is not channel-organized")
        if not 0 <= channel < shape[0]:
            raise NetError(f"channel {channel} out of range for layer {layer_index}")
        seed = np.zeros(shape)
        seed[channel] = 1.0
        return seed.reshape(-1)

    def clone(self):
        net = Network.__new__(Network)
        net.input_shape = self.input_shape
        net.layer_shapes = list(self.layer_shapes)
        net.layers = []
        for layer in self.layers:
            if layer.kind == "convolution":
                copy = Conv2d(layer.in_channels, layer.out_channels,
                              layer.kernel, layer.pad)
                copy.weight = layer.weight.copy()
                copy.bias = layer.bias.copy()
            elif layer.kind == "dense":
                copy = Dense(layer.in_features, layer.out_features)
                copy.weight = layer.weight.copy()
                copy.bias = layer.bias.copy()
            elif layer.kind == "maxpool":
                copy = MaxPool2d(layer.window)
            else:
                copy = ReLU()
            net.layers.append(copy)
        return net


def build_reference_net(input_shape=(3, 64, 64), num_classes=4, seed=0):
    """conv(3->16, 5x5, pad 2) - relu - pool2 - conv(16->32, 5x5, pad 2)
    - relu - pool2 - dense."""
    rng = np.random.default_rng(seed)
    c, h, w = input_shape
    conv1 = Conv2d(c, 16, 5, pad=2)
    conv2 = Conv2d(16, 32, 5, pad=2)
    dense = Dense(32 * (h // 4) * (w // 4), num_classes)
    for layer in (conv1, conv2, dense):
        fan_in = layer.weight[0].size
        layer.weight[:] = rng.normal(0.0, np.sqrt(2.0 / fan_in), layer.weight.shape)
    return Network([conv1, ReLU(), MaxPool2d(2), conv2, ReLU(), MaxPool2d(2), dense],
                   input_shape)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 10
    batch_size: int = 16
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0


def softmax(scores):
    e = np.exp(scores - scores.max())
    return e / e.sum()


def loss_and_grads(net, x, label):
    """Cross-entropy loss and per-parameter gradients for one example."""
    x = net._check_input(x)
    acts, caches = [], []
    h = x
    for layer in net.layers:
        h, cache = layer.forward(h)
        acts.append(h)
        caches.append(cache)
    p = softmax(acts[-1])
    loss = -np.log(max(p[label], 1e-300))
    g = p.copy()
    g[label] -= 1.0
    grads = []
    for k in range(len(net.layers) - 1, -1, -1):
        grads.append(net.layers[k].param_grads(g, caches[k]))
        g = net.layers[k].backward(g, caches[k])
    grads.reverse()
    return loss, grads


def train(net, images, labels, config=None):
    """SGD with momentum on softmax cross-entropy. Returns a trained copy."""
    if config is None:
        config = TrainConfig()
    if len(images) == 0:
        raise NetError("empty training set")
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= net.num_classes:
        raise NetError("label outside [0, num_classes)")
    net = net.clone()
    rng = np.random.default_rng(config.seed)
    velocity = [[np.zeros_like(p) for p in layer.params] for layer in net.layers]
    n = len(images)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            accum = [[np.zeros_like(p) for p in layer.params] for layer in net.layers]
            for i in batch:
                _, grads = loss_and_grads(net, images[i], labels[i])
                for li, layer_grads in enumerate(grads):
                    for pi, g in enumerate(layer_grads):
                        accum[li][pi] += g
            scale = 1.0 / len(batch)
            for li, layer in enumerate(net.layers):
                for pi, p in enumerate(layer.params):
                    v = velocity[li][pi]
                    v *= config.momentum
                    g = scale * accum[li][pi]
                    if config.weight_decay:
                        g = g + config.weight_decay * p
                    v -= config.learning_rate * g
                    p += v
    return net


def training_loss(net, images, labels):
    total = 0.0
    for x, y in zip(images, labels):
        loss, _ = loss_and_grads(net, x, y)
        total += loss
    return total / len(images)


def save_weights(net, path):
    """Binary container: magic, version, record count, then one record per
    parameter tensor (layer index, rank, extents, float32 payload)."""
    records = []
    for li, layer in enumerate(net.layers):
        for p in layer.params:
            records.append((li, p))
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<II", WEIGHTS_VERSION, len(records)))
        for li, p in records:
            f.write(struct.pack("<II", li, p.ndim))
            f.write(struct.pack(f"<{p.ndim}I", *p.shape))
            f.write(p.astype("<f4").tobytes())


def load_weights(path, template):
    """Load parameters saved by save_weights into a clone of `template`."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != WEIGHTS_MAGIC:
        raise WeightFormatError("bad magic bytes, not a weight container")
    if len(data) < 12:
        raise WeightFormatError("truncated header")
    version, count = struct.unpack_from("<II", data, 4)
    if version != WEIGHTS_VERSION:
        raise WeightFormatError(f"unsupported weight format version {version}")
    net = template.clone()
    expected = []
    for li, layer in enumerate(net.layers):
        for pi, p in enumerate(layer.params):
            expected.append((li, pi, p))
    off = 12
    if count != len(expected):
        raise WeightFormatError(
            f"file has {count} parameter records, network needs {len(expected)}")
    for li, pi, p in expected:
        try:
            rec_layer, rank = struct.unpack_from("<II", data, off)
            off += 8
            extents = struct.unpack_from(f"<{rank}I", data, off)
            off += 4 * rank
            n = int(np.prod(extents))
            if len(data) - off < 4 * n:
                raise WeightFormatError(f"truncated payload for layer {li}")
            payload = np.frombuffer(data, dtype="<f4", count=n, offset=off)
            off += 4 * n
        except struct.error as exc:
            raise WeightFormatError(f"truncated record for layer {li}") from exc
        if rec_layer != li:
            raise WeightFormatError(
                f"record names layer {rec_layer}, expected layer {li}")
        if tuple(extents) != p.shape:
            raise WeightFormatError(
                f"layer {li}: extents {tuple(extents)} != expected {p.shape}")
        p[:] = payload.reshape(p.shape).astype(np.float64)
    return net
