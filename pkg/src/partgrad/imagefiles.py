"""Zero-dependency PPM (P6) / PGM (P5) image reading and writing.

Images are exchanged with the rest of the package as float arrays in [0, 1]:
color images as (3, H, W), grayscale maps as (H, W). PNG import is optional
and only attempted when Pillow is installed.
"""

import numpy as np


class ImageFormatError(RuntimeError):
    pass


def _read_header(data, magic):
    if not data.startswith(magic):
        raise ImageFormatError(f"expected {magic.decode()} file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated header")
        fields.append(int(data[start:pos]))
    return fields[0], fields[1], fields[2], pos + 1


def read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    w, h, maxval, off = _read_header(data, b"P6")
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval}")
    n = w * h * 3
    if len(data) - off < n:
        raise ImageFormatError("truncated pixel data")
    pixels = np.frombuffer(data, dtype=np.uint8, count=n, offset=off)
    return pixels.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float64) / 255.0


def write_ppm(path, image):
    """image: (3, H, W) floats in [0, 1]."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    bytes_ = np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    h, w, _ = bytes_.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(bytes_.tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    w, h, maxval, off = _read_header(data, b"P5")
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval}")
    n = w * h
    if len(data) - off < n:
        raise ImageFormatError("truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8, count=n, offset=off).reshape(h, w)


def write_pgm(path, gray):
    """gray: (H, W) uint8."""
    arr = np.asarray(gray, dtype=np.uint8)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(arr.tobytes())


def heatmap_to_gray(gmap):
    """Linear rescale so the map maximum becomes 255."""
    gmap = np.asarray(gmap, dtype=np.float64)
    top = gmap.max()
    if top <= 0:
        return np.zeros(gmap.shape, dtype=np.uint8)
    return np.round(gmap / top * 255.0).astype(np.uint8)


def overlay_mask(image, mask):
    """Paint mask pixels red over a copy of the (3, H, W) image."""
    out = np.asarray(image, dtype=np.float64).copy()
    mask = np.asarray(mask, dtype=bool)
    out[0][mask] = 1.0
    out[1][mask] = 0.0
    out[2][mask] = 0.0
    return out


def read_image(path, allow_png=False):
    """Decode an input image to (3, H, W) floats in [0, 1]."""
    path = str(path)
    if path.endswith(".ppm"):
        return read_ppm(path)
    if path.endswith(".pgm"):
        gray = read_pgm(path).astype(np.float64) / 255.0
        return np.stack([gray, gray, gray])
    if allow_png and path.endswith(".png"):
        from PIL import Image

        arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
        return arr.transpose(2, 0, 1) / 255.0
    raise ImageFormatError(f"unsupported image format: {path}")
