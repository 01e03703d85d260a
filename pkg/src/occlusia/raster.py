"""Dense rasters and their file formats.

Grids are numpy arrays indexed [row, col], row-major, float32 for scalar
fields. Undefined values are NaN. The interchange format for float fields
is .fmap: magic "FMAP\\0", little-endian u32 width, u32 height, u8 channel
count, u8 dtype tag (0 = float32), then the raw float32 payload in
row-major order (channel-interleaved for multi-channel maps).

Instance id maps travel as 16-bit grayscale PNG plus a JSON class table.
"""

import json
import os
import struct
import tempfile

import numpy as np
from PIL import Image

FMAP_MAGIC = b"FMAP\x00"
_DTYPE_F32 = 0


def atomic_write_bytes(path, payload):
    """Write bytes to path via a temp file and rename, so partial writes
    never leave a truncated artifact behind."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-fmap-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_fmap(path, array):
    """Serialize a float field to .fmap.

    Args:
        path: output file path.
        array: (h, w) or (h, w, c) array; cast to float32. NaN encodes
            undefined samples and round-trips exactly.
    """
    arr = np.asarray(array)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"save_fmap: need (h, w) or (h, w, c), got {arr.shape}")
    h, w, c = arr.shape
    if c < 1 or c > 255:
        raise ValueError(f"save_fmap: channel count {c} out of range")
    header = FMAP_MAGIC + struct.pack("<IIBB", w, h, c, _DTYPE_F32)
    payload = arr.astype("<f4").tobytes(order="C")
    atomic_write_bytes(path, header + payload)


def load_fmap(path):
    """Read a .fmap file back into a float32 array.

    Returns:
        (h, w) array for single-channel files, (h, w, c) otherwise.

    Raises:
        ValueError: bad magic, dtype tag, or truncated payload.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(FMAP_MAGIC) + 10 or blob[: len(FMAP_MAGIC)] != FMAP_MAGIC:
        raise ValueError(f"{path}: not an fmap file")
    w, h, c, dtype = struct.unpack_from("<IIBB", blob, len(FMAP_MAGIC))
    if dtype != _DTYPE_F32:
        raise ValueError(f"{path}: unknown dtype tag {dtype}")
    expected = w * h * c * 4
    payload = blob[len(FMAP_MAGIC) + 10 :]
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float32)
    if c == 1:
        return arr[:, :, 0]
    return arr


def save_image_gray(path, image):
    """Write a [0, 1] float image as 8-bit grayscale PNG."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    img = Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L")
    buf = _png_bytes(img)
    atomic_write_bytes(path, buf)


def load_image_gray(path):
    """Read an image file as a (h, w) float32 array in [0, 1].

    Color inputs are converted to luminance; 8-bit and 16-bit integer
    images are scaled by their full range.
    """
    with Image.open(path) as img:
        if img.mode in ("I;16", "I"):
            arr = np.asarray(img.convert("F"), dtype=np.float32) / 65535.0
        elif img.mode == "F":
            arr = np.asarray(img, dtype=np.float32)
        else:
            arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
    return arr.astype(np.float32)


def save_instance_png(path, ids):
    """Write an int instance-id map as 16-bit grayscale PNG."""
    arr = np.asarray(ids)
    if arr.min() < 0 or arr.max() > 65535:
        raise ValueError("instance ids must fit in uint16")
    img = Image.fromarray(arr.astype(np.uint16))
    atomic_write_bytes(path, _png_bytes(img))


def load_instance_png(path):
    """Read a 16-bit instance-id PNG into an int32 array."""
    with Image.open(path) as img:
        arr = np.asarray(img, dtype=np.int32)
    return arr


def save_class_table(path, classes):
    """Write the instance-id -> class-name table as JSON."""
    payload = json.dumps({str(k): v for k, v in sorted(classes.items())}, indent=2)
    atomic_write_bytes(path, payload.encode("utf-8") + b"\n")


def load_class_table(path):
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return {int(k): str(v) for k, v in raw.items()}


def _png_bytes(img):
    import io

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def bilinear_sample(field, xs, ys):
    """Sample a 2-D field at float (x, y) = (col, row) positions.

    Coordinates are clamped to the valid range, so querying outside the
    image returns border values.

    Args:
        field: (h, w) array.
        xs, ys: broadcastable float arrays of column / row positions.

    Returns:
        float64 array of interpolated values, shaped like xs.
    """
    f = np.asarray(field, dtype=np.float64)
    h, w = f.shape
    x = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = f[y0, x0] * (1.0 - fx) + f[y0, x1] * fx
    bot = f[y1, x0] * (1.0 - fx) + f[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def resize_bilinear(field, out_h, out_w):
    """Resize a 2-D field with bilinear interpolation (align-corners style
    pixel-center mapping)."""
    f = np.asarray(field, dtype=np.float64)
    h, w = f.shape
    if out_h < 1 or out_w < 1:
        raise ValueError("resize_bilinear: output dims must be positive")
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return bilinear_sample(f, gx, gy)


def gaussian_kernel1d(sigma, radius=None):
    """Normalized 1-D Gaussian taps. Default radius = ceil(2*sigma)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if radius is None:
        radius = int(np.ceil(2.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(field, sigma, radius=None):
    """Separable Gaussian blur with edge-replication padding."""
    f = np.asarray(field, dtype=np.float64)
    k = gaussian_kernel1d(sigma, radius)
    r = (len(k) - 1) // 2
    padded = np.pad(f, ((r, r), (0, 0)), mode="edge")
    rows = np.zeros_like(f)
    for i, kv in enumerate(k):
        rows += kv * padded[i : i + f.shape[0], :]
    padded = np.pad(rows, ((0, 0), (r, r)), mode="edge")
    out = np.zeros_like(f)
    for i, kv in enumerate(k):
        out += kv * padded[:, i : i + f.shape[1]]
    return out
