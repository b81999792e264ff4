"""Image container, color conversion and raster I/O.

Pixels are floats in [0, 1], stored row-major as an (h, w) array for
single-channel images or (h, w, 3) for RGB. Arrays are frozen after
construction so images can be shared freely across threads.

Supported files: PNG (8-bit, via Pillow), binary PPM/PGM (8- or 16-bit),
and a raw float map format for defocus maps: 16-byte header consisting of
the magic "DFKMAP01" plus little-endian u32 width and height, followed by
width*height little-endian float32 values.
"""

import os
import re
import struct
import tempfile

import numpy as np
from PIL import Image as PILImage

from .errors import InputError

MAP_MAGIC = b"DFKMAP01"


class Image:
    """Immutable float raster with 1 or 3 channels."""

    def __init__(self, data):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 2:
            channels = 1
        elif data.ndim == 3 and data.shape[2] == 3:
            channels = 3
        else:
            raise InputError(f"image must be (h, w) or (h, w, 3), got {data.shape}")
        if data.size == 0:
            raise InputError("empty image")
        if not np.all(np.isfinite(data)):
            raise InputError("image contains non-finite values")
        data = np.clip(data, 0.0, 1.0)
        data.flags.writeable = False
        self.data = data
        self.height, self.width = data.shape[:2]
        self.channels = channels

    def to_rgb(self):
        """Replicate a single channel to 3; identity on RGB images."""
        if self.channels == 3:
            return self
        return Image(np.repeat(self.data[:, :, None], 3, axis=2))


def value_channel(img):
    """HSV value channel: per-pixel max over R, G, B."""
    if img.channels != 3:
        raise InputError("value_channel expects a 3-channel image")
    return Image(img.data.max(axis=2))


LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_grayscale(img):
    """Rec.601 luma, used for the grayscale feature patches."""
    if img.channels != 3:
        raise InputError("to_grayscale expects a 3-channel image")
    return Image(img.data @ LUMA_WEIGHTS)


def luma(rgb):
    """Rec.601 luma of a raw (h, w, 3) array (no clamping)."""
    return np.asarray(rgb) @ LUMA_WEIGHTS


def atomic_write(path, payload):
    """Write bytes to path via a temp file + rename in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def quantize(data, maxval=255):
    return np.clip(np.rint(np.asarray(data) * maxval), 0, maxval).astype(
        np.uint8 if maxval <= 255 else np.uint16)


# ---------------------------------------------------------------------------
# PPM / PGM (binary P5 / P6)

def _pnm_payload(img, maxval):
    arr = quantize(img.data, maxval)
    kind = b"P5" if img.channels == 1 else b"P6"
    header = kind + b"\n%d %d\n%d\n" % (img.width, img.height, maxval)
    if maxval > 255:
        body = arr.astype(">u2").tobytes()
    else:
        body = arr.tobytes()
    return header + body


def _read_pnm(payload, path):
    # header tokens: magic, width, height, maxval; comments start with '#'
    tokens = []
    pos = 0
    while len(tokens) < 4:
        match = re.match(rb"\s*(#[^\n]*\n|\S+)", payload[pos:])
        if match is None:
            raise InputError(f"{path}: truncated PNM header")
        pos += match.end()
        tok = match.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise InputError(f"{path}: unsupported PNM magic {magic!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval <= 0 or maxval > 65535:
        raise InputError(f"{path}: bad maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    channels = 1 if magic == b"P5" else 3
    count = width * height * channels
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    body = payload[pos:pos + count * dtype.itemsize]
    if len(body) != count * dtype.itemsize:
        raise InputError(f"{path}: truncated PNM pixel data")
    arr = np.frombuffer(body, dtype=dtype).astype(np.float64) / maxval
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Image(arr.reshape(shape))


# ---------------------------------------------------------------------------
# public load/save

def save_image(img, path, maxval=255):
    ext = os.path.splitext(path)[1].lower()
    if ext in (".ppm", ".pgm"):
        if ext == ".pgm" and img.channels != 1:
            raise InputError("PGM requires a single-channel image")
        if ext == ".ppm" and img.channels != 3:
            raise InputError("PPM requires a 3-channel image")
        atomic_write(path, _pnm_payload(img, maxval))
    elif ext == ".png":
        arr = quantize(img.data, 255)
        mode = "L" if img.channels == 1 else "RGB"
        import io
        buf = io.BytesIO()
        PILImage.fromarray(arr, mode=mode).save(buf, format="PNG")
        atomic_write(path, buf.getvalue())
    else:
        raise InputError(f"unsupported image format {ext!r} (use .png, .ppm or .pgm)")


def load_image(path):
    try:
        with open(path, "rb") as fh:
            payload = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    if payload[:2] in (b"P5", b"P6"):
        return _read_pnm(payload, path)
    if payload[:8] == b"\x89PNG\r\n\x1a\n":
        import io
        pil = PILImage.open(io.BytesIO(payload))
        if pil.mode == "L":
            return Image(np.asarray(pil, dtype=np.float64) / 255.0)
        if pil.mode in ("I", "I;16"):
            return Image(np.asarray(pil, dtype=np.float64) / 65535.0)
        return Image(np.asarray(pil.convert("RGB"), dtype=np.float64) / 255.0)
    raise InputError(f"{path}: unsupported image format")


# ---------------------------------------------------------------------------
# raw float maps

def save_map(values, path):
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise InputError("float map must be 2-D")
    height, width = arr.shape
    header = MAP_MAGIC + struct.pack("<II", width, height)
    atomic_write(path, header + arr.tobytes())


def load_map(path):
    try:
        with open(path, "rb") as fh:
            payload = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read map {path}: {exc}") from exc
    if payload[:8] != MAP_MAGIC:
        raise InputError(f"{path}: not a float map (bad magic)")
    width, height = struct.unpack("<II", payload[8:16])
    count = width * height
    body = payload[16:16 + 4 * count]
    if len(body) != 4 * count:
        raise InputError(f"{path}: truncated float map")
    return np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(height, width)


def render_map(values, path, lo, hi):
    """Scale a float map into [0, 1] by (v - lo)/(hi - lo) and save as PGM."""
    span = hi - lo
    scaled = (np.asarray(values, dtype=np.float64) - lo) / (span if span > 0 else 1.0)
    save_image(Image(np.clip(scaled, 0.0, 1.0)), path)
