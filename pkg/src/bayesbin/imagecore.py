"""Raster containers, PGM/PPM I/O and the windowed filters used by the pipeline."""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    """Raised when an image file cannot be decoded."""


class UnsupportedDepthError(ImageFormatError):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster, row-major, shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"GrayImage needs a non-empty 2-D array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise ValueError("GrayImage values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def as_float(self) -> np.ndarray:
        """Float64 view scaled to [0, 1]."""
        return self.data.astype(np.float64) / 255.0

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Two-class raster. ``foreground`` is True where a pixel is text.

    On disk and in :attr:`data` text is 0 (black) and background is 1 (white).
    """

    foreground: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.foreground)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"BinaryImage needs a non-empty 2-D array, got shape {arr.shape}")
        arr = np.array(arr, dtype=bool, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "foreground", arr)

    @classmethod
    def from_gray(cls, image: GrayImage, level: int = 128) -> "BinaryImage":
        """Pixels darker than ``level`` become text."""
        return cls(np.asarray(image) < level)

    @property
    def height(self) -> int:
        return self.foreground.shape[0]

    @property
    def width(self) -> int:
        return self.foreground.shape[1]

    @property
    def shape(self):
        return self.foreground.shape

    @property
    def data(self) -> np.ndarray:
        return (~self.foreground).astype(np.uint8)

    def to_gray(self) -> GrayImage:
        return GrayImage(np.where(self.foreground, 0, 255).astype(np.uint8))

    def __eq__(self, other):
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.foreground, other.foreground))

    __hash__ = None


@dataclass(frozen=True)
class Histogram:
    bins: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=np.int64)
        if b.shape != (256,):
            raise ValueError("Histogram needs exactly 256 bins")
        if np.any(b < 0):
            raise ValueError("Histogram counts must be non-negative")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "bins", b)

    @property
    def total(self) -> int:
        return int(self.bins.sum())

    @classmethod
    def of(cls, levels: np.ndarray) -> "Histogram":
        return cls(np.bincount(np.asarray(levels, dtype=np.int64).ravel(), minlength=256)[:256])


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def _read_token(buf: bytes, pos: int):
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated header")
    return buf[start:pos], pos


def _parse_netpbm(buf: bytes, path) -> GrayImage:
    magic, pos = _read_token(buf, 0)
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"{path}: unsupported magic {magic!r} (expected P5 or P6)")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise ImageFormatError(f"{path}: malformed header field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: malformed header, size {width}x{height}")
    if maxval != 255:
        raise UnsupportedDepthError(f"{path}: unsupported bit depth (maxval {maxval}, need 255)")
    # exactly one whitespace byte separates header from raster
    pos += 1
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    raster = buf[pos:pos + need]
    if len(raster) != need:
        raise ImageFormatError(f"{path}: truncated raster ({len(raster)} of {need} bytes)")
    arr = np.frombuffer(raster, dtype=np.uint8)
    if channels == 1:
        return GrayImage(arr.reshape(height, width))
    return GrayImage(luminance(arr.reshape(height, width, 3)))


def luminance(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma of an (h, w, 3) uint8 array, rounded to uint8."""
    rgb = np.asarray(rgb, dtype=np.float64)
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.rint(y), 0, 255).astype(np.uint8)


def load_image(path) -> GrayImage:
    """Read a P5/P6 netpbm file (or PNG when Pillow is installed) as grayscale."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"{path}: unreadable file ({exc.strerror or exc})") from exc
    if buf[:2] in (b"P5", b"P6"):
        return _parse_netpbm(buf, path)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(path)
    raise ImageFormatError(f"{path}: unsupported format")


def _load_png(path) -> GrayImage:
    try:
        from PIL import Image
    except ImportError:
        raise ImageFormatError(f"{path}: PNG support requires Pillow") from None
    with Image.open(path) as im:
        if im.mode in ("I;16", "I", "F"):
            raise UnsupportedDepthError(f"{path}: unsupported bit depth (mode {im.mode})")
        if im.mode in ("L", "1", "P", "LA"):
            arr = np.asarray(im.convert("L"))
        else:
            arr = luminance(np.asarray(im.convert("RGB")))
    return GrayImage(arr)


def _encode_p5(image) -> bytes:
    if isinstance(image, BinaryImage):
        image = image.to_gray()
    if not isinstance(image, GrayImage):
        raise TypeError(f"cannot save {type(image).__name__}")
    h, w = image.shape
    return b"P5\n%d %d\n255\n" % (w, h) + image.data.tobytes()


def save_image(image, path) -> None:
    """Write ``image`` as P5. The file appears atomically (temp file + rename)."""
    path = Path(path)
    payload = _encode_p5(image)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".",
                                   prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def to_gray(values: np.ndarray) -> GrayImage:
    """Quantize a float image in [0, 1] to 8 bits (used for stage dumps)."""
    return GrayImage(np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# Windowed filters
# ---------------------------------------------------------------------------

def _check_window(window) -> int:
    if int(window) != window or window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window!r}")
    return int(window)


def _box_sum(padded: np.ndarray, window: int, out_shape) -> np.ndarray:
    """Sum over every ``window``x``window`` block of an edge-padded array.

    Separable prefix sums; integer input stays exact.
    """
    h, w = out_shape
    acc_dtype = np.int64 if np.issubdtype(padded.dtype, np.integer) or padded.dtype == bool else np.float64
    c = np.zeros((padded.shape[0], padded.shape[1] + 1), dtype=acc_dtype)
    np.cumsum(padded, axis=1, dtype=acc_dtype, out=c[:, 1:])
    rows = c[:, window:window + w] - c[:, :w]
    c2 = np.zeros((rows.shape[0] + 1, w), dtype=acc_dtype)
    np.cumsum(rows, axis=0, out=c2[1:])
    return c2[window:window + h] - c2[:h]


def mean_filter(image, window: int) -> np.ndarray:
    """Mean over a ``window``x``window`` neighbourhood with replicate borders."""
    window = _check_window(window)
    arr = np.asarray(image, dtype=np.float64)
    if window == 1:
        return arr.copy()
    r = window // 2
    # offsetting by the minimum keeps constant regions exact
    base = arr.min()
    padded = np.pad(arr - base, r, mode="edge")
    return _box_sum(padded, window, arr.shape) / float(window * window) + base


def median_filter(image, window: int) -> np.ndarray:
    """Windowed median of an 8-bit image with replicate borders.

    Runs one integral-count pass per gray level present in the image, so the
    cost per pixel is bounded by the 256 histogram bins and does not grow with
    the window. Returns uint8.
    """
    window = _check_window(window)
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise TypeError("median_filter expects 8-bit data")
    if window == 1:
        return arr.copy()
    r = window // 2
    padded = np.pad(arr, r, mode="edge")
    rank = (window * window + 1) // 2
    levels = np.flatnonzero(np.bincount(padded.ravel(), minlength=256))
    out = np.full(arr.shape, levels[-1], dtype=np.uint8)
    undecided = np.ones(arr.shape, dtype=bool)
    for v in levels[:-1]:
        counts = _box_sum(padded <= v, window, arr.shape)
        hit = undecided & (counts >= rank)
        out[hit] = v
        undecided &= ~hit
        if not undecided.any():
            break
    return out


def clamp_window(window: int, shape) -> int:
    """Largest odd window not exceeding ``window`` or the smaller image side."""
    limit = min(shape)
    if limit % 2 == 0:
        limit -= 1
    return max(1, min(int(window), limit))
