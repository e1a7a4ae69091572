"""Image buffers, label maps and their on-disk codecs.

Pixels are stored as ``(rows, cols, channels)`` numpy arrays.  Binary
netpbm (P5/P6, maxval 255) is the only raster format; label maps use a
small little-endian container (magic ``RLBL``).
"""
from __future__ import annotations

import os
import re
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ImageFormatError",
    "ImageBuffer",
    "ScalarMap",
    "SegmentStats",
    "LabelMap",
    "load_ppm",
    "save_ppm",
    "rgb_to_lab",
    "render_mean_colors",
    "save_labels",
    "load_labels",
    "label_stats",
]

LABEL_MAGIC = b"RLBL"


class ImageFormatError(ValueError):
    """Raised for malformed, truncated or unsupported image/label files."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ImageBuffer:
    """Row-major multi-channel raster.

    ``data`` has shape ``(rows, cols, channels)``.  A 2-D array is accepted
    and treated as a single channel.  8-bit images use ``uint8``; derived
    buffers (e.g. Lab) are floating point.
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3:
            raise ValueError(f"image data must be 2-D or 3-D, got shape {a.shape}")
        if min(a.shape) < 1:
            raise ValueError(f"image must have rows, cols, channels >= 1, got {a.shape}")
        object.__setattr__(self, "data", _readonly(a))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def pixel(self, r: int, c: int) -> np.ndarray:
        return self.data[r, c]

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return (
            self.data.shape == other.data.shape
            and self.data.dtype == other.data.dtype
            and bool(np.array_equal(self.data, other.data))
        )

    __hash__ = None


@dataclass(frozen=True)
class ScalarMap:
    """Single-channel floating-point map (gradient magnitude, saliency)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or min(v.shape) < 1:
            raise ValueError(f"scalar map must be a non-empty 2-D array, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar map contains non-finite values")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class SegmentStats:
    """Per-label statistics, indexed by label.

    Row 0 belongs to the null label and is always empty.
    """

    area: np.ndarray  # (K+1,)
    mean_color: np.ndarray  # (K+1, channels)
    bbox: np.ndarray  # (K+1, 4): min_row, min_col, max_row, max_col
    centroid: np.ndarray  # (K+1, 2): row, col

    @property
    def segment_count(self) -> int:
        return len(self.area) - 1


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel labels in ``1..segment_count``; 0 is the null sentinel."""

    labels: np.ndarray
    segment_count: int
    stats: SegmentStats | None = field(default=None, compare=False)

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or min(lab.shape) < 1:
            raise ValueError(f"labels must be a non-empty 2-D array, got {lab.shape}")
        if lab.dtype != np.uint32:
            if lab.size and (lab.min() < 0 or lab.max() > 0xFFFFFFFF):
                raise ValueError("labels must fit in unsigned 32 bits")
            lab = lab.astype(np.uint32)
        object.__setattr__(self, "labels", _readonly(lab))
        object.__setattr__(self, "segment_count", int(self.segment_count))

    @property
    def rows(self) -> int:
        return self.labels.shape[0]

    @property
    def cols(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def with_stats(self, image: ImageBuffer) -> "LabelMap":
        return LabelMap(self.labels, self.segment_count, label_stats(image, self))

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return self.segment_count == other.segment_count and bool(
            np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


def label_stats(image: ImageBuffer, labels: LabelMap) -> SegmentStats:
    """Area, mean colour, bounding box and centroid for every label."""
    if image.shape != labels.shape:
        raise ValueError(f"dimension mismatch: image {image.shape} vs labels {labels.shape}")
    k = labels.segment_count
    flat = labels.labels.ravel().astype(np.intp)
    if flat.size and flat.max() > k:
        raise ValueError(f"label {flat.max()} exceeds segment_count {k}")
    n = k + 1
    area = np.bincount(flat, minlength=n).astype(np.int64)
    safe = np.maximum(area, 1)[:, None]

    pix = image.data.reshape(-1, image.channels).astype(np.float64)
    sums = np.empty((n, image.channels))
    for ch in range(image.channels):
        sums[:, ch] = np.bincount(flat, weights=pix[:, ch], minlength=n)
    mean = sums / safe

    rr, cc = np.divmod(np.arange(flat.size), image.cols)
    centroid = np.stack(
        [np.bincount(flat, weights=rr, minlength=n), np.bincount(flat, weights=cc, minlength=n)],
        axis=1,
    ) / safe

    big = np.iinfo(np.int64).max
    bbox = np.empty((n, 4), dtype=np.int64)
    bbox[:, 0:2] = big
    bbox[:, 2:4] = -1
    np.minimum.at(bbox[:, 0], flat, rr)
    np.minimum.at(bbox[:, 1], flat, cc)
    np.maximum.at(bbox[:, 2], flat, rr)
    np.maximum.at(bbox[:, 3], flat, cc)
    empty = area == 0
    bbox[empty] = -1
    mean[empty] = 0.0
    centroid[empty] = 0.0
    return SegmentStats(area=area, mean_color=mean, bbox=bbox, centroid=centroid)


# ---------------------------------------------------------------------------
# netpbm codec

_HEADER_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_header(buf: bytes, path) -> tuple[bytes, int, int, int, int]:
    pos = 0
    tokens = []
    for _ in range(4):
        m = _HEADER_TOKEN.match(buf, pos)
        if m is None:
            raise ImageFormatError(f"{path}: malformed netpbm header")
        tokens.append(m.group(1))
        pos = m.end()
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"{path}: unsupported magic {magic!r} (expected P5 or P6)")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError(f"{path}: non-numeric header field") from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: invalid dimensions {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported maxval {maxval} (only 255)")
    if pos >= len(buf) or buf[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise ImageFormatError(f"{path}: missing whitespace after maxval")
    return magic, width, height, maxval, pos + 1


def load_ppm(path) -> ImageBuffer:
    """Read a binary PPM (P6) or PGM (P5) file with maxval 255."""
    with open(path, "rb") as f:
        buf = f.read()
    magic, width, height, _, offset = _parse_header(buf, path)
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = buf[offset : offset + need]
    if len(payload) < need:
        raise ImageFormatError(
            f"{path}: truncated payload ({len(payload)} of {need} bytes)"
        )
    data = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return ImageBuffer(data.copy())


def save_ppm(image: ImageBuffer, path) -> None:
    """Write a 1-channel buffer as P5 or a 3-channel buffer as P6."""
    if image.channels not in (1, 3):
        raise ValueError(f"cannot write {image.channels}-channel image as PPM/PGM")
    data = image.data
    if data.dtype != np.uint8:
        if np.issubdtype(data.dtype, np.floating):
            data = np.floor(data + 0.5)
        data = np.clip(data, 0, 255).astype(np.uint8)
    magic = b"P6" if image.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, image.cols, image.rows)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(data).tobytes())


# ---------------------------------------------------------------------------
# label-map codec

def save_labels(labels: LabelMap, path) -> None:
    header = LABEL_MAGIC + struct.pack("<III", labels.rows, labels.cols, labels.segment_count)
    with open(path, "wb") as f:
        f.write(header)
        f.write(labels.labels.astype("<u4").tobytes())


def load_labels(path) -> LabelMap:
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != LABEL_MAGIC:
        raise ImageFormatError(f"{path}: not a label map (bad magic)")
    if len(buf) < 16:
        raise ImageFormatError(f"{path}: truncated label header")
    rows, cols, k = struct.unpack("<III", buf[4:16])
    need = rows * cols * 4
    if len(buf) - 16 < need:
        raise ImageFormatError(f"{path}: truncated label payload")
    lab = np.frombuffer(buf[16 : 16 + need], dtype="<u4").reshape(rows, cols)
    return LabelMap(lab.astype(np.uint32), k)


# ---------------------------------------------------------------------------
# colour

# sRGB primaries, D65 white (same constants as most reference converters)
_RGB_TO_XYZ = np.array(
    [
        [0.412453, 0.357580, 0.180423],
        [0.212671, 0.715160, 0.072169],
        [0.019334, 0.119193, 0.950227],
    ]
)
_D65 = np.array([0.95047, 1.0, 1.08883])


def rgb_to_lab(image: ImageBuffer) -> ImageBuffer:
    """Convert an 8-bit sRGB buffer to CIE L*a*b* (D65), float64."""
    if image.channels != 3:
        raise ValueError(f"rgb_to_lab needs 3 channels, got {image.channels}")
    rgb = image.data.astype(np.float64) / 255.0
    lin = np.where(rgb > 0.04045, ((rgb + 0.055) / 1.055) ** 2.4, rgb / 12.92)
    xyz = lin @ _RGB_TO_XYZ.T / _D65
    eps = (6.0 / 29.0) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return ImageBuffer(lab)


def render_mean_colors(image: ImageBuffer, labels: LabelMap) -> ImageBuffer:
    """Paint every pixel with the rounded (half-up) mean colour of its segment."""
    if image.shape != labels.shape:
        raise ValueError(f"dimension mismatch: image {image.shape} vs labels {labels.shape}")
    stats = label_stats(image, labels)
    palette = np.floor(stats.mean_color + 0.5)
    if image.data.dtype == np.uint8:
        palette = np.clip(palette, 0, 255).astype(np.uint8)
    return ImageBuffer(palette[labels.labels.astype(np.intp)])


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
