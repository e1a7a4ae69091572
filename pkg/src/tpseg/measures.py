"""Pixel-pair similarity predicates.

A predicate is bound to one image (plus any precomputed maps) and answers
``similar(r1, c1, r2, c2)``.  Out-of-bounds coordinates are never similar.

The segmentation engine only ever asks about four neighbour relations
(left, up, up-left, up-right), so each predicate can also produce those
answers for the whole image at once through :meth:`SimilarityPredicate.pair_mask`.
Subclasses that only implement :meth:`SimilarityPredicate._similar` get a
generic (slow, per-pixel) mask builder for free.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .image import ImageBuffer, ScalarMap, rgb_to_lab

__all__ = [
    "NeighborMasks",
    "SimilarityPredicate",
    "EuclideanMeasure",
    "GradientMeasure",
    "SaliencyMeasure",
    "ChannelTargetMeasure",
    "ConstantPredicate",
    "euclid_similar",
    "gradient_similar",
    "saliency_similar",
    "channel_similar",
    "compute_gradient",
    "compute_saliency",
    "const_predicate",
    "MEASURES",
    "register_measure",
    "make_predicate",
    "MeasureSpec",
]

SALIENT = "salient"
NON_SALIENT = "non-salient"
BELOW = "below"
ABOVE = "above"


class NeighborMasks(NamedTuple):
    """Boolean ``(rows, cols)`` answers for the four relations the engine uses.

    ``left[r, c]`` is ``similar((r, c), (r, c-1))``; ``up``, ``up_left`` and
    ``up_right`` compare ``(r, c)`` with ``(r-1, c)``, ``(r-1, c-1)`` and
    ``(r-1, c+1)``.  Entries whose neighbour falls outside the image are False.
    """

    left: np.ndarray
    up: np.ndarray
    up_left: np.ndarray
    up_right: np.ndarray


class SimilarityPredicate:
    """Base class for pairwise pixel similarity predicates."""

    name = "custom"

    def __init__(self, shape: tuple[int, int]):
        self.rows, self.cols = int(shape[0]), int(shape[1])

    def in_bounds(self, r: int, c: int) -> bool:
        return 0 <= r < self.rows and 0 <= c < self.cols

    def similar(self, r1: int, c1: int, r2: int, c2: int) -> bool:
        if not (self.in_bounds(r1, c1) and self.in_bounds(r2, c2)):
            return False
        return bool(self._similar(r1, c1, r2, c2))

    __call__ = similar

    def _similar(self, r1: int, c1: int, r2: int, c2: int) -> bool:
        raise NotImplementedError

    def _pair(self, a: tuple[slice, slice], b: tuple[slice, slice]) -> np.ndarray:
        """Vectorised ``similar`` between two equally shaped windows."""
        ra, ca = range(self.rows)[a[0]], range(self.cols)[a[1]]
        rb, cb = range(self.rows)[b[0]], range(self.cols)[b[1]]
        out = np.empty((len(ra), len(ca)), dtype=bool)
        for i, (r1, r2) in enumerate(zip(ra, rb)):
            for j, (c1, c2) in enumerate(zip(ca, cb)):
                out[i, j] = self._similar(r1, c1, r2, c2)
        return out

    def pair_mask(self, dr: int, dc: int) -> np.ndarray:
        """``mask[r, c] = similar((r, c), (r + dr, c + dc))`` for every pixel."""
        mask = np.zeros((self.rows, self.cols), dtype=bool)
        r0, r1 = max(0, -dr), min(self.rows, self.rows - dr)
        c0, c1 = max(0, -dc), min(self.cols, self.cols - dc)
        if r0 >= r1 or c0 >= c1:
            return mask
        a = (slice(r0, r1), slice(c0, c1))
        b = (slice(r0 + dr, r1 + dr), slice(c0 + dc, c1 + dc))
        mask[a] = self._pair(a, b)
        return mask

    def neighbor_masks(self) -> NeighborMasks:
        return NeighborMasks(
            left=self.pair_mask(0, -1),
            up=self.pair_mask(-1, 0),
            up_left=self.pair_mask(-1, -1),
            up_right=self.pair_mask(-1, 1),
        )

    def __repr__(self):
        return f"{type(self).__name__}({self.rows}x{self.cols})"


# ---------------------------------------------------------------------------
# scalar forms

def _inside(shape, r, c) -> bool:
    return 0 <= r < shape[0] and 0 <= c < shape[1]


def euclid_similar(image: ImageBuffer, r1, c1, r2, c2, th: float) -> bool:
    """True iff the colour distance between the two pixels is strictly below ``th``."""
    if not (_inside(image.shape, r1, c1) and _inside(image.shape, r2, c2)):
        return False
    d = image.data[r1, c1].astype(np.float64) - image.data[r2, c2].astype(np.float64)
    return bool(np.dot(d, d) < th * th)


def gradient_similar(grad: ScalarMap, r1, c1, r2, c2, th: float) -> bool:
    """Both pixels must sit strictly below the gradient threshold."""
    v = grad.values
    if not (_inside(v.shape, r1, c1) and _inside(v.shape, r2, c2)):
        return False
    return bool(v[r1, c1] < th and v[r2, c2] < th)


def saliency_similar(
    image: ImageBuffer,
    saliency: ScalarMap,
    mean_saliency: float,
    r1, c1, r2, c2,
    th: float,
    th2: float,
    mode: str = SALIENT,
) -> bool:
    s = saliency.values
    if not (_inside(s.shape, r1, c1) and _inside(s.shape, r2, c2)):
        return False
    s1, s2 = s[r1, c1], s[r2, c2]
    if mode == SALIENT:
        tight = s1 < mean_saliency and s2 < mean_saliency
    elif mode == NON_SALIENT:
        tight = s1 > mean_saliency or s2 > mean_saliency
    else:
        raise ValueError(f"unknown saliency mode {mode!r}")
    return euclid_similar(image, r1, c1, r2, c2, th2 if tight else th)


def _target_distance(pixel: np.ndarray, target: np.ndarray, channels: np.ndarray) -> float:
    d = pixel[channels].astype(np.float64) - target
    return float(np.sqrt(np.dot(d, d)))


def channel_similar(image: ImageBuffer, r1, c1, r2, c2, measure: "ChannelTargetMeasure") -> bool:
    """Both pixels' distance to the target colour must satisfy the polarity."""
    if not (_inside(image.shape, r1, c1) and _inside(image.shape, r2, c2)):
        return False
    d1 = _target_distance(image.data[r1, c1], measure.target, measure.channels)
    d2 = _target_distance(image.data[r2, c2], measure.target, measure.channels)
    if measure.polarity == BELOW:
        return d1 < measure.th and d2 < measure.th
    return d1 > measure.th and d2 > measure.th


# ---------------------------------------------------------------------------
# derived maps

def _luminance(image: ImageBuffer) -> np.ndarray:
    data = image.data.astype(np.float64)
    if image.channels == 1:
        return data[:, :, 0]
    if image.channels == 3:
        return data @ np.array([0.299, 0.587, 0.114])
    return data.mean(axis=2)


def compute_gradient(image: ImageBuffer) -> ScalarMap:
    """Gradient magnitude from the [-1, 0, 1] difference filters.

    Colour images are reduced to luminance first; borders replicate the
    edge pixel.
    """
    lum = np.pad(_luminance(image), 1, mode="edge")
    ix = lum[1:-1, :-2] - lum[1:-1, 2:]
    iy = lum[:-2, 1:-1] - lum[2:, 1:-1]
    return ScalarMap(np.sqrt(ix * ix + iy * iy))


def _binomial_blur(a: np.ndarray) -> np.ndarray:
    k = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    out = a
    for axis in (0, 1):
        pad = [(0, 0)] * a.ndim
        pad[axis] = (2, 2)
        p = np.pad(out, pad, mode="edge")
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for i, w in enumerate(k):
            acc += w * np.take(p, np.arange(i, i + n), axis=axis)
        out = acc
    return out


def compute_saliency(image: ImageBuffer, blur: bool = False) -> ScalarMap:
    """Per-pixel distance between the pixel's Lab colour and the image's mean Lab.

    ``blur=True`` smooths the per-pixel Lab values with a 5-tap binomial
    kernel first, as in the frequency-tuned saliency method.
    """
    if image.channels != 3:
        raise ValueError(f"saliency needs a 3-channel image, got {image.channels}")
    lab = rgb_to_lab(image).data
    # shifted mean: exact for constant images, smaller rounding error otherwise
    ref = lab[0, 0]
    mean = ref + (lab - ref).reshape(-1, 3).mean(axis=0)
    if blur:
        lab = _binomial_blur(lab)
    d = lab - mean
    return ScalarMap(np.sqrt((d * d).sum(axis=2)))


# ---------------------------------------------------------------------------
# concrete predicates

class EuclideanMeasure(SimilarityPredicate):
    name = "euclid"

    def __init__(self, image: ImageBuffer, th: float):
        if not th >= 0:
            raise ValueError(f"threshold must be >= 0, got {th}")
        super().__init__(image.shape)
        self.image = image
        self.th = float(th)
        self._data = image.data.astype(np.float64)

    def _similar(self, r1, c1, r2, c2):
        return euclid_similar(self.image, r1, c1, r2, c2, self.th)

    def _pair(self, a, b):
        d = self._data[a] - self._data[b]
        return np.einsum("ijk,ijk->ij", d, d) < self.th * self.th


class GradientMeasure(SimilarityPredicate):
    name = "gradient"

    def __init__(self, grad: ScalarMap, th: float):
        super().__init__((grad.rows, grad.cols))
        self.grad = grad
        self.th = float(th)
        self._low = grad.values < self.th

    @classmethod
    def from_image(cls, image: ImageBuffer, th: float) -> "GradientMeasure":
        return cls(compute_gradient(image), th)

    def _similar(self, r1, c1, r2, c2):
        return gradient_similar(self.grad, r1, c1, r2, c2, self.th)

    def _pair(self, a, b):
        return self._low[a] & self._low[b]


class SaliencyMeasure(SimilarityPredicate):
    """Colour distance with a tight threshold ``th2`` or a loose one ``th``.

    In ``salient`` mode the tight threshold applies when both pixels are
    below mean saliency; ``non-salient`` mode applies it when either pixel
    is above the mean.
    """

    name = "saliency"

    def __init__(
        self,
        image: ImageBuffer,
        saliency: ScalarMap,
        th: float,
        th2: float,
        mode: str = SALIENT,
    ):
        if mode not in (SALIENT, NON_SALIENT):
            raise ValueError(f"unknown saliency mode {mode!r}")
        if not 0 <= th2 <= th:
            raise ValueError(f"need 0 <= th2 <= th, got th={th}, th2={th2}")
        if saliency.values.shape != image.shape:
            raise ValueError("saliency map and image dimensions differ")
        super().__init__(image.shape)
        self.image = image
        self.saliency = saliency
        self.mean_saliency = saliency.mean()
        self.th = float(th)
        self.th2 = float(th2)
        self.mode = mode
        self._data = image.data.astype(np.float64)

    @classmethod
    def from_image(cls, image, th, th2, mode=SALIENT, blur=False) -> "SaliencyMeasure":
        return cls(image, compute_saliency(image, blur=blur), th, th2, mode)

    def _similar(self, r1, c1, r2, c2):
        return saliency_similar(
            self.image, self.saliency, self.mean_saliency,
            r1, c1, r2, c2, self.th, self.th2, self.mode,
        )

    def _pair(self, a, b):
        s = self.saliency.values
        sm = self.mean_saliency
        if self.mode == SALIENT:
            tight = (s[a] < sm) & (s[b] < sm)
        else:
            tight = (s[a] > sm) | (s[b] > sm)
        d = self._data[a] - self._data[b]
        d2 = np.einsum("ijk,ijk->ij", d, d)
        return np.where(tight, d2 < self.th2 * self.th2, d2 < self.th * self.th)


class ChannelTargetMeasure(SimilarityPredicate):
    """Both pixels close to (``below``) or far from (``above``) a target colour.

    Distance is the Euclidean norm over ``channels`` only.  ``target`` may
    list a value per image channel or one per selected channel.
    """

    name = "channel"

    def __init__(
        self,
        image: ImageBuffer,
        target: Sequence[float],
        th: float,
        polarity: str = BELOW,
        channels: Sequence[int] | None = None,
    ):
        if polarity not in (BELOW, ABOVE):
            raise ValueError(f"polarity must be 'below' or 'above', got {polarity!r}")
        super().__init__(image.shape)
        chans = list(range(image.channels)) if channels is None else [int(c) for c in channels]
        if not chans or any(c < 0 or c >= image.channels for c in chans):
            raise ValueError(f"channel subset {chans} invalid for {image.channels}-channel image")
        target = np.asarray(target, dtype=np.float64).ravel()
        if target.size == image.channels:
            target = target[chans]
        elif target.size != len(chans):
            raise ValueError(
                f"target has {target.size} values; expected {image.channels} or {len(chans)}"
            )
        self.image = image
        self.target = target
        self.th = float(th)
        self.polarity = polarity
        self.channels = np.asarray(chans, dtype=np.intp)
        d = image.data[:, :, self.channels].astype(np.float64) - target
        dist = np.sqrt((d * d).sum(axis=2))
        self._ok = dist < self.th if polarity == BELOW else dist > self.th

    def _similar(self, r1, c1, r2, c2):
        return channel_similar(self.image, r1, c1, r2, c2, self)

    def _pair(self, a, b):
        return self._ok[a] & self._ok[b]


class ConstantPredicate(SimilarityPredicate):
    def __init__(self, shape: tuple[int, int], value: bool):
        super().__init__(shape)
        self.value = bool(value)
        self.name = "always-true" if self.value else "always-false"

    def _similar(self, r1, c1, r2, c2):
        return self.value

    def _pair(self, a, b):
        rows = len(range(self.rows)[a[0]])
        cols = len(range(self.cols)[a[1]])
        return np.full((rows, cols), self.value)


def const_predicate(value: bool, shape: tuple[int, int]) -> ConstantPredicate:
    return ConstantPredicate(shape, value)


# ---------------------------------------------------------------------------
# registry

Factory = Callable[..., SimilarityPredicate]
MEASURES: dict[str, Factory] = {}


def register_measure(name: str):
    """Decorator adding a predicate factory ``f(image, **params)`` to the registry."""

    def deco(fn: Factory) -> Factory:
        MEASURES[name] = fn
        return fn

    return deco


@register_measure("euclid")
def _euclid(image, th=15.0, **_):
    return EuclideanMeasure(image, th)


@register_measure("gradient")
def _gradient(image, th=15.0, **_):
    return GradientMeasure.from_image(image, th)


def _default_th2(th, th2):
    return th / 5.0 if th2 is None else th2


@register_measure("saliency")
def _saliency(image, th=15.0, th2=None, **_):
    return SaliencyMeasure.from_image(image, th, _default_th2(th, th2), SALIENT)


@register_measure("saliency-inverse")
def _saliency_inverse(image, th=15.0, th2=None, **_):
    return SaliencyMeasure.from_image(image, th, _default_th2(th, th2), NON_SALIENT)


@register_measure("channel")
def _channel(image, th=72.0, target=(0, 0, 220), channels=None, polarity=BELOW, **_):
    return ChannelTargetMeasure(image, target, th, polarity, channels)


@register_measure("always-false")
def _always_false(image, **_):
    return ConstantPredicate(image.shape, False)


@register_measure("always-true")
def _always_true(image, **_):
    return ConstantPredicate(image.shape, True)


def make_predicate(name: str, image: ImageBuffer, **params) -> SimilarityPredicate:
    try:
        factory = MEASURES[name]
    except KeyError:
        raise ValueError(f"unknown measure {name!r}; choose from {sorted(MEASURES)}") from None
    params = {k: v for k, v in params.items() if v is not None}
    return factory(image, **params)


@dataclass(frozen=True)
class MeasureSpec:
    """A measure name plus parameters, bound to each image on demand."""

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in MEASURES:
            raise ValueError(f"unknown measure {self.name!r}; choose from {sorted(MEASURES)}")

    def build(self, image: ImageBuffer) -> SimilarityPredicate:
        return make_predicate(self.name, image, **self.params)
