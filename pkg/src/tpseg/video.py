"""Frame-sequence segmentation.

Frames are segmented independently (no state carries over), rendered
with per-segment mean colours, and compared pairwise to measure how much
the rendering flickers from one frame to the next.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cca import SegmentationResult, segment
from .image import ImageBuffer, load_ppm, render_mean_colors
from .measures import MeasureSpec

__all__ = ["FrameSequence", "FrameResult", "segment_sequence", "temporal_drift", "FrameError"]


class FrameError(ValueError):
    """Missing frame or frames whose dimensions disagree."""


@dataclass(frozen=True)
class FrameSequence:
    """Numbered frame files, e.g. ``FrameSequence("in/frame%06d.ppm", 910, 970, 20)``."""

    pattern: str
    start: int
    end: int
    step: int = 1

    def __post_init__(self):
        if self.step < 1:
            raise ValueError("step must be positive")
        if self.end < self.start:
            raise ValueError(f"empty frame range {self.start}..{self.end}")
        try:
            self.pattern % self.start
        except (TypeError, ValueError):
            raise ValueError(f"pattern {self.pattern!r} needs one integer field like %06d") from None

    @property
    def indices(self) -> range:
        return range(self.start, self.end + 1, self.step)

    def path(self, index: int) -> str:
        return self.pattern % index

    def load(self, index: int) -> ImageBuffer:
        path = self.path(index)
        if not os.path.exists(path):
            raise FrameError(f"missing frame {index}: {path}")
        return load_ppm(path)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class FrameResult:
    index: int
    image: ImageBuffer
    result: SegmentationResult
    rendered: ImageBuffer | None
    timings: dict = field(default_factory=dict)  # seconds: decode, segment, render

    def render(self) -> ImageBuffer:
        if self.rendered is None:
            self.rendered = render_mean_colors(self.image, self.result.label_map)
        return self.rendered


def _process(index, source, spec: MeasureSpec, render: bool) -> FrameResult:
    t0 = time.perf_counter()
    image = source.load(index) if isinstance(source, FrameSequence) else source
    t1 = time.perf_counter()
    result = segment(image, spec.build(image), stats=False)
    t2 = time.perf_counter()
    rendered = render_mean_colors(image, result.label_map) if render else None
    t3 = time.perf_counter()
    return FrameResult(
        index, image, result, rendered,
        {"decode": t1 - t0, "segment": t2 - t1, "render": t3 - t2},
    )


def segment_sequence(
    frames: FrameSequence | Iterable[ImageBuffer],
    spec: MeasureSpec,
    render: bool = True,
    jobs: int = 1,
) -> list[FrameResult]:
    """Segment every frame with the same measure; results come back in frame order.

    ``frames`` is either a :class:`FrameSequence` or in-memory images
    (numbered from 0).  With ``jobs > 1`` frames are processed on a thread
    pool; the compiled kernels release the GIL.
    """
    if isinstance(frames, FrameSequence):
        work = [(k, frames) for k in frames.indices]
    else:
        work = list(enumerate(frames))
    if not work:
        raise FrameError("no frames")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_process, k, src, spec, render) for k, src in work]
            out = [f.result() for f in futures]
    else:
        out = [_process(k, src, spec, render) for k, src in work]

    shape = out[0].image.data.shape
    for fr in out[1:]:
        if fr.image.data.shape != shape:
            raise FrameError(
                f"frame {fr.index} has shape {fr.image.data.shape}, expected {shape}"
            )
    return out


def temporal_drift(results: Sequence[FrameResult]) -> list[tuple[int, int, float]]:
    """Mean absolute difference of consecutive mean-colour renders.

    Returns ``(index_a, index_b, value)`` per consecutive pair; the value is
    averaged over pixels and channels.
    """
    if len(results) < 2:
        raise FrameError("temporal drift needs at least two frames")
    out = []
    for a, b in zip(results, results[1:]):
        ra, rb = a.render().data, b.render().data
        if ra.shape != rb.shape:
            raise FrameError(f"frames {a.index} and {b.index} differ in shape")
        diff = np.abs(ra.astype(np.float64) - rb.astype(np.float64))
        out.append((a.index, b.index, float(diff.mean())))
    return out
