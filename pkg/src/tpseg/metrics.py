"""Segmentation quality: Probabilistic Rand Index, Variation of Information,
Global Consistency Error.

All three are computed from the contingency table of two labelings, so
cost is linear in the pixel count plus the number of non-empty cells.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .image import ImageFormatError, LabelMap

__all__ = [
    "ContingencyTable",
    "contingency",
    "rand_index",
    "pri",
    "voi",
    "gce",
    "evaluate",
    "Scores",
    "read_bsds_seg",
    "read_label_text",
]


def _flat(x) -> np.ndarray:
    if isinstance(x, LabelMap):
        x = x.labels
    return np.asarray(x).ravel()


def _shape(x):
    return x.shape if isinstance(x, LabelMap) else np.shape(x)


@dataclass(frozen=True)
class ContingencyTable:
    """Non-zero cells ``counts`` with marginals ``a_sizes`` / ``b_sizes``."""

    counts: np.ndarray
    a_index: np.ndarray  # row (a-label index) of each cell
    b_index: np.ndarray
    a_sizes: np.ndarray
    b_sizes: np.ndarray
    n: int


def contingency(a, b) -> ContingencyTable:
    if _shape(a) != _shape(b):
        raise ValueError(f"dimension mismatch: {_shape(a)} vs {_shape(b)}")
    fa, fb = _flat(a), _flat(b)
    if fa.size == 0:
        raise ValueError("empty labelings")
    _, ia = np.unique(fa, return_inverse=True)
    _, ib = np.unique(fb, return_inverse=True)
    ia = ia.ravel().astype(np.int64)
    ib = ib.ravel().astype(np.int64)
    nb = int(ib.max()) + 1
    cells, counts = np.unique(ia * nb + ib, return_counts=True)
    return ContingencyTable(
        counts=counts.astype(np.int64),
        a_index=cells // nb,
        b_index=cells % nb,
        a_sizes=np.bincount(ia).astype(np.int64),
        b_sizes=np.bincount(ib).astype(np.int64),
        n=int(fa.size),
    )


def _sq(x: np.ndarray) -> int:
    # exact in int64 while the pixel count stays below ~3e9
    return int(np.dot(x, x))


def rand_index(a, b) -> float:
    """Fraction of pixel pairs on which two labelings agree."""
    t = contingency(a, b)
    n = t.n
    if n < 2:
        return 1.0
    pairs = n * (n - 1) // 2
    same_both = (_sq(t.counts) - n) // 2
    same_a = (_sq(t.a_sizes) - n) // 2
    same_b = (_sq(t.b_sizes) - n) // 2
    agree = pairs + 2 * same_both - same_a - same_b
    return agree / pairs


def _truth_list(truths) -> list:
    if isinstance(truths, (LabelMap, np.ndarray)):
        truths = [truths]
    truths = list(truths)
    if not truths:
        raise ValueError("empty ground-truth set")
    return truths


def pri(test, truths: Sequence) -> float:
    """Probabilistic Rand Index of ``test`` against a ground-truth ensemble.

    Each pair contributes ``c*p + (1-c)*(1-p)`` where ``c`` says whether the
    test joins the pair and ``p`` is the fraction of truths joining it.  The
    sum is linear in ``p``, so it equals the mean Rand index over truths.
    """
    truths = _truth_list(truths)
    for g in truths:
        if _shape(g) != _shape(test):
            raise ValueError(f"dimension mismatch: {_shape(test)} vs {_shape(g)}")
    return float(np.mean([rand_index(test, g) for g in truths]))


def voi(a, b) -> float:
    """Variation of information in nats, H(A) + H(B) - 2 I(A;B).

    Evaluated as H(A|B) + H(B|A) so identical partitions give exactly 0.
    """
    t = contingency(a, b)
    nij = t.counts.astype(np.float64)
    na = t.a_sizes[t.a_index].astype(np.float64)
    nb = t.b_sizes[t.b_index].astype(np.float64)
    return float(-(nij / t.n * (np.log(nij / na) + np.log(nij / nb))).sum()) + 0.0


def gce(a, b) -> float:
    """Global consistency error.

    ``sum_p E(a, b, p) = N - sum_ij n_ij^2 / |a_i|``, the refinement error of
    every pixel's a-segment with respect to its b-segment; the smaller of
    the two directions is normalised by N.
    """
    t = contingency(a, b)
    sq = t.counts.astype(np.float64) ** 2
    e_ab = t.n - float((sq / t.a_sizes[t.a_index]).sum())
    e_ba = t.n - float((sq / t.b_sizes[t.b_index]).sum())
    return max(0.0, min(e_ab, e_ba) / t.n)


class Scores(NamedTuple):
    pri: float
    voi: float
    gce: float


def evaluate(test, truths: Sequence) -> Scores:
    """PRI over the whole ensemble; VoI and GCE averaged over truths."""
    truths = _truth_list(truths)
    return Scores(
        pri(test, truths),
        float(np.mean([voi(test, g) for g in truths])),
        float(np.mean([gce(test, g) for g in truths])),
    )


# ---------------------------------------------------------------------------
# ground-truth readers

def read_bsds_seg(path) -> LabelMap:
    """Read a Berkeley ``.seg`` file (ascii run-length ground truth).

    Body lines are ``<segment> <row> <col_start> <col_end>`` with 0-based,
    inclusive columns.  Segments are shifted to start at label 1.
    """
    with open(path) as f:
        lines = f.read().splitlines()
    header = {}
    body = None
    for i, line in enumerate(lines):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "data":
            body = lines[i + 1 :]
            break
        header[parts[0]] = parts[1:]
    if body is None:
        raise ImageFormatError(f"{path}: no 'data' line in .seg header")
    try:
        width = int(header["width"][0])
        height = int(header["height"][0])
    except (KeyError, IndexError, ValueError):
        raise ImageFormatError(f"{path}: missing width/height") from None
    labels = np.zeros((height, width), dtype=np.int64)
    covered = np.zeros((height, width), dtype=bool)
    for line in body:
        parts = line.split()
        if not parts:
            continue
        s, r, c0, c1 = (int(v) for v in parts[:4])
        labels[r, c0 : c1 + 1] = s + 1
        covered[r, c0 : c1 + 1] = True
    if not covered.all():
        raise ImageFormatError(f"{path}: runs do not cover the image")
    _, dense = np.unique(labels, return_inverse=True)
    dense = dense.reshape(labels.shape) + 1
    return LabelMap(dense, int(dense.max()))


def read_label_text(path) -> LabelMap:
    """Read a whitespace-separated integer matrix (one image row per line)."""
    arr = np.loadtxt(path, dtype=np.int64, ndmin=2)
    _, dense = np.unique(arr, return_inverse=True)
    dense = dense.reshape(arr.shape) + 1
    return LabelMap(dense, int(dense.max()))
