"""Two-pass run-based connected-component segmentation.

The top-down pass scans each row once, splitting it into runs of pixels
that are similar to their left neighbour.  Every pixel is compared with
its three upper neighbours; a match either hands the current run the
upper run's label or records that the two labels are equivalent.  The
equivalence store keeps, for every label, its class representative and a
singly linked list of class members, so merging two classes relabels the
absorbed members immediately and the bottom-up pass is a single lookup
per run.

The hot loops are compiled with numba and operate on plain arrays; the
dataclasses below wrap those arrays for inspection and testing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from numba import njit

from .image import ImageBuffer, LabelMap, SegmentStats, label_stats
from .measures import NeighborMasks, SimilarityPredicate

__all__ = [
    "Run",
    "RunTable",
    "EquivalenceStore",
    "TopDownState",
    "SegmentationResult",
    "InvariantError",
    "segment",
    "segment_masks",
    "init_label",
    "make_equivalent",
    "resolve_labels",
    "compact_labels",
    "region_stats",
    "warmup",
]

# Above this many pixels the run table starts smaller and doubles on demand.
PREALLOC_LIMIT = 1 << 24


class InvariantError(RuntimeError):
    """Internal consistency violation in the segmentation state."""


# ---------------------------------------------------------------------------
# compiled kernels

@njit(cache=True, nogil=True)
def _make_equivalent(lab, nxt, eq, pl, ql):
    lpl = lab[pl]
    lql = lab[ql]
    if lpl == 0 and lql == 0:
        lab[pl] = pl
        lab[ql] = pl
        nxt[pl] = ql
        nxt[ql] = 0
        eq[pl] = pl
    elif lpl == lql:
        pass
    elif lpl != 0 and lql == 0:
        bgn = lpl
        lab[ql] = bgn
        nxt[ql] = eq[bgn]
        eq[bgn] = ql
    elif lql != 0 and lpl == 0:
        bgn = lql
        lab[pl] = bgn
        nxt[pl] = eq[bgn]
        eq[bgn] = pl
    else:
        bgn = lql
        member = eq[bgn]
        eql = lpl
        while nxt[member] != 0:
            lab[member] = eql
            member = nxt[member]
        lab[member] = eql
        nxt[member] = eq[eql]
        eq[eql] = eq[bgn]
        eq[bgn] = 0


@njit(cache=True, nogil=True)
def _link(perm, lab, nxt, eq, cr, tr):
    pl = perm[cr]
    ql = perm[tr]
    if pl == 0:
        perm[cr] = ql
    elif pl != ql:
        _make_equivalent(lab, nxt, eq, pl, ql)


@njit(cache=True, nogil=True)
def _init_label(up, up_left, up_right, idx, perm, lab, nxt, eq, r, c, cr):
    ncols = idx.shape[1]
    if up[r, c]:
        _link(perm, lab, nxt, eq, cr, idx[r - 1, c])
    if c > 0 and up_left[r, c]:
        _link(perm, lab, nxt, eq, cr, idx[r - 1, c - 1])
    if c < ncols - 1 and up_right[r, c]:
        _link(perm, lab, nxt, eq, cr, idx[r - 1, c + 1])


@njit(cache=True, nogil=True)
def _top_down(left, up, up_left, up_right, row, col_start, col_end, perm,
              lab, nxt, eq, first_run, last_run, idx, r0, cr, cl):
    """Scan rows from ``r0``; stop early when a row might overflow the run arrays.

    Returns ``(next_row, cr, cl)``; ``next_row == nrows`` when done.
    """
    nrows, ncols = left.shape
    cap = row.shape[0]
    for r in range(r0, nrows):
        if cr + 1 + ncols > cap:
            return r, cr, cl
        for c in range(ncols):
            if c == 0 or not left[r, c]:
                if cr >= 0 and perm[cr] == 0:
                    cl += 1
                    perm[cr] = cl
                cr += 1
                row[cr] = r
                col_start[cr] = c
                perm[cr] = 0
                if first_run[r] < 0:
                    first_run[r] = cr
                last_run[r] = cr
            if r > 0:
                # same checks as _init_label, written out: a call per pixel
                # costs more than the whole scan
                if up[r, c]:
                    _link(perm, lab, nxt, eq, cr, idx[r - 1, c])
                if c > 0 and up_left[r, c]:
                    _link(perm, lab, nxt, eq, cr, idx[r - 1, c - 1])
                if c < ncols - 1 and up_right[r, c]:
                    _link(perm, lab, nxt, eq, cr, idx[r - 1, c + 1])
            col_end[cr] = c
            idx[r, c] = cr
    if perm[cr] == 0:
        cl += 1
        perm[cr] = cl
    return nrows, cr, cl


@njit(cache=True, nogil=True)
def _resolve(perm, lab):
    for p in range(perm.shape[0]):
        pl = perm[p]
        if pl == 0:
            return p
        ql = lab[pl]
        if ql != 0:
            perm[p] = ql
    return -1


@njit(cache=True, nogil=True)
def _compact(perm, idx, n_labels):
    remap = np.zeros(n_labels + 1, np.int64)
    k = 0
    for p in range(perm.shape[0]):
        lbl = perm[p]
        if remap[lbl] == 0:
            k += 1
            remap[lbl] = k
        perm[p] = remap[lbl]
    nrows, ncols = idx.shape
    out = np.empty((nrows, ncols), np.uint32)
    for r in range(nrows):
        for c in range(ncols):
            out[r, c] = perm[idx[r, c]]
    return out, k


# ---------------------------------------------------------------------------
# data structures

class Run(NamedTuple):
    row: int
    col_start: int
    col_end: int
    perm_label: int


@dataclass
class RunTable:
    """All runs in row-major order plus per-row ``(first_run, last_run)`` indices."""

    row: np.ndarray
    col_start: np.ndarray
    col_end: np.ndarray
    perm_label: np.ndarray
    first_run: np.ndarray
    last_run: np.ndarray

    def __len__(self) -> int:
        return len(self.row)

    def __getitem__(self, i: int) -> Run:
        return Run(
            int(self.row[i]), int(self.col_start[i]), int(self.col_end[i]), int(self.perm_label[i])
        )

    def __iter__(self) -> Iterator[Run]:
        return (self[i] for i in range(len(self)))

    def runs_in_row(self, r: int) -> list[Run]:
        first, last = int(self.first_run[r]), int(self.last_run[r])
        if first < 0:
            return []
        return [self[i] for i in range(first, last + 1)]

    def check(self, cols: int) -> None:
        """Raise InvariantError unless the runs tile every row exactly."""
        for r in range(len(self.first_run)):
            expect = 0
            for run in self.runs_in_row(r):
                if run.row != r or run.col_start != expect or run.col_end < run.col_start:
                    raise InvariantError(f"run {run} breaks tiling of row {r}")
                expect = run.col_end + 1
            if expect != cols:
                raise InvariantError(f"row {r} covered up to column {expect}, not {cols}")
        if len(self) and np.any(np.diff(self.row * cols + self.col_start) <= 0):
            raise InvariantError("runs are not ordered by (row, col_start)")


@dataclass
class EquivalenceStore:
    """Label classes: ``label[L]`` is L's representative (0 = classless),
    ``next[L]`` the following member, ``eq_label[C]`` the head of class C's list."""

    label: np.ndarray
    next: np.ndarray
    eq_label: np.ndarray

    @classmethod
    def empty(cls, max_label: int) -> "EquivalenceStore":
        n = max_label + 1
        return cls(np.zeros(n, np.int64), np.zeros(n, np.int64), np.zeros(n, np.int64))

    @property
    def max_label(self) -> int:
        return len(self.label) - 1

    def representative(self, lbl: int) -> int:
        rep = int(self.label[lbl])
        return rep if rep else lbl

    def members(self, rep: int) -> list[int]:
        out = []
        m = int(self.eq_label[rep])
        while m:
            out.append(m)
            if len(out) > self.max_label:
                raise InvariantError(f"cycle in member list of class {rep}")
            m = int(self.next[m])
        return out

    def classes(self) -> dict[int, list[int]]:
        return {int(c): self.members(int(c)) for c in np.flatnonzero(self.eq_label)}

    def check(self) -> None:
        if self.label[0] != 0 or self.eq_label[0] != 0:
            raise InvariantError("label 0 used as a class")
        seen = {}
        for rep, members in self.classes().items():
            for m in members:
                if m in seen:
                    raise InvariantError(f"label {m} in classes {seen[m]} and {rep}")
                seen[m] = rep
                if self.label[m] != rep:
                    raise InvariantError(f"label {m} listed in class {rep} but points to {self.label[m]}")
        for lbl in np.flatnonzero(self.label):
            if seen.get(int(lbl)) != int(self.label[lbl]):
                raise InvariantError(f"label {lbl} not reachable from its class list")

    def copy(self) -> "EquivalenceStore":
        return EquivalenceStore(self.label.copy(), self.next.copy(), self.eq_label.copy())


@dataclass
class TopDownState:
    """Scratch state of an in-progress top-down pass (exposed for testing)."""

    masks: NeighborMasks
    run_index: np.ndarray
    perm_label: np.ndarray
    store: EquivalenceStore

    @classmethod
    def from_masks(cls, masks: NeighborMasks) -> "TopDownState":
        nrows, ncols = masks.left.shape
        n = nrows * ncols
        return cls(
            masks=masks,
            run_index=np.full((nrows, ncols), -1, np.int64),
            perm_label=np.zeros(n, np.int64),
            store=EquivalenceStore.empty(n),
        )


@dataclass
class SegmentationResult:
    run_table: RunTable
    label_map: LabelMap
    raw_label_count: int
    run_index: np.ndarray
    store: EquivalenceStore

    @property
    def segment_count(self) -> int:
        return self.label_map.segment_count

    @property
    def labels(self) -> np.ndarray:
        return self.label_map.labels


# ---------------------------------------------------------------------------
# operations

def make_equivalent(store: EquivalenceStore, pl: int, ql: int) -> None:
    """Record that labels ``pl`` and ``ql`` belong to the same segment."""
    if pl == 0 or ql == 0:
        raise ValueError("label 0 cannot be made equivalent")
    if max(pl, ql) > store.max_label:
        raise ValueError(f"label out of range for store of size {store.max_label}")
    _make_equivalent(store.label, store.next, store.eq_label, pl, ql)


def init_label(state: TopDownState, r: int, c: int, cr: int) -> None:
    """Compare pixel (r, c) of run ``cr`` with its three upper neighbours."""
    if r < 1:
        raise ValueError("init_label needs a previous row")
    m = state.masks
    s = state.store
    _init_label(
        m.up, m.up_left, m.up_right, state.run_index, state.perm_label,
        s.label, s.next, s.eq_label, r, c, cr,
    )


def resolve_labels(run_table: RunTable, store: EquivalenceStore) -> None:
    """Bottom-up pass: replace every run label by its class representative."""
    bad = _resolve(run_table.perm_label, store.label)
    if bad >= 0:
        raise InvariantError(f"run {bad} left unlabeled by the top-down pass")


def compact_labels(run_table: RunTable, run_index: np.ndarray) -> LabelMap:
    """Renumber resolved labels to 1..K by first appearance; return the pixel map."""
    n_labels = int(run_table.perm_label.max()) if len(run_table) else 0
    labels, k = _compact(run_table.perm_label, run_index, n_labels)
    return LabelMap(labels, k)


def region_stats(image: ImageBuffer, labels: LabelMap) -> SegmentStats:
    """Area, mean colour, bounding box and centroid of each segment."""
    return label_stats(image, labels)


def _initial_capacity(npix: int) -> int:
    return npix if npix <= PREALLOC_LIMIT else PREALLOC_LIMIT


def _grown(a: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size, a.dtype)
    out[: len(a)] = a
    return out


def segment_masks(masks: NeighborMasks, image: ImageBuffer | None = None) -> SegmentationResult:
    """Segment from precomputed neighbour answers (see ``NeighborMasks``)."""
    left = np.ascontiguousarray(masks.left, dtype=bool)
    if left.ndim != 2 or left.size == 0:
        raise ValueError("cannot segment an empty image")
    shape = left.shape
    arrays = [left] + [np.ascontiguousarray(m, dtype=bool) for m in masks[1:]]
    if any(a.shape != shape for a in arrays):
        raise ValueError("neighbour masks differ in shape")
    nrows, ncols = shape
    npix = left.size
    cap = max(_initial_capacity(npix), ncols)
    run_arrays = [np.empty(cap, np.int64) for _ in range(4)]  # row, col_start, col_end, perm
    eq_arrays = [np.zeros(cap + 1, np.int64) for _ in range(3)]  # label, next, eq_label
    first_run = np.full(nrows, -1, np.int64)
    last_run = np.full(nrows, -1, np.int64)
    idx = np.empty(shape, np.int64)
    r, cr, cl = 0, -1, 0
    while True:
        r, cr, cl = _top_down(
            *arrays, *run_arrays, *eq_arrays, first_run, last_run, idx, r, cr, cl
        )
        if r == nrows:
            break
        cap = min(2 * cap, npix)
        run_arrays = [_grown(a, cap) for a in run_arrays]
        eq_arrays = [_grown(a, cap + 1) for a in eq_arrays]
    n = cr + 1
    table = RunTable(*(a[:n] for a in run_arrays), first_run, last_run)
    store = EquivalenceStore(*(a[: cl + 1] for a in eq_arrays))
    n_labels = cl
    resolve_labels(table, store)
    label_map = compact_labels(table, idx)
    if image is not None:
        label_map = label_map.with_stats(image)
    return SegmentationResult(table, label_map, int(n_labels), idx, store)


def segment(
    image: ImageBuffer, predicate: SimilarityPredicate, stats: bool = True
) -> SegmentationResult:
    """Segment ``image`` into connected regions of similar pixels.

    Runs are chained: each pixel is compared with its left neighbour, not
    with the start of its run.  Rows are linked through the three upper
    neighbours of every pixel.  Final labels are dense, 1..K in row-major
    order of first appearance.  ``stats=False`` skips the per-segment
    statistics (mean colour etc.).
    """
    if (predicate.rows, predicate.cols) != image.shape:
        raise ValueError(
            f"predicate bound to {predicate.rows}x{predicate.cols}, image is {image.rows}x{image.cols}"
        )
    return segment_masks(predicate.neighbor_masks(), image if stats else None)


def warmup() -> None:
    """Load or compile the kernels so later timings exclude it."""
    m = np.ones((2, 2), dtype=bool)
    segment_masks(NeighborMasks(m, m, m, m))
