"""RLE mask codec and the IoU kernels: frame IoU, tube volume IoU, span IoU.

All intersection/union arithmetic is carried out on run intervals as exact
integers; callers that need the ">0.5" boundary exact should use
:func:`volume_iou_exceeds` or the raw counts instead of the float ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import KindMismatch, MalformedRle, ShapeMismatch

# Frame offset used when flattening point tubes into one index space.
# Point indices within a frame must stay below this stride.
_POINT_STRIDE = 1 << 32


@dataclass(frozen=True)
class RleMask:
    """Binary H x W mask stored as row-major run lengths.

    Runs alternate starting with the count of leading zeros; the first run
    may be zero, no other run may. The run lengths must sum to height*width.
    """

    height: int
    width: int
    runs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        if self.height <= 0 or self.width <= 0:
            raise MalformedRle(f"mask size {self.height}x{self.width} is empty")
        if len(self.runs) == 0:
            raise MalformedRle("runs must contain at least one element")
        if any(r < 0 for r in self.runs):
            raise MalformedRle("negative run length")
        if any(r == 0 for r in self.runs[1:]):
            raise MalformedRle("zero-length run after the first")
        total = sum(self.runs)
        if total != self.height * self.width:
            raise MalformedRle(
                f"run sum {total} != {self.height}x{self.width}"
            )

    @property
    def area(self) -> int:
        """Number of set pixels."""
        return sum(self.runs[1::2])

    def is_empty(self) -> bool:
        return self.area == 0

    def one_intervals(self) -> list[tuple[int, int]]:
        """Half-open [start, end) intervals of set pixels in flat scan order."""
        out = []
        pos = 0
        for i, r in enumerate(self.runs):
            if i % 2 == 1:
                out.append((pos, pos + r))
            pos += r
        return out


def rle_encode(bitmap: np.ndarray) -> RleMask:
    """Encode a 2-D boolean array into canonical run-length form."""
    arr = np.asarray(bitmap, dtype=bool)
    if arr.ndim != 2 or arr.size == 0:
        raise MalformedRle(f"expected a non-empty 2-D bitmap, got shape {arr.shape}")
    flat = arr.ravel()
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    lengths = np.diff(bounds)
    runs = lengths.tolist()
    if flat[0]:
        runs = [0] + runs
    return RleMask(arr.shape[0], arr.shape[1], tuple(runs))


def rle_decode(mask: RleMask) -> np.ndarray:
    """Decode to a 2-D boolean array (inverse of :func:`rle_encode`)."""
    values = np.zeros(len(mask.runs), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(mask.runs, dtype=np.int64))
    return flat.reshape(mask.height, mask.width)


class FrameIoU(NamedTuple):
    iou: float
    intersection: int
    union: int


def _intersect_sorted(a: list[tuple[int, int]], b: list[tuple[int, int]]) -> int:
    """Total overlap length of two sorted disjoint interval lists."""
    total = 0
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo < hi:
            total += hi - lo
        if a[i][1] <= b[j][1]:
            i += 1
        else:
            j += 1
    return total


def frame_iou(a: RleMask, b: RleMask) -> FrameIoU:
    """IoU of two masks computed directly on runs, plus the raw counts.

    Two empty masks have IoU 0 by definition.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeMismatch(
            f"{a.height}x{a.width} vs {b.height}x{b.width}"
        )
    inter = _intersect_sorted(a.one_intervals(), b.one_intervals())
    union = a.area + b.area - inter
    iou = inter / union if union else 0.0
    return FrameIoU(iou, inter, union)


class FlatTube(NamedTuple):
    """A tube flattened into one sorted interval list over (frame, pixel) space."""

    starts: np.ndarray
    ends: np.ndarray
    area: int
    kind: str  # "mask" | "point"
    shape: tuple[int, int] | None


def _is_mask_tube(tube) -> bool:
    return hasattr(tube, "height") and hasattr(tube, "width")


def tube_to_intervals(tube) -> FlatTube:
    """Flatten a MaskTube or PointTube for repeated pairwise IoU queries.

    Each frame occupies a disjoint block of the flat index space, so the
    per-frame sums in volume IoU reduce to one interval-set intersection.
    """
    starts: list[int] = []
    ends: list[int] = []
    area = 0
    if _is_mask_tube(tube):
        stride = tube.height * tube.width
        for f in sorted(tube.frames):
            mask = tube.frames[f]
            if (mask.height, mask.width) != (tube.height, tube.width):
                raise ShapeMismatch(
                    f"frame {f}: mask {mask.height}x{mask.width} in "
                    f"{tube.height}x{tube.width} tube"
                )
            off = f * stride
            for s, e in mask.one_intervals():
                starts.append(off + s)
                ends.append(off + e)
                area += e - s
        kind, shape = "mask", (tube.height, tube.width)
    else:
        for f in sorted(tube.frames):
            off = f * _POINT_STRIDE
            for idx in sorted(set(tube.frames[f])):
                starts.append(off + idx)
                ends.append(off + idx + 1)
                area += 1
        kind, shape = "point", None
    return FlatTube(
        np.asarray(starts, dtype=np.int64),
        np.asarray(ends, dtype=np.int64),
        area,
        kind,
        shape,
    )


def _flat_intersection(a: FlatTube, b: FlatTube) -> int:
    """Exact integer intersection size of two flattened tubes."""
    if a.starts.size == 0 or b.starts.size == 0:
        return 0
    # measure(x) = |b's set ∩ [0, x)| evaluated via searchsorted; the
    # intersection is then sum(measure(a.ends) - measure(a.starts)).
    cum = np.concatenate(([0], np.cumsum(b.ends - b.starts)))

    def measure(x: np.ndarray) -> np.ndarray:
        i = np.searchsorted(b.starts, x, side="right")
        prev = np.maximum(i - 1, 0)
        partial = np.minimum(b.ends[prev], x) - b.starts[prev]
        return np.where(i > 0, cum[prev] + np.maximum(partial, 0), 0)

    hi = measure(a.ends)
    lo = measure(a.starts)
    return int(np.sum(hi - lo))


def flat_viou_counts(a: FlatTube, b: FlatTube) -> tuple[int, int]:
    """(intersection, union) pixel/point counts of two flattened tubes."""
    if a.kind != b.kind:
        raise KindMismatch(f"{a.kind} tube vs {b.kind} tube")
    if a.kind == "mask" and a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    inter = _flat_intersection(a, b)
    return inter, a.area + b.area - inter


def volume_iou_counts(a, b) -> tuple[int, int]:
    """(intersection, union) counts between two tubes of the same kind."""
    if _is_mask_tube(a) != _is_mask_tube(b):
        raise KindMismatch("cannot compare a mask tube with a point tube")
    return flat_viou_counts(tube_to_intervals(a), tube_to_intervals(b))


def volume_iou(a, b) -> float:
    """Volume IoU: summed per-frame intersection over summed per-frame union.

    Frames absent from a tube count as empty; two entirely empty tubes
    score 0.
    """
    inter, union = volume_iou_counts(a, b)
    return inter / union if union else 0.0


def viou_exceeds(inter: int, union: int, threshold: float) -> bool:
    """Exact rational test of intersection/union > threshold."""
    if union == 0:
        return False
    return Fraction(inter, union) > Fraction(threshold)


def volume_iou_exceeds(a, b, threshold: float) -> bool:
    """True iff volume IoU of the tubes strictly exceeds ``threshold``."""
    inter, union = volume_iou_counts(a, b)
    return viou_exceeds(inter, union, threshold)


def span_iou(a, b) -> float:
    """IoU of two half-open frame intervals in integer frame units."""
    overlap = max(0, min(a.end, b.end) - max(a.start, b.start))
    union = (a.end - a.start) + (b.end - b.start) - overlap
    return overlap / union if union else 0.0
