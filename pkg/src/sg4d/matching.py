"""Optimal assignment, tube-to-ground-truth matching, and embedding tracking.

The assignment solver runs in exact rational arithmetic so optimality and
the tie-break rule (lexicographically smallest pair set among optima) hold
bit-for-bit regardless of float noise in the cost matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import EmptyMatrix, InvalidThreshold, KindMismatch
from .model import EntityNode, MaskTube, PointTube
from .overlap import RleMask, frame_iou, volume_iou


@dataclass(frozen=True)
class FrameSegment:
    """One frame-level segment with its tracking embedding."""

    frame: int
    category_id: int
    score: float
    embedding: tuple[float, ...]
    mask: RleMask | None = None
    points: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "embedding", tuple(float(x) for x in self.embedding))
        if self.points is not None:
            object.__setattr__(self, "points", tuple(int(i) for i in self.points))
        if (self.mask is None) == (self.points is None):
            raise ValueError("segment needs exactly one of mask or points")
        if not self.embedding or not all(math.isfinite(x) for x in self.embedding):
            raise ValueError("embedding must be non-empty and finite")


def _to_fraction(x) -> Fraction:
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cost entries must be finite, got {x}")
    return Fraction(x)


def _solve_square(cost: list[list[Fraction]]):
    """Jonker-Volgenant style shortest augmenting paths with potentials.

    Returns (match_col, u, v) where match_col[j] is the row assigned to
    column j and (u, v) are optimal dual potentials: every reduced cost
    cost[i][j] - u[i] - v[j] is >= 0, with equality on matched edges.
    """
    n = len(cost)
    u = [Fraction(0)] * n
    v = [Fraction(0)] * (n + 1)
    match_col = [-1] * (n + 1)  # column n is the virtual start column
    for i in range(n):
        match_col[n] = i
        j0 = n
        minv: list[Fraction | None] = [None] * n
        way = [-1] * n
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            delta: Fraction | None = None
            j1 = -1
            for j in range(n):
                if used[j]:
                    continue
                cur = cost[i0][j] - u[i0] - v[j]
                if minv[j] is None or cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if delta is None or minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match_col[j]] += delta
                    v[j] -= delta
                elif minv[j] is not None:
                    minv[j] -= delta
            j0 = j1
            if match_col[j0] == -1:
                break
        while j0 != n:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1
    return match_col, u, v


def _lexicographic_refine(
    tight: list[list[int]], col_of: list[int], row_of: list[int], n_real_rows: int
) -> list[int]:
    """Rewire a perfect matching on the tight graph so the real-row pair
    list is lexicographically smallest, keeping optimality (any perfect
    matching on tight edges is optimal)."""
    n = len(col_of)
    fixed_cols: set[int] = set()

    def augment(row: int, visited: set[int]) -> bool:
        for c in tight[row]:
            if c in fixed_cols or c in visited:
                continue
            visited.add(c)
            owner = row_of[c]
            if owner == -1 or augment(owner, visited):
                row_of[c] = row
                col_of[row] = c
                return True
        return False

    for r in range(min(n_real_rows, n)):
        current = col_of[r]
        for c in tight[r]:
            if c in fixed_cols:
                continue
            if c >= current:
                break  # tight cols are ascending; current is feasible
            displaced = row_of[c]
            # tentatively move r onto c and re-route the displaced row
            col_of[r] = c
            row_of[c] = r
            col_of[displaced] = -1
            row_of[current] = -1
            if augment(displaced, {c}):
                current = c
                break
            # revert
            col_of[displaced] = c
            row_of[c] = displaced
            col_of[r] = current
            row_of[current] = r
        fixed_cols.add(current)
    return col_of


def hungarian(cost) -> set[tuple[int, int]]:
    """Minimum-cost assignment of size min(n, m) on an n x m cost matrix.

    Deterministic: among all optimal assignments, returns the one whose
    sorted (row, col) pair list is lexicographically smallest.
    """
    rows = [list(r) for r in cost]
    n = len(rows)
    m = len(rows[0]) if n else 0
    if n == 0 or m == 0:
        raise EmptyMatrix("cost matrix must have at least one row and column")
    if any(len(r) != m for r in rows):
        raise ValueError("ragged cost matrix")

    k = max(n, m)
    zero = Fraction(0)
    square = [
        [_to_fraction(rows[i][j]) if i < n and j < m else zero for j in range(k)]
        for i in range(k)
    ]
    match_col, u, v = _solve_square(square)

    col_of = [-1] * k
    row_of = [-1] * k
    for j in range(k):
        col_of[match_col[j]] = j
        row_of[j] = match_col[j]
    tight = [
        [j for j in range(k) if square[i][j] - u[i] - v[j] == 0] for i in range(k)
    ]
    for i in range(k):
        assert square[i][col_of[i]] - u[i] - v[col_of[i]] == 0, "duals not optimal"

    col_of = _lexicographic_refine(tight, col_of, row_of, n)
    return {(i, col_of[i]) for i in range(n) if col_of[i] < m}


def _tube_kind(tubes: Sequence) -> str:
    kinds = {isinstance(t, MaskTube) for t in tubes}
    if len(kinds) > 1:
        raise KindMismatch("mask and point tubes mixed in one batch")
    return "mask" if kinds == {True} else "point"


def assign_tubes(
    pred: Sequence, gt: Sequence, min_viou: float
) -> dict[int, tuple[int, float]]:
    """Match ground-truth tubes to predicted tubes maximizing total vIOU.

    Returns {gt index: (pred index, vIOU)}; pairs below ``min_viou`` are
    dropped after the optimal matching is computed.
    """
    if not pred or not gt:
        return {}
    _tube_kind(list(pred) + list(gt))
    viou = [[volume_iou(g, p) for p in pred] for g in gt]
    pairs = hungarian([[1.0 - x for x in row] for row in viou])
    return {
        gi: (pi, viou[gi][pi]) for gi, pi in sorted(pairs) if viou[gi][pi] >= min_viou
    }


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("tracking embeddings must be non-zero")
    return float(np.dot(a, b) / (na * nb))


def _segment_overlap(a: FrameSegment, b: FrameSegment) -> float:
    if a.mask is not None and b.mask is not None:
        return frame_iou(a.mask, b.mask).iou
    sa, sb = set(a.points or ()), set(b.points or ())
    union = len(sa | sb)
    return len(sa & sb) / union if union else 0.0


def _track_to_entity(entity_id: int, segments: list[FrameSegment]) -> EntityNode:
    votes: dict[int, list[float]] = {}
    for s in segments:
        votes.setdefault(s.category_id, []).append(s.score)
    best = max(
        votes.items(),
        key=lambda kv: (len(kv[1]), math.fsum(kv[1]) / len(kv[1]), -kv[0]),
    )
    score = math.fsum(s.score for s in segments) / len(segments)
    if segments[0].mask is not None:
        tube = MaskTube(
            entity_id,
            segments[0].mask.height,
            segments[0].mask.width,
            {s.frame: s.mask for s in segments},
        )
    else:
        tube = PointTube(entity_id, {s.frame: s.points for s in segments})
    return EntityNode(
        entity_id,
        best[0],
        score,
        tube,
        embedding_tube={s.frame: s.embedding for s in segments},
    )


def link_tracks(
    segments: Sequence[Sequence[FrameSegment]],
    tau: float = 0.5,
    iou_gate: float | None = None,
) -> list[EntityNode]:
    """Link per-frame segments into tracks by embedding similarity.

    Consecutive frame lists are associated with an optimal assignment on
    1 - cosine similarity; assignments with similarity below ``tau`` (or
    frame overlap below ``iou_gate`` when given) are rejected and start new
    tracks. A track that misses a frame is never resumed.
    """
    if not (0.0 <= tau <= 1.0):
        raise InvalidThreshold(f"tau must be in [0, 1], got {tau}")
    if iou_gate is not None and not (0.0 <= iou_gate <= 1.0):
        raise InvalidThreshold(f"iou_gate must be in [0, 1], got {iou_gate}")

    tracks: list[list[FrameSegment]] = []
    prev: list[tuple[int, FrameSegment]] = []  # (track index, segment)
    prev_frame: int | None = None
    for group in segments:
        group = list(group)
        if group:
            frames_here = {s.frame for s in group}
            if len(frames_here) != 1:
                raise ValueError(f"one group mixes frames {sorted(frames_here)}")
            frame = group[0].frame
            if prev_frame is not None and frame <= prev_frame:
                raise ValueError("frame groups must have increasing frame indices")
            prev_frame = frame

        matched = [False] * len(group)
        assigned: list[tuple[int, FrameSegment]] = []
        if prev and group:
            emb_prev = [np.asarray(s.embedding) for _, s in prev]
            emb_cur = [np.asarray(s.embedding) for s in group]
            sims = [[_cosine(a, b) for b in emb_cur] for a in emb_prev]
            pairs = hungarian([[1.0 - s for s in row] for row in sims])
            for pi, ci in sorted(pairs):
                if sims[pi][ci] < tau:
                    continue
                if iou_gate is not None and _segment_overlap(prev[pi][1], group[ci]) < iou_gate:
                    continue
                ti = prev[pi][0]
                tracks[ti].append(group[ci])
                matched[ci] = True
                assigned.append((ti, group[ci]))
        for ci, seg in enumerate(group):
            if not matched[ci]:
                tracks.append([seg])
                assigned.append((len(tracks) - 1, seg))
        prev = assigned

    return [_track_to_entity(i, segs) for i, segs in enumerate(tracks)]
