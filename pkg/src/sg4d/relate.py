"""Geometric relation baseline: rulebook-driven triplet scoring.

Stands in for a learned relation classifier so the pipeline runs
end-to-end: rules turn per-frame 3D geometry of tracked entities into
ranked, time-stamped triplets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import MissingTrajectory
from .model import EntityNode, FrameInterval, RelationTriplet

RULE_KINDS = ("near", "above", "contact")


@dataclass(frozen=True)
class Rule:
    """One geometric predicate rule.

    kind "near": centroid distance < threshold.
    kind "above": subject z minus object z > threshold and horizontal
    distance < threshold.
    kind "contact": tubes share at least one voxel of edge length
    ``threshold``.
    """

    predicate_id: int
    kind: str
    threshold: float
    min_duration: int

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.threshold <= 0:
            raise ValueError("rule threshold must be positive")
        if self.min_duration < 1:
            raise ValueError("min_duration must be at least 1")


@dataclass(frozen=True)
class Rulebook:
    rules: tuple[Rule, ...]

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    def needs_points(self) -> bool:
        return any(r.kind == "contact" for r in self.rules)


def _runs(frames: list[int]) -> list[tuple[int, int]]:
    """Maximal runs of consecutive integers as half-open intervals."""
    out = []
    for f in frames:
        if out and f == out[-1][1]:
            out[-1] = (out[-1][0], f + 1)
        else:
            out.append((f, f + 1))
    return out


def _voxel_set(points: np.ndarray, size: float) -> frozenset[tuple[int, int, int]]:
    cells = np.floor(np.asarray(points) / size).astype(np.int64)
    return frozenset(map(tuple, cells.tolist()))


def score_pairs_geometric(
    entities: Sequence[EntityNode],
    trajectories: Mapping[int, Mapping[int, tuple[float, float, float]]],
    rulebook: Rulebook,
    tube_points: Mapping[int, Mapping[int, np.ndarray]] | None = None,
) -> list[RelationTriplet]:
    """Emit one triplet per maximal frame run satisfying a rule.

    ``trajectories`` maps entity id to per-frame centroids (near/above
    rules); ``tube_points`` maps entity id to per-frame world-space point
    arrays and is required when the rulebook has contact rules. A frame
    missing from either entity's data fails every rule at that frame.

    Confidence is the run mean of max(0, 1 - distance/threshold) using the
    centroid distance for "near" and the horizontal distance for "above";
    contact scores 1. Output is sorted by confidence descending, ties by
    (subject, object, predicate, start).
    """
    for e in entities:
        if e.entity_id not in trajectories:
            raise MissingTrajectory(f"no trajectory for entity {e.entity_id}")
    if rulebook.needs_points():
        if tube_points is None:
            raise MissingTrajectory("contact rules require per-frame tube points")
        for e in entities:
            if e.entity_id not in tube_points:
                raise MissingTrajectory(f"no tube points for entity {e.entity_id}")

    voxel_cache: dict[tuple[int, int, float], frozenset] = {}

    def voxels(eid: int, frame: int, size: float):
        key = (eid, frame, size)
        if key not in voxel_cache:
            pts = tube_points[eid].get(frame)
            voxel_cache[key] = _voxel_set(pts, size) if pts is not None else frozenset()
        return voxel_cache[key]

    out: list[RelationTriplet] = []
    for subj in entities:
        for obj in entities:
            if subj.entity_id == obj.entity_id:
                continue
            ts = trajectories[subj.entity_id]
            to = trajectories[obj.entity_id]
            common = sorted(set(ts) & set(to))
            for rule in rulebook.rules:
                hits: list[int] = []
                scores: dict[int, float] = {}
                if rule.kind == "contact":
                    for f in sorted(
                        set(tube_points[subj.entity_id]) & set(tube_points[obj.entity_id])
                    ):
                        if voxels(subj.entity_id, f, rule.threshold) & voxels(
                            obj.entity_id, f, rule.threshold
                        ):
                            hits.append(f)
                            scores[f] = 1.0
                else:
                    for f in common:
                        sx, sy, sz = ts[f]
                        ox, oy, oz = to[f]
                        if rule.kind == "near":
                            dist = math.dist(ts[f], to[f])
                            ok = dist < rule.threshold
                        else:  # above
                            dist = math.hypot(sx - ox, sy - oy)
                            ok = (sz - oz > rule.threshold) and dist < rule.threshold
                        if ok:
                            hits.append(f)
                            scores[f] = max(0.0, 1.0 - dist / rule.threshold)
                for start, end in _runs(hits):
                    if end - start < rule.min_duration:
                        continue
                    conf = math.fsum(scores[f] for f in range(start, end)) / (end - start)
                    out.append(
                        RelationTriplet(
                            subj.entity_id,
                            obj.entity_id,
                            rule.predicate_id,
                            FrameInterval(start, end),
                            conf,
                        )
                    )
    out.sort(
        key=lambda t: (
            -t.confidence,
            t.subject_id,
            t.object_id,
            t.predicate_id,
            t.interval.start,
        )
    )
    return out
