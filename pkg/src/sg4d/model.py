"""Domain types for 4D scene graphs and their structural validation.

A scene graph for one video holds entities (each with a segmentation tube
and a category) plus time-stamped relation triplets. All types are
immutable after construction; cheap local invariants raise at construction
time, cross-referential ones are reported by :func:`validate_scene_graph`
as data.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence, Union

from .overlap import RleMask

GROUND_TRUTH = "ground-truth"
PREDICTION = "prediction"


@dataclass(frozen=True)
class ObjectClass:
    id: int
    name: str
    is_thing: bool


@dataclass(frozen=True)
class PredicateClass:
    id: int
    name: str


@dataclass(frozen=True)
class Vocabulary:
    """Object and predicate class lists with dense ids starting at 0."""

    object_classes: tuple[ObjectClass, ...]
    predicate_classes: tuple[PredicateClass, ...]

    def __post_init__(self):
        object.__setattr__(self, "object_classes", tuple(self.object_classes))
        object.__setattr__(self, "predicate_classes", tuple(self.predicate_classes))
        for kind, classes in (
            ("object", self.object_classes),
            ("predicate", self.predicate_classes),
        ):
            if not classes:
                raise ValueError(f"vocabulary needs at least one {kind} class")
            if [c.id for c in classes] != list(range(len(classes))):
                raise ValueError(f"{kind} class ids must be dense 0..n-1")
            names = [c.name for c in classes]
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate {kind} class name")

    @cached_property
    def checksum(self) -> str:
        doc = {
            "objects": [[c.id, c.name, c.is_thing] for c in self.object_classes],
            "predicates": [[c.id, c.name] for c in self.predicate_classes],
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def has_object(self, cid: int) -> bool:
        return 0 <= cid < len(self.object_classes)

    def has_predicate(self, pid: int) -> bool:
        return 0 <= pid < len(self.predicate_classes)

    def object_name(self, cid: int) -> str:
        return self.object_classes[cid].name

    def predicate_name(self, pid: int) -> str:
        return self.predicate_classes[pid].name


@dataclass(frozen=True)
class FrameInterval:
    """Half-open [start, end) interval in frame units."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid interval [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True, eq=False)
class MaskTube:
    """Per-frame RLE masks of one entity over an H x W pixel grid."""

    entity_id: int
    height: int
    width: int
    frames: Mapping[int, RleMask]

    def __post_init__(self):
        object.__setattr__(self, "frames", dict(self.frames))

    def __eq__(self, other):
        if not isinstance(other, MaskTube):
            return NotImplemented
        return (self.entity_id, self.height, self.width, self.frames) == (
            other.entity_id,
            other.height,
            other.width,
            other.frames,
        )


@dataclass(frozen=True, eq=False)
class PointTube:
    """Per-frame sorted point indices of one entity into shared point clouds."""

    entity_id: int
    frames: Mapping[int, tuple[int, ...]]

    def __post_init__(self):
        object.__setattr__(
            self, "frames", {f: tuple(int(i) for i in idx) for f, idx in self.frames.items()}
        )

    def __eq__(self, other):
        if not isinstance(other, PointTube):
            return NotImplemented
        return (self.entity_id, self.frames) == (other.entity_id, other.frames)


Tube = Union[MaskTube, PointTube]


@dataclass(frozen=True, eq=False)
class EntityNode:
    """A tracked entity: category, detection score, tube, optional embeddings."""

    entity_id: int
    category_id: int
    score: float
    tube: Tube
    embedding_tube: Mapping[int, tuple[float, ...]] | None = None

    def __post_init__(self):
        if self.embedding_tube is not None:
            object.__setattr__(
                self,
                "embedding_tube",
                {f: tuple(float(x) for x in v) for f, v in self.embedding_tube.items()},
            )

    def __eq__(self, other):
        if not isinstance(other, EntityNode):
            return NotImplemented
        return (
            self.entity_id,
            self.category_id,
            self.score,
            self.tube,
            self.embedding_tube,
        ) == (
            other.entity_id,
            other.category_id,
            other.score,
            other.tube,
            other.embedding_tube,
        )


@dataclass(frozen=True)
class RelationTriplet:
    """Directed (subject, predicate, object) relation over a time interval."""

    subject_id: int
    object_id: int
    predicate_id: int
    interval: FrameInterval
    confidence: float


@dataclass(frozen=True, eq=False)
class SceneGraph4D:
    """All entities and relation triplets of one video."""

    video_id: str
    entities: tuple[EntityNode, ...]
    triplets: tuple[RelationTriplet, ...]
    vocabulary_ref: str

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "triplets", tuple(self.triplets))

    @cached_property
    def entities_by_id(self) -> dict[int, EntityNode]:
        return {e.entity_id: e for e in self.entities}

    def __eq__(self, other):
        if not isinstance(other, SceneGraph4D):
            return NotImplemented
        return (self.video_id, self.entities, self.triplets, self.vocabulary_ref) == (
            other.video_id,
            other.entities,
            other.triplets,
            other.vocabulary_ref,
        )


@dataclass(frozen=True, order=True)
class Violation:
    """One structural defect, identified by a machine-readable code."""

    code: str
    offender: str = field(default="")
    frame: int = field(default=-1)
    detail: str = field(default="")

    def sort_key(self):
        numeric = self.offender.isdigit()
        return (
            self.code,
            numeric,
            int(self.offender) if numeric else 0,
            self.offender,
            self.frame,
            self.detail,
        )

    def __str__(self):
        parts = [self.code]
        if self.offender:
            parts.append(f"offender={self.offender}")
        if self.frame >= 0:
            parts.append(f"frame={self.frame}")
        if self.detail:
            parts.append(self.detail)
        return " ".join(parts)


def _check_entity(entity: EntityNode, vocab: Vocabulary, mode: str, out: list[Violation]):
    eid = str(entity.entity_id)
    if not vocab.has_object(entity.category_id):
        out.append(Violation("InvalidCategory", eid, detail=f"category_id={entity.category_id}"))
    if not (0.0 <= entity.score <= 1.0):
        out.append(Violation("InvalidScore", eid, detail=f"score={entity.score}"))
    elif mode == GROUND_TRUTH and entity.score != 1.0:
        out.append(Violation("NonUnitScore", eid, detail=f"score={entity.score}"))

    tube = entity.tube
    nonempty = 0
    if isinstance(tube, MaskTube):
        for f, mask in tube.frames.items():
            if f < 0:
                out.append(Violation("NegativeFrameIndex", eid, frame=f))
            if (mask.height, mask.width) != (tube.height, tube.width):
                out.append(Violation("MaskShapeMismatch", eid, frame=f))
            if not mask.is_empty():
                nonempty += 1
    else:
        for f, indices in tube.frames.items():
            if f < 0:
                out.append(Violation("NegativeFrameIndex", eid, frame=f))
            if any(i < 0 for i in indices) or any(
                indices[i] >= indices[i + 1] for i in range(len(indices) - 1)
            ):
                out.append(Violation("PointIndexOrder", eid, frame=f))
            if indices:
                nonempty += 1
    if nonempty == 0:
        out.append(Violation("EmptyTube", eid))

    if entity.embedding_tube:
        dims = {len(v) for v in entity.embedding_tube.values()}
        if len(dims) > 1:
            out.append(Violation("EmbeddingDimMismatch", eid, detail=f"dims={sorted(dims)}"))


def _check_panoptic_overlap(entities: Sequence[EntityNode], out: list[Violation]):
    # Per frame, merge every tube's run intervals and scan for any overlap.
    per_frame: dict[int, list[tuple[int, int]]] = {}
    for e in entities:
        if not isinstance(e.tube, MaskTube):
            continue
        for f, mask in e.tube.frames.items():
            per_frame.setdefault(f, []).extend(mask.one_intervals())
    for f in sorted(per_frame):
        intervals = sorted(per_frame[f])
        for (_, e0), (s1, _) in zip(intervals, intervals[1:]):
            if s1 < e0:
                out.append(Violation("PanopticOverlap", frame=f))
                break


def validate_scene_graph(
    graph: SceneGraph4D, vocab: Vocabulary, mode: str = GROUND_TRUTH
) -> list[Violation]:
    """Check every structural invariant; return violations as sorted data.

    Ground-truth mode additionally enforces panoptic non-overlap of mask
    tubes and unit entity scores / triplet confidences; prediction mode
    allows overlapping tubes and fractional scores. The result is sorted
    by (code, offender, frame) and is identical for identical inputs.
    """
    if mode not in (GROUND_TRUTH, PREDICTION):
        raise ValueError(f"mode must be {GROUND_TRUTH!r} or {PREDICTION!r}")
    out: list[Violation] = []

    if graph.vocabulary_ref != vocab.checksum:
        out.append(Violation("VocabularyRefMismatch", detail=graph.vocabulary_ref))

    seen: set[int] = set()
    for e in graph.entities:
        if e.entity_id in seen:
            out.append(Violation("DuplicateEntityId", str(e.entity_id)))
        seen.add(e.entity_id)
        _check_entity(e, vocab, mode, out)

    kinds = {isinstance(e.tube, MaskTube) for e in graph.entities}
    if len(kinds) > 1:
        out.append(Violation("TubeKindMismatch"))
    shapes = {
        (e.tube.height, e.tube.width) for e in graph.entities if isinstance(e.tube, MaskTube)
    }
    if len(shapes) > 1:
        out.append(Violation("InconsistentTubeShape", detail=str(sorted(shapes))))

    ids = {e.entity_id for e in graph.entities}
    for i, t in enumerate(graph.triplets):
        for ref in (t.subject_id, t.object_id):
            if ref not in ids:
                out.append(Violation("UnresolvedEntity", str(ref), detail=f"triplet={i}"))
        if t.subject_id == t.object_id:
            out.append(Violation("SelfRelation", str(i)))
        if not vocab.has_predicate(t.predicate_id):
            out.append(
                Violation("InvalidPredicate", str(i), detail=f"predicate_id={t.predicate_id}")
            )
        if not (0.0 <= t.confidence <= 1.0):
            out.append(Violation("InvalidConfidence", str(i), detail=f"confidence={t.confidence}"))
        elif mode == GROUND_TRUTH and t.confidence != 1.0:
            out.append(Violation("NonUnitConfidence", str(i), detail=f"confidence={t.confidence}"))

    if mode == GROUND_TRUTH and len(shapes) <= 1:
        _check_panoptic_overlap(graph.entities, out)

    return sorted(out, key=Violation.sort_key)
