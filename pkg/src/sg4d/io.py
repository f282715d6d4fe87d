"""On-disk formats: dataset layout, prediction/segment/rulebook/recipe files.

All JSON documents are written canonically (sorted keys, two-space indent,
shortest round-trip float formatting, trailing newline), so semantically
equal graphs serialize to identical bytes. Depth frames are 16-bit
grayscale PNGs holding meters * depth_scale with 0 marking missing depth;
point-cloud frames are raw little-endian records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import ChecksumMismatch, MalformedRle, MissingFile, SchemaViolation
from .geometry import CameraIntrinsics, PointCloudFrame, RigidTransform
from .matching import FrameSegment
from .model import (
    EntityNode,
    FrameInterval,
    MaskTube,
    ObjectClass,
    PointTube,
    PredicateClass,
    RelationTriplet,
    SceneGraph4D,
    Violation,
    Vocabulary,
    validate_scene_graph,
)
from .overlap import RleMask
from .relate import Rule, Rulebook
from .synthgen import ObjectSpec, SceneRecipe

DATASET_FORMAT = "sg4d-dataset-v1"
PREDICTIONS_FORMAT = "sg4d-predictions-v1"
SEGMENTS_FORMAT = "sg4d-segments-v1"

MODE_RGBD = "rgbd"
MODE_POINTS = "points"


def canonical_dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: Path, doc) -> None:
    Path(path).write_text(canonical_dumps(doc), encoding="utf-8")


def read_json(path: Path):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaViolation(str(path), f"invalid JSON: {e}") from e


class _Doc:
    """Typed field access over a parsed JSON object with path context."""

    def __init__(self, path: str, obj, where: str = ""):
        if not isinstance(obj, dict):
            raise SchemaViolation(path, f"{where or 'document'} must be an object")
        self.path = path
        self.obj = obj
        self.where = where

    def _fail(self, key: str, reason: str):
        ctx = f"{self.where}." if self.where else ""
        raise SchemaViolation(self.path, f"{ctx}{key}: {reason}")

    def get(self, key: str, kind, optional: bool = False):
        if key not in self.obj:
            if optional:
                return None
            self._fail(key, "missing")
        val = self.obj[key]
        if val is None and optional:
            return None
        if kind is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
            self._fail(key, f"expected integer, got {type(val).__name__}")
        if not isinstance(val, kind):
            self._fail(key, f"expected {kind.__name__}, got {type(val).__name__}")
        return val

    def sub(self, key: str, optional: bool = False) -> "_Doc | None":
        val = self.get(key, dict, optional=optional)
        if val is None:
            return None
        ctx = f"{self.where}.{key}" if self.where else key
        return _Doc(self.path, val, ctx)


# ---------------------------------------------------------------------------
# vocabulary


def vocabulary_to_doc(vocab: Vocabulary) -> dict:
    return {
        "objects": [[c.id, c.name, c.is_thing] for c in vocab.object_classes],
        "predicates": [[c.id, c.name] for c in vocab.predicate_classes],
    }


def vocabulary_from_doc(path: str, doc) -> Vocabulary:
    d = _Doc(path, doc, "vocabulary")
    try:
        objects = tuple(
            ObjectClass(int(r[0]), str(r[1]), bool(r[2])) for r in d.get("objects", list)
        )
        predicates = tuple(
            PredicateClass(int(r[0]), str(r[1])) for r in d.get("predicates", list)
        )
        return Vocabulary(objects, predicates)
    except (ValueError, TypeError, IndexError) as e:
        raise SchemaViolation(path, f"vocabulary: {e}") from e


# ---------------------------------------------------------------------------
# graphs <-> documents


def _entity_to_doc(entity: EntityNode) -> dict:
    doc = {
        "category_id": entity.category_id,
        "entity_id": entity.entity_id,
        "score": entity.score,
    }
    tube = entity.tube
    if isinstance(tube, MaskTube):
        doc["masks"] = {str(f): list(m.runs) for f, m in sorted(tube.frames.items())}
    else:
        doc["points"] = {str(f): list(idx) for f, idx in sorted(tube.frames.items())}
    if entity.embedding_tube is not None:
        doc["embeddings"] = {
            str(f): list(v) for f, v in sorted(entity.embedding_tube.items())
        }
    return doc


def _entity_from_doc(path: str, obj, height: int | None, width: int | None) -> EntityNode:
    d = _Doc(path, obj, "entity")
    eid = d.get("entity_id", int)
    cat = d.get("category_id", int)
    score = d.get("score", float)
    masks = d.get("masks", dict, optional=True)
    points = d.get("points", dict, optional=True)
    if (masks is None) == (points is None):
        d._fail("masks", "entity needs exactly one of masks or points")
    try:
        if masks is not None:
            if height is None or width is None:
                raise SchemaViolation(path, "mask entities need video height/width")
            frames = {
                int(f): RleMask(height, width, tuple(runs)) for f, runs in masks.items()
            }
            tube = MaskTube(eid, height, width, frames)
        else:
            tube = PointTube(eid, {int(f): tuple(idx) for f, idx in points.items()})
    except (MalformedRle, ValueError, TypeError) as e:
        raise SchemaViolation(path, f"entity {eid}: {e}") from e
    embeddings = d.get("embeddings", dict, optional=True)
    emb = None
    if embeddings is not None:
        emb = {int(f): tuple(float(x) for x in v) for f, v in embeddings.items()}
    return EntityNode(eid, cat, score, tube, emb)


def _triplet_to_doc(t: RelationTriplet) -> dict:
    return {
        "confidence": t.confidence,
        "end": t.interval.end,
        "object": t.object_id,
        "predicate": t.predicate_id,
        "start": t.interval.start,
        "subject": t.subject_id,
    }


def _triplet_from_doc(path: str, obj) -> RelationTriplet:
    d = _Doc(path, obj, "triplet")
    try:
        interval = FrameInterval(d.get("start", int), d.get("end", int))
    except ValueError as e:
        raise SchemaViolation(path, f"triplet: {e}") from e
    return RelationTriplet(
        d.get("subject", int),
        d.get("object", int),
        d.get("predicate", int),
        interval,
        d.get("confidence", float),
    )


def graph_to_docs(graph: SceneGraph4D) -> tuple[dict, dict]:
    """(masks document, relations document) for one video."""
    masks_doc = {"entities": [_entity_to_doc(e) for e in graph.entities]}
    rel_doc = {"triplets": [_triplet_to_doc(t) for t in graph.triplets]}
    return masks_doc, rel_doc


def graph_from_docs(
    path: str,
    video_id: str,
    masks_doc,
    relations_doc,
    vocabulary_ref: str,
    height: int | None,
    width: int | None,
) -> SceneGraph4D:
    md = _Doc(path, masks_doc)
    entities = tuple(
        _entity_from_doc(path, e, height, width) for e in md.get("entities", list)
    )
    rd = _Doc(path, relations_doc)
    triplets = tuple(_triplet_from_doc(path, t) for t in rd.get("triplets", list))
    return SceneGraph4D(video_id, entities, triplets, vocabulary_ref)


# ---------------------------------------------------------------------------
# dataset layout


@dataclass(frozen=True)
class VideoManifest:
    video_id: str
    width: int
    height: int
    frame_count: int
    fps: float
    depth_scale: float
    max_depth: float
    mode: str
    intrinsics: CameraIntrinsics | None = None
    extrinsics: Mapping[int, RigidTransform] = field(default_factory=dict)

    def extrinsic_for(self, frame: int) -> RigidTransform:
        return self.extrinsics.get(frame, RigidTransform.identity())


def _video_manifest_to_doc(m: VideoManifest) -> dict:
    doc = {
        "depth_scale": m.depth_scale,
        "fps": m.fps,
        "frame_count": m.frame_count,
        "height": m.height,
        "max_depth": m.max_depth,
        "mode": m.mode,
        "video_id": m.video_id,
        "width": m.width,
        "extrinsics": (
            {str(f): [list(row) for row in t.matrix.tolist()] for f, t in sorted(m.extrinsics.items())}
            or None
        ),
        "intrinsics": (
            None
            if m.intrinsics is None
            else {
                "cx": m.intrinsics.cx,
                "cy": m.intrinsics.cy,
                "fx": m.intrinsics.fx,
                "fy": m.intrinsics.fy,
            }
        ),
    }
    return doc


def _video_manifest_from_doc(path: str, obj) -> VideoManifest:
    d = _Doc(path, obj)
    mode = d.get("mode", str)
    if mode not in (MODE_RGBD, MODE_POINTS):
        d._fail("mode", f"expected {MODE_RGBD!r} or {MODE_POINTS!r}")
    width = d.get("width", int)
    height = d.get("height", int)
    intr_doc = d.sub("intrinsics", optional=True)
    intrinsics = None
    if intr_doc is not None:
        try:
            intrinsics = CameraIntrinsics(
                intr_doc.get("fx", float),
                intr_doc.get("fy", float),
                intr_doc.get("cx", float),
                intr_doc.get("cy", float),
                width,
                height,
            )
        except ValueError as e:
            raise SchemaViolation(path, f"intrinsics: {e}") from e
    extr = d.get("extrinsics", dict, optional=True) or {}
    try:
        extrinsics = {int(f): RigidTransform(np.array(mat)) for f, mat in extr.items()}
    except ValueError as e:
        raise SchemaViolation(path, f"extrinsics: {e}") from e
    return VideoManifest(
        d.get("video_id", str),
        width,
        height,
        d.get("frame_count", int),
        d.get("fps", float),
        d.get("depth_scale", float),
        d.get("max_depth", float),
        mode,
        intrinsics,
        extrinsics,
    )


def video_dir(root: Path, video_id: str) -> Path:
    return Path(root) / "videos" / video_id


def write_dataset(
    root: Path,
    vocab: Vocabulary,
    items: Sequence[tuple[VideoManifest, SceneGraph4D]],
    rng_metadata: Mapping | None = None,
) -> None:
    """Write the manifest and per-video documents (frames are written
    separately by the frame writers)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for m, graph in items:
        if graph.vocabulary_ref != vocab.checksum:
            raise ChecksumMismatch(
                f"{m.video_id}: graph was written against another vocabulary"
            )
    manifest = {
        "format": DATASET_FORMAT,
        "rng": dict(rng_metadata) if rng_metadata else None,
        "videos": [m.video_id for m, _ in items],
        "vocabulary": vocabulary_to_doc(vocab),
        "vocabulary_checksum": vocab.checksum,
    }
    write_json(root / "manifest.json", manifest)
    for m, graph in items:
        vdir = video_dir(root, m.video_id)
        vdir.mkdir(parents=True, exist_ok=True)
        write_json(vdir / "video.json", _video_manifest_to_doc(m))
        masks_doc, rel_doc = graph_to_docs(graph)
        write_json(vdir / "masks.json", masks_doc)
        write_json(vdir / "relations.json", rel_doc)


def read_dataset(root: Path) -> tuple[Vocabulary, list[tuple[VideoManifest, SceneGraph4D]]]:
    """Read a dataset root; structural problems raise, semantic violations
    are left to :func:`validate_dataset`."""
    root = Path(root)
    mpath = root / "manifest.json"
    mdoc = _Doc(str(mpath), read_json(mpath))
    if mdoc.get("format", str) != DATASET_FORMAT:
        raise SchemaViolation(str(mpath), f"unknown format {mdoc.obj.get('format')!r}")
    vocab = vocabulary_from_doc(str(mpath), mdoc.get("vocabulary", dict))
    if mdoc.get("vocabulary_checksum", str) != vocab.checksum:
        raise ChecksumMismatch(f"{mpath}: manifest checksum does not match its vocabulary")
    out = []
    for vid in mdoc.get("videos", list):
        vdir = video_dir(root, str(vid))
        vm = _video_manifest_from_doc(str(vdir / "video.json"), read_json(vdir / "video.json"))
        if vm.video_id != vid:
            raise SchemaViolation(str(vdir / "video.json"), f"video_id {vm.video_id!r} != directory {vid!r}")
        hw = (vm.height, vm.width) if vm.mode == MODE_RGBD else (None, None)
        graph = graph_from_docs(
            str(vdir / "masks.json"),
            vm.video_id,
            read_json(vdir / "masks.json"),
            read_json(vdir / "relations.json"),
            vocab.checksum,
            *hw,
        )
        out.append((vm, graph))
    return vocab, out


def depth_frame_path(vdir: Path, frame: int) -> Path:
    return Path(vdir) / "frames" / f"{frame:06d}.depth.png"


def rgb_frame_path(vdir: Path, frame: int) -> Path:
    return Path(vdir) / "frames" / f"{frame:06d}.rgb.png"


def points_frame_path(vdir: Path, frame: int) -> Path:
    return Path(vdir) / "frames" / f"{frame:06d}.points.bin"


def write_depth_frame(vdir: Path, frame: int, depth_m: np.ndarray, depth_scale: float) -> None:
    path = depth_frame_path(vdir, frame)
    path.parent.mkdir(parents=True, exist_ok=True)
    scaled = np.round(np.asarray(depth_m, dtype=np.float64) * depth_scale)
    if scaled.max(initial=0) > np.iinfo(np.uint16).max:
        raise ValueError("depth exceeds the 16-bit range at this depth_scale")
    Image.fromarray(scaled.astype(np.uint16)).save(path, format="PNG")


def read_depth_frame(vdir: Path, frame: int, depth_scale: float) -> np.ndarray:
    path = depth_frame_path(vdir, frame)
    if not path.is_file():
        raise MissingFile(str(path))
    raw = np.asarray(Image.open(path), dtype=np.uint16)
    return raw.astype(np.float64) / depth_scale


def write_rgb_frame(vdir: Path, frame: int, rgb: np.ndarray) -> None:
    path = rgb_frame_path(vdir, frame)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path, format="PNG")


def read_rgb_frame(vdir: Path, frame: int) -> np.ndarray:
    path = rgb_frame_path(vdir, frame)
    if not path.is_file():
        raise MissingFile(str(path))
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def write_points_frame(vdir: Path, frame: int, points: np.ndarray) -> None:
    path = points_frame_path(vdir, frame)
    path.parent.mkdir(parents=True, exist_ok=True)
    pts = np.asarray(points, dtype="<f4").reshape(-1, 6)
    header = np.asarray([len(pts)], dtype="<u4")
    path.write_bytes(header.tobytes() + pts.tobytes())


def read_points_frame(vdir: Path, frame: int) -> PointCloudFrame:
    path = points_frame_path(vdir, frame)
    if not path.is_file():
        raise MissingFile(str(path))
    blob = path.read_bytes()
    if len(blob) < 4:
        raise SchemaViolation(str(path), "truncated point record")
    count = int(np.frombuffer(blob[:4], dtype="<u4")[0])
    data = np.frombuffer(blob[4:], dtype="<f4")
    if data.size != count * 6:
        raise SchemaViolation(str(path), f"expected {count * 6} floats, found {data.size}")
    return PointCloudFrame(data.reshape(count, 6).astype(np.float64))


def _points_frame_count(vdir: Path, frame: int) -> int | None:
    path = points_frame_path(vdir, frame)
    if not path.is_file():
        return None
    with open(path, "rb") as fh:
        header = fh.read(4)
    if len(header) < 4:
        return None
    return int(np.frombuffer(header, dtype="<u4")[0])


def validate_dataset(root: Path) -> list[tuple[str, Violation]]:
    """Full semantic validation: graph invariants plus layout invariants
    (frames referenced by tubes exist, point indices within range)."""
    vocab, items = read_dataset(root)
    out: list[tuple[str, Violation]] = []
    for vm, graph in items:
        for v in validate_scene_graph(graph, vocab, mode="ground-truth"):
            out.append((vm.video_id, v))
        vdir = video_dir(Path(root), vm.video_id)
        for e in graph.entities:
            for f in sorted(e.tube.frames):
                if vm.mode == MODE_RGBD:
                    ok = depth_frame_path(vdir, f).is_file() and rgb_frame_path(vdir, f).is_file()
                    if not ok:
                        out.append(
                            (vm.video_id, Violation("MissingFrameFile", str(e.entity_id), frame=f))
                        )
                else:
                    count = _points_frame_count(vdir, f)
                    if count is None:
                        out.append(
                            (vm.video_id, Violation("MissingFrameFile", str(e.entity_id), frame=f))
                        )
                    elif isinstance(e.tube, PointTube) and e.tube.frames[f]:
                        if e.tube.frames[f][-1] >= count:
                            out.append(
                                (vm.video_id, Violation("PointIndexRange", str(e.entity_id), frame=f))
                            )
    return out


# ---------------------------------------------------------------------------
# prediction files


def write_predictions(
    path: Path, vocab_checksum: str, videos: Sequence[tuple[VideoManifest | None, SceneGraph4D]]
) -> None:
    blocks = []
    for vm, graph in videos:
        if graph.vocabulary_ref != vocab_checksum:
            raise ChecksumMismatch(
                f"{graph.video_id}: graph was written against another vocabulary"
            )
        mask_tubes = [e.tube for e in graph.entities if isinstance(e.tube, MaskTube)]
        if vm is not None:
            height, width, mode = vm.height, vm.width, vm.mode
        elif mask_tubes:
            height, width, mode = mask_tubes[0].height, mask_tubes[0].width, MODE_RGBD
        else:
            height, width, mode = None, None, MODE_POINTS
        blocks.append(
            {
                "entities": [_entity_to_doc(e) for e in graph.entities],
                "height": height,
                "mode": mode,
                "triplets": [_triplet_to_doc(t) for t in graph.triplets],
                "video_id": graph.video_id,
                "width": width,
            }
        )
    write_json(
        Path(path),
        {
            "format": PREDICTIONS_FORMAT,
            "videos": blocks,
            "vocabulary_checksum": vocab_checksum,
        },
    )


def read_predictions(path: Path, vocab: Vocabulary) -> dict[str, SceneGraph4D]:
    doc = _Doc(str(path), read_json(path))
    if doc.get("format", str) != PREDICTIONS_FORMAT:
        raise SchemaViolation(str(path), f"unknown format {doc.obj.get('format')!r}")
    if doc.get("vocabulary_checksum", str) != vocab.checksum:
        raise ChecksumMismatch(f"{path}: predictions were written against another vocabulary")
    out: dict[str, SceneGraph4D] = {}
    for block in doc.get("videos", list):
        b = _Doc(str(path), block, "video")
        vid = b.get("video_id", str)
        if vid in out:
            raise SchemaViolation(str(path), f"duplicate video_id {vid!r}")
        height = b.get("height", int, optional=True)
        width = b.get("width", int, optional=True)
        out[vid] = graph_from_docs(
            str(path), vid, {"entities": block.get("entities", [])},
            {"triplets": block.get("triplets", [])}, vocab.checksum, height, width,
        )
    return out


# ---------------------------------------------------------------------------
# segments files (tracker input)


@dataclass(frozen=True)
class SegmentsFile:
    video_id: str
    vocabulary_checksum: str
    mode: str
    height: int | None
    width: int | None
    frames: tuple[tuple[FrameSegment, ...], ...]


def write_segments(path: Path, seg: SegmentsFile) -> None:
    frames = []
    for group in seg.frames:
        items = []
        for s in group:
            doc = {
                "category_id": s.category_id,
                "embedding": list(s.embedding),
                "score": s.score,
            }
            if s.mask is not None:
                doc["mask"] = list(s.mask.runs)
            else:
                doc["points"] = list(s.points)
            items.append(doc)
        frames.append({"frame": group[0].frame if group else None, "segments": items})
    write_json(
        Path(path),
        {
            "format": SEGMENTS_FORMAT,
            "frames": frames,
            "height": seg.height,
            "mode": seg.mode,
            "video_id": seg.video_id,
            "vocabulary_checksum": seg.vocabulary_checksum,
            "width": seg.width,
        },
    )


def read_segments(path: Path) -> SegmentsFile:
    doc = _Doc(str(path), read_json(path))
    if doc.get("format", str) != SEGMENTS_FORMAT:
        raise SchemaViolation(str(path), f"unknown format {doc.obj.get('format')!r}")
    mode = doc.get("mode", str)
    height = doc.get("height", int, optional=True)
    width = doc.get("width", int, optional=True)
    groups = []
    for block in doc.get("frames", list):
        b = _Doc(str(path), block, "frame")
        frame = b.get("frame", int, optional=True)
        segments = []
        for s in b.get("segments", list):
            sd = _Doc(str(path), s, "segment")
            mask_runs = sd.get("mask", list, optional=True)
            points = sd.get("points", list, optional=True)
            try:
                segments.append(
                    FrameSegment(
                        frame=frame if frame is not None else 0,
                        category_id=sd.get("category_id", int),
                        score=sd.get("score", float),
                        embedding=tuple(float(x) for x in sd.get("embedding", list)),
                        mask=(
                            RleMask(height, width, tuple(mask_runs))
                            if mask_runs is not None
                            else None
                        ),
                        points=tuple(points) if points is not None else None,
                    )
                )
            except (MalformedRle, ValueError, TypeError) as e:
                raise SchemaViolation(str(path), f"segment: {e}") from e
        groups.append(tuple(segments))
    return SegmentsFile(
        doc.get("video_id", str),
        doc.get("vocabulary_checksum", str),
        mode,
        height,
        width,
        tuple(groups),
    )


# ---------------------------------------------------------------------------
# rulebook and recipe files


def rulebook_to_doc(rb: Rulebook) -> dict:
    return {
        "rules": [
            {
                "kind": r.kind,
                "min_duration": r.min_duration,
                "predicate_id": r.predicate_id,
                "threshold": r.threshold,
            }
            for r in rb.rules
        ]
    }


def read_rulebook(path: Path, vocab: Vocabulary | None = None) -> Rulebook:
    doc = _Doc(str(path), read_json(path))
    rules = []
    for obj in doc.get("rules", list):
        d = _Doc(str(path), obj, "rule")
        try:
            rule = Rule(
                d.get("predicate_id", int),
                d.get("kind", str),
                d.get("threshold", float),
                d.get("min_duration", int),
            )
        except ValueError as e:
            raise SchemaViolation(str(path), f"rule: {e}") from e
        if vocab is not None and not vocab.has_predicate(rule.predicate_id):
            raise SchemaViolation(str(path), f"rule: unknown predicate_id {rule.predicate_id}")
        rules.append(rule)
    return Rulebook(tuple(rules))


def recipe_to_doc(recipe: SceneRecipe) -> dict:
    return {
        "depth_scale": recipe.depth_scale,
        "fps": recipe.fps,
        "frame_count": recipe.frame_count,
        "height": recipe.height,
        "intrinsics": {
            "cx": recipe.intrinsics.cx,
            "cy": recipe.intrinsics.cy,
            "fx": recipe.intrinsics.fx,
            "fy": recipe.intrinsics.fy,
        },
        "max_depth": recipe.max_depth,
        "objects": [
            {
                "box_size": list(o.box_size),
                "category_id": o.category_id,
                "color": list(o.color) if o.color is not None else None,
                "waypoints": [list(w) for w in o.waypoints],
            }
            for o in recipe.objects
        ],
        "rulebook": rulebook_to_doc(recipe.rulebook),
        "seed": recipe.seed,
        "video_id": recipe.video_id,
        "vocabulary": vocabulary_to_doc(recipe.vocabulary),
        "width": recipe.width,
    }


def _recipe_from_doc(path: str, obj) -> SceneRecipe:
    d = _Doc(path, obj, "recipe")
    vocab = vocabulary_from_doc(path, d.get("vocabulary", dict))
    width = d.get("width", int)
    height = d.get("height", int)
    intr = d.sub("intrinsics")
    try:
        intrinsics = CameraIntrinsics(
            intr.get("fx", float), intr.get("fy", float),
            intr.get("cx", float), intr.get("cy", float), width, height,
        )
        objects = []
        for o in d.get("objects", list):
            od = _Doc(path, o, "object")
            color = od.get("color", list, optional=True)
            objects.append(
                ObjectSpec(
                    od.get("category_id", int),
                    tuple(od.get("box_size", list)),
                    tuple(tuple(w) for w in od.get("waypoints", list)),
                    tuple(int(c) for c in color) if color is not None else None,
                )
            )
        rules = []
        for r in d.sub("rulebook").get("rules", list):
            rd = _Doc(path, r, "rule")
            rules.append(
                Rule(
                    rd.get("predicate_id", int), rd.get("kind", str),
                    rd.get("threshold", float), rd.get("min_duration", int),
                )
            )
        return SceneRecipe(
            d.get("video_id", str),
            d.get("seed", int),
            d.get("frame_count", int),
            height,
            width,
            intrinsics,
            vocab,
            tuple(objects),
            Rulebook(tuple(rules)),
            fps=d.get("fps", float),
            depth_scale=d.get("depth_scale", float),
            max_depth=d.get("max_depth", float),
        )
    except (ValueError, TypeError) as e:
        raise SchemaViolation(path, f"recipe: {e}") from e


def read_recipes(path: Path) -> list[SceneRecipe]:
    doc = read_json(path)
    if isinstance(doc, dict) and "videos" in doc:
        return [_recipe_from_doc(str(path), r) for r in doc["videos"]]
    return [_recipe_from_doc(str(path), doc)]


def write_recipes(path: Path, recipes: Sequence[SceneRecipe]) -> None:
    if len(recipes) == 1:
        write_json(Path(path), recipe_to_doc(recipes[0]))
    else:
        write_json(Path(path), {"videos": [recipe_to_doc(r) for r in recipes]})


# ---------------------------------------------------------------------------
# narration


def narrate(
    graph: SceneGraph4D,
    vocab: Vocabulary,
    window_seconds: float,
    fps: float,
    frame_count: int | None = None,
) -> list[str]:
    """Render the graph as text blocks, one per time window.

    Each triplet overlapping a window emits one line
    "from {s}s to {e}s, {subject} {predicate} {object}" with times clamped
    to the window and rounded to 0.1 s; windows with no triplets read
    "nothing observed".
    """
    if fps <= 0 or window_seconds <= 0:
        raise ValueError("fps and window_seconds must be positive")
    if frame_count is None:
        frame_count = 0
        for t in graph.triplets:
            frame_count = max(frame_count, t.interval.end)
        for e in graph.entities:
            if e.tube.frames:
                frame_count = max(frame_count, max(e.tube.frames) + 1)
    duration = frame_count / fps
    n_windows = max(1, math.ceil(duration / window_seconds))
    ents = graph.entities_by_id
    blocks = []
    for w in range(n_windows):
        lo = w * window_seconds
        hi = (w + 1) * window_seconds
        lines = []
        for t in graph.triplets:
            start = t.interval.start / fps
            end = t.interval.end / fps
            if end <= lo or start >= hi:
                continue
            s = max(start, lo)
            e = min(end, hi)
            subject = vocab.object_name(ents[t.subject_id].category_id)
            obj = vocab.object_name(ents[t.object_id].category_id)
            predicate = vocab.predicate_name(t.predicate_id)
            lines.append((s, subject, predicate, obj, e))
        lines.sort()
        if lines:
            blocks.append(
                "\n".join(
                    f"from {s:.1f}s to {e:.1f}s, {subj} {pred} {obj}"
                    for s, subj, pred, obj, e in lines
                )
            )
        else:
            blocks.append("nothing observed")
    return blocks
