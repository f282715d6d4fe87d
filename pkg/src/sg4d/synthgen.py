"""Deterministic synthetic 4D scenes with an analytic recall oracle.

Scenes are axis-aligned boxes on scripted piecewise-linear paths,
rasterized through the same pinhole model the geometry module uses.
Ground truth tubes are the exact rasterization supports; ground-truth
triplets come from the rulebook applied to the scripted (not rasterized)
trajectories. Everything is byte-deterministic given the seed.

The perturbation engine degrades a ground-truth graph channel by channel
and simultaneously computes, with its own dense-grid bookkeeping, the
exact R@K / mR@K the evaluator must report for the perturbed predictions.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .errors import FrustumViolation
from .geometry import CameraIntrinsics
from .model import (
    EntityNode,
    FrameInterval,
    MaskTube,
    ObjectClass,
    PredicateClass,
    RelationTriplet,
    SceneGraph4D,
    Vocabulary,
)
from .overlap import rle_decode, rle_encode
from .relate import Rule, Rulebook

# Counter-based generator so any implementation can reproduce the streams:
# numpy's Philox4x64-10 keyed with (seed, stream).
RNG_ALGORITHM = "philox4x64-10"

_MORPH_STRUCTURE = np.ones((3, 3), dtype=bool)
_CONFIDENCE_MODES = ("oracle-descending", "uniform-random")


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Seeded, splittable generator; stream selects an independent channel."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ObjectSpec:
    """One scripted box: category, size (meters), waypoints (frame, x, y, z)."""

    category_id: int
    box_size: tuple[float, float, float]
    waypoints: tuple[tuple[int, float, float, float], ...]
    color: tuple[int, int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "box_size", tuple(float(s) for s in self.box_size))
        wps = tuple(
            (int(f), float(x), float(y), float(z)) for f, x, y, z in self.waypoints
        )
        object.__setattr__(self, "waypoints", wps)
        if not wps:
            raise ValueError("an object needs at least one waypoint")
        if any(s <= 0 for s in self.box_size):
            raise ValueError("box dimensions must be positive")
        if list(sorted(w[0] for w in wps)) != [w[0] for w in wps]:
            raise ValueError("waypoints must be sorted by frame")

    def position(self, frame: int) -> tuple[float, float, float]:
        """Piecewise-linear position, clamped at the first/last waypoint."""
        wps = self.waypoints
        if frame <= wps[0][0]:
            return wps[0][1:]
        if frame >= wps[-1][0]:
            return wps[-1][1:]
        for (f0, *p0), (f1, *p1) in zip(wps, wps[1:]):
            if f0 <= frame <= f1:
                a = (frame - f0) / (f1 - f0)
                return tuple(q0 + a * (q1 - q0) for q0, q1 in zip(p0, p1))
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class SceneRecipe:
    video_id: str
    seed: int
    frame_count: int
    height: int
    width: int
    intrinsics: CameraIntrinsics
    vocabulary: Vocabulary
    objects: tuple[ObjectSpec, ...]
    rulebook: Rulebook
    fps: float = 30.0
    depth_scale: float = 1000.0
    max_depth: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        if not self.objects:
            raise ValueError("a recipe needs at least one object")
        if (self.intrinsics.width, self.intrinsics.height) != (self.width, self.height):
            raise ValueError("intrinsics size differs from the image size")


@dataclass(frozen=True)
class NoiseConfig:
    """Controlled perturbation channels applied to a ground-truth graph."""

    mask_erode_dilate: int = 0
    label_flip_prob: float = 0.0
    interval_jitter: int = 0
    confidence_mode: str = "oracle-descending"
    drop_triplet_prob: float = 0.0

    def __post_init__(self):
        for p in (self.label_flip_prob, self.drop_triplet_prob):
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"probability {p} outside [0, 1]")
        if self.confidence_mode not in _CONFIDENCE_MODES:
            raise ValueError(f"unknown confidence_mode {self.confidence_mode!r}")


@dataclass(frozen=True)
class RecallOracle:
    """Expected metric values, computed without the evaluator."""

    recall: dict[int, float | None]
    mean_recall: dict[int, float | None]
    per_predicate: dict[int, dict[int, float]]


@dataclass(frozen=True, eq=False)
class GeneratedScene:
    depth: np.ndarray  # (T, H, W) float64 meters, 0 where no surface
    rgb: np.ndarray  # (T, H, W, 3) uint8
    graph: SceneGraph4D
    trajectories: dict[int, dict[int, tuple[float, float, float]]]


def object_color(index: int) -> tuple[int, int, int]:
    """Deterministic flat color for object ``index`` (golden-angle hues)."""
    hue = (index * 0.6180339887498949) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
    return (round(r * 255), round(g * 255), round(b * 255))


def _check_frustum(recipe: SceneRecipe, idx: int, frame: int, center, half):
    intr = recipe.intrinsics
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                x = center[0] + sx * half[0]
                y = center[1] + sy * half[1]
                z = center[2] + sz * half[2]
                if z <= 0 or z > recipe.max_depth:
                    raise FrustumViolation(
                        f"object {idx} frame {frame}: corner depth {z:.3f} outside (0, {recipe.max_depth}]"
                    )
                u = x / z * intr.fx + intr.cx
                v = y / z * intr.fy + intr.cy
                if not (0 <= u <= intr.width - 1 and 0 <= v <= intr.height - 1):
                    raise FrustumViolation(
                        f"object {idx} frame {frame}: corner projects to ({u:.1f}, {v:.1f})"
                    )


def _rasterize_frame(recipe: SceneRecipe, centers: list, halves: list):
    """Z-buffer all boxes into (depth, owner) for one frame."""
    h, w = recipe.height, recipe.width
    intr = recipe.intrinsics
    depth = np.full((h, w), np.inf)
    owner = np.full((h, w), -1, dtype=np.int64)
    for k, (c, hf) in enumerate(zip(centers, halves)):
        # Pixel window from the projected corners; borders already checked.
        us, vs = [], []
        for sx in (-1, 1):
            for sy in (-1, 1):
                for sz in (-1, 1):
                    z = c[2] + sz * hf[2]
                    us.append((c[0] + sx * hf[0]) / z * intr.fx + intr.cx)
                    vs.append((c[1] + sy * hf[1]) / z * intr.fy + intr.cy)
        u0, u1 = int(np.floor(min(us))), int(np.ceil(max(us)))
        v0, v1 = int(np.floor(min(vs))), int(np.ceil(max(vs)))
        u0, v0 = max(u0, 0), max(v0, 0)
        u1, v1 = min(u1, w - 1), min(v1, h - 1)
        if u0 > u1 or v0 > v1:
            continue
        uu, vv = np.meshgrid(np.arange(u0, u1 + 1), np.arange(v0, v1 + 1))
        dx = (uu - intr.cx) / intr.fx
        dy = (vv - intr.cy) / intr.fy
        t_near = np.full(dx.shape, c[2] - hf[2])
        t_far = np.full(dx.shape, c[2] + hf[2])
        for d, lo, hi in ((dx, c[0] - hf[0], c[0] + hf[0]), (dy, c[1] - hf[1], c[1] + hf[1])):
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = lo / d
                t2 = hi / d
            inside = (lo <= 0) & (0 <= hi)
            tmin = np.where(d != 0, np.minimum(t1, t2), np.where(inside, -np.inf, np.inf))
            tmax = np.where(d != 0, np.maximum(t1, t2), np.where(inside, np.inf, -np.inf))
            t_near = np.maximum(t_near, tmin)
            t_far = np.minimum(t_far, tmax)
        hit = (t_near <= t_far) & (t_near > 0)
        window_d = depth[v0 : v1 + 1, u0 : u1 + 1]
        window_o = owner[v0 : v1 + 1, u0 : u1 + 1]
        closer = hit & (t_near < window_d)
        window_d[closer] = t_near[closer]
        window_o[closer] = k
    return depth, owner


def _rule_hits(rule: Rule, pos_s, pos_o, half_s, half_o) -> tuple[bool, float]:
    if rule.kind == "near":
        d = math.dist(pos_s, pos_o)
        return d < rule.threshold, d
    if rule.kind == "above":
        horiz = math.hypot(pos_s[0] - pos_o[0], pos_s[1] - pos_o[1])
        return (pos_s[2] - pos_o[2] > rule.threshold) and horiz < rule.threshold, horiz
    # contact on scripted data: the exact boxes overlap (closed test)
    touch = all(
        abs(pos_s[a] - pos_o[a]) <= half_s[a] + half_o[a] for a in range(3)
    )
    return touch, 0.0


def _scripted_triplets(recipe: SceneRecipe) -> list[RelationTriplet]:
    halves = [tuple(s / 2 for s in o.box_size) for o in recipe.objects]
    out: list[RelationTriplet] = []
    for i, subj in enumerate(recipe.objects):
        for j, obj in enumerate(recipe.objects):
            if i == j:
                continue
            for rule in recipe.rulebook.rules:
                run_start = None
                for t in range(recipe.frame_count + 1):
                    hit = False
                    if t < recipe.frame_count:
                        hit, _ = _rule_hits(
                            rule, subj.position(t), obj.position(t), halves[i], halves[j]
                        )
                    if hit and run_start is None:
                        run_start = t
                    elif not hit and run_start is not None:
                        if t - run_start >= rule.min_duration:
                            out.append(
                                RelationTriplet(
                                    i, j, rule.predicate_id, FrameInterval(run_start, t), 1.0
                                )
                            )
                        run_start = None
    out.sort(key=lambda t: (t.subject_id, t.object_id, t.predicate_id, t.interval.start))
    return out


def generate_scene(recipe: SceneRecipe) -> GeneratedScene:
    """Rasterize a recipe into frames, ground truth, and oracle trajectories."""
    n = len(recipe.objects)
    halves = [tuple(s / 2 for s in o.box_size) for o in recipe.objects]
    colors = np.zeros((n + 1, 3), dtype=np.uint8)
    for k, o in enumerate(recipe.objects):
        colors[k + 1] = o.color if o.color is not None else object_color(k)

    trajectories: dict[int, dict[int, tuple[float, float, float]]] = {
        k: {} for k in range(n)
    }
    depth_frames = np.zeros((recipe.frame_count, recipe.height, recipe.width))
    rgb_frames = np.zeros((recipe.frame_count, recipe.height, recipe.width, 3), np.uint8)
    tubes: dict[int, dict[int, object]] = {k: {} for k in range(n)}

    for t in range(recipe.frame_count):
        centers = []
        for k, o in enumerate(recipe.objects):
            c = o.position(t)
            _check_frustum(recipe, k, t, c, halves[k])
            centers.append(c)
            trajectories[k][t] = c
        depth, owner = _rasterize_frame(recipe, centers, halves)
        depth_frames[t] = np.where(owner >= 0, depth, 0.0)
        rgb_frames[t] = colors[owner + 1]
        for k in range(n):
            mask = owner == k
            if mask.any():
                tubes[k][t] = rle_encode(mask)

    entities = []
    for k, o in enumerate(recipe.objects):
        if not tubes[k]:
            raise FrustumViolation(f"object {k} is never visible (fully occluded)")
        entities.append(
            EntityNode(
                k, o.category_id, 1.0, MaskTube(k, recipe.height, recipe.width, tubes[k])
            )
        )
    graph = SceneGraph4D(
        recipe.video_id,
        tuple(entities),
        tuple(_scripted_triplets(recipe)),
        recipe.vocabulary.checksum,
    )
    return GeneratedScene(depth_frames, rgb_frames, graph, trajectories)


def _morph_tube(
    tube: MaskTube, amount: int
) -> tuple[dict[int, np.ndarray], MaskTube]:
    """Erode (negative) or dilate (positive) every frame mask by |amount| px."""
    grids: dict[int, np.ndarray] = {}
    for f in sorted(tube.frames):
        arr = rle_decode(tube.frames[f])
        if amount > 0:
            arr = ndimage.binary_dilation(arr, _MORPH_STRUCTURE, iterations=amount)
        elif amount < 0:
            arr = ndimage.binary_erosion(arr, _MORPH_STRUCTURE, iterations=-amount)
        if arr.any():
            grids[f] = arr
    if not grids:
        # Erosion swallowed the tube; keep one pixel so the entity survives.
        first = min(tube.frames)
        arr = np.zeros((tube.height, tube.width), dtype=bool)
        r, c = np.argwhere(rle_decode(tube.frames[first]))[0]
        arr[r, c] = True
        grids[first] = arr
    new_tube = MaskTube(
        tube.entity_id, tube.height, tube.width, {f: rle_encode(a) for f, a in grids.items()}
    )
    return grids, new_tube


def _dense_viou_counts(
    a: Mapping[int, np.ndarray], b: Mapping[int, np.ndarray]
) -> tuple[int, int]:
    inter = 0
    for f in set(a) & set(b):
        inter += int(np.count_nonzero(a[f] & b[f]))
    total_a = sum(int(np.count_nonzero(g)) for g in a.values())
    total_b = sum(int(np.count_nonzero(g)) for g in b.values())
    return inter, total_a + total_b - inter


def _oracle_recalls(
    gt_cats: dict[int, int],
    gt_grids: dict[int, dict[int, np.ndarray]],
    gt_triplets: Sequence[RelationTriplet],
    pred_cats: dict[int, int],
    pred_grids: dict[int, dict[int, np.ndarray]],
    pred_triplets: Sequence[RelationTriplet],
    ks: Sequence[int],
    viou_threshold: float,
) -> RecallOracle:
    """Replay the recall protocol on dense boolean grids."""
    pair_ok: dict[tuple[int, int], bool] = {}

    def tubes_match(pe: int, ge: int) -> bool:
        key = (pe, ge)
        if key not in pair_ok:
            inter, union = _dense_viou_counts(pred_grids[pe], gt_grids[ge])
            pair_ok[key] = union > 0 and Fraction(inter, union) > Fraction(viou_threshold)
        return pair_ok[key]

    order = sorted(
        range(len(pred_triplets)), key=lambda i: (-pred_triplets[i].confidence, i)
    )
    recall: dict[int, float | None] = {}
    mean_recall: dict[int, float | None] = {}
    per_predicate: dict[int, dict[int, float]] = {}
    for k in ks:
        taken = [False] * len(gt_triplets)
        credits: list[tuple[int, float]] = []  # (gt index, credit)
        for pi in order[:k]:
            p = pred_triplets[pi]
            for gi, g in enumerate(gt_triplets):
                if taken[gi]:
                    continue
                if (
                    p.predicate_id != g.predicate_id
                    or pred_cats[p.subject_id] != gt_cats[g.subject_id]
                    or pred_cats[p.object_id] != gt_cats[g.object_id]
                ):
                    continue
                if not tubes_match(p.subject_id, g.subject_id):
                    continue
                if not tubes_match(p.object_id, g.object_id):
                    continue
                ov = max(0, min(p.interval.end, g.interval.end) - max(p.interval.start, g.interval.start))
                un = p.interval.length + g.interval.length - ov
                taken[gi] = True
                credits.append((gi, ov / un))
                break
        if not gt_triplets:
            recall[k] = None
            mean_recall[k] = None
            per_predicate[k] = {}
            continue
        recall[k] = math.fsum(c for _, c in credits) / len(gt_triplets)
        denom: dict[int, int] = {}
        for g in gt_triplets:
            denom[g.predicate_id] = denom.get(g.predicate_id, 0) + 1
        numer = {pid: 0.0 for pid in denom}
        for gi, c in credits:
            numer[gt_triplets[gi].predicate_id] += c
        per_pred = {pid: numer[pid] / denom[pid] for pid in sorted(denom)}
        per_predicate[k] = per_pred
        mean_recall[k] = math.fsum(per_pred.values()) / len(per_pred)
    return RecallOracle(recall, mean_recall, per_predicate)


def perturb_predictions(
    gt: SceneGraph4D,
    vocab: Vocabulary,
    noise: NoiseConfig,
    seed: int,
    ks: Sequence[int] = (20, 50, 100),
    viou_threshold: float = 0.5,
) -> tuple[SceneGraph4D, RecallOracle]:
    """Degrade a ground-truth graph into predictions plus the exact recall.

    Random draws consume one Philox stream in a fixed order: entity label
    flips (entity list order), then per-triplet drops, then per-surviving-
    triplet confidences. Mask morphology and interval jitter are
    deterministic. The returned oracle replays the metric rules on its own
    dense-grid bookkeeping and never calls the evaluator.
    """
    rng = stream_rng(seed, 0)
    n_obj = len(vocab.object_classes)

    pred_cats: dict[int, int] = {}
    for e in gt.entities:
        cat = e.category_id
        if noise.label_flip_prob > 0 and n_obj >= 2:
            if rng.random() < noise.label_flip_prob:
                others = [c for c in range(n_obj) if c != cat]
                cat = others[int(rng.integers(len(others)))]
        pred_cats[e.entity_id] = cat

    gt_grids: dict[int, dict[int, np.ndarray]] = {}
    pred_grids: dict[int, dict[int, np.ndarray]] = {}
    pred_entities = []
    for e in gt.entities:
        gt_grids[e.entity_id] = {
            f: rle_decode(m) for f, m in sorted(e.tube.frames.items())
        }
        grids, tube = _morph_tube(e.tube, noise.mask_erode_dilate)
        pred_grids[e.entity_id] = grids
        pred_entities.append(EntityNode(e.entity_id, pred_cats[e.entity_id], 1.0, tube))

    survivors: list[RelationTriplet] = []
    for t in gt.triplets:
        if noise.drop_triplet_prob > 0 and rng.random() < noise.drop_triplet_prob:
            continue
        start, end = t.interval.start, t.interval.end
        j = noise.interval_jitter
        if j < 0:
            end = max(start + 1, end + j)
        elif j > 0:
            start, end = start + j, end + j
        survivors.append(
            RelationTriplet(t.subject_id, t.object_id, t.predicate_id, FrameInterval(start, end), 1.0)
        )

    n = len(survivors)
    if noise.confidence_mode == "oracle-descending":
        confs = [(n - i) / n for i in range(n)]
    else:
        confs = [float(rng.random()) for _ in range(n)]
    pred_triplets = tuple(
        RelationTriplet(t.subject_id, t.object_id, t.predicate_id, t.interval, c)
        for t, c in zip(survivors, confs)
    )

    pred = SceneGraph4D(gt.video_id, tuple(pred_entities), pred_triplets, gt.vocabulary_ref)
    gt_cats = {e.entity_id: e.category_id for e in gt.entities}
    oracle = _oracle_recalls(
        gt_cats, gt_grids, gt.triplets, pred_cats, pred_grids, pred_triplets, ks, viou_threshold
    )
    return pred, oracle


def default_vocabulary() -> Vocabulary:
    """Small fixed vocabulary used by the bundled recipes."""
    return Vocabulary(
        (
            ObjectClass(0, "person", True),
            ObjectClass(1, "cup", True),
            ObjectClass(2, "table", True),
            ObjectClass(3, "ball", True),
            ObjectClass(4, "floor", False),
        ),
        (
            PredicateClass(0, "near"),
            PredicateClass(1, "behind"),
            PredicateClass(2, "touching"),
        ),
    )


def random_recipe(seed: int, video_id: str | None = None) -> SceneRecipe:
    """Deterministic random recipe guaranteed to produce relation triplets."""
    rng = stream_rng(seed, 2)
    vocab = default_vocabulary()
    width, height = 96, 72
    intr = CameraIntrinsics(110.0, 110.0, 48.0, 36.0, width, height)
    frame_count = int(rng.integers(12, 25))
    n_objects = int(rng.integers(3, 6))

    def waypoint_frames():
        return (0, frame_count // 2, frame_count - 1)

    def random_point():
        return (
            float(rng.uniform(-0.7, 0.7)),
            float(rng.uniform(-0.4, 0.4)),
            float(rng.uniform(3.5, 5.5)),
        )

    objects = []
    anchor = [random_point() for _ in waypoint_frames()]
    for k in range(n_objects):
        size = tuple(float(rng.uniform(0.3, 0.5)) for _ in range(3))
        if k == 1:
            # keep object 1 inside the near-rule radius of object 0
            offset = (
                float(rng.uniform(-0.35, 0.35)),
                float(rng.uniform(-0.25, 0.25)),
                float(rng.uniform(-0.4, 0.4)),
            )
            points = [tuple(a + o for a, o in zip(p, offset)) for p in anchor]
        elif k == 0:
            points = anchor
        else:
            points = [random_point() for _ in waypoint_frames()]
        category = int(rng.integers(len(vocab.object_classes)))
        objects.append(
            ObjectSpec(
                category,
                size,
                tuple((f, *p) for f, p in zip(waypoint_frames(), points)),
            )
        )

    rulebook = Rulebook(
        (
            Rule(0, "near", 2.0, 2),
            Rule(1, "above", 1.0, 2),
        )
    )
    return SceneRecipe(
        video_id or f"synth-{seed:08d}",
        seed,
        frame_count,
        height,
        width,
        intr,
        vocab,
        tuple(objects),
        rulebook,
    )


def random_noise(seed: int) -> NoiseConfig:
    """Deterministic random perturbation settings at mild magnitudes."""
    rng = stream_rng(seed, 3)
    return NoiseConfig(
        mask_erode_dilate=int(rng.integers(-1, 2)),
        label_flip_prob=float([0.0, 0.2, 0.5][int(rng.integers(3))]),
        interval_jitter=int(rng.integers(-2, 3)),
        confidence_mode=_CONFIDENCE_MODES[int(rng.integers(2))],
        drop_triplet_prob=float([0.0, 0.25][int(rng.integers(2))]),
    )
