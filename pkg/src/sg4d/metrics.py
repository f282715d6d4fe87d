"""Triplet recall evaluation: soft-scored R@K and mR@K.

A prediction credits a ground-truth triplet when (1) subject, object and
predicate category labels all match and (2) both tube volume IoUs strictly
exceed the threshold; the credit recorded is the span IoU of the two time
intervals. Matching is greedy in confidence order and one-to-one.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from .errors import DuplicateVideoId, NoGroundTruth, VocabularyMismatch
from .model import SceneGraph4D
from .overlap import flat_viou_counts, span_iou, tube_to_intervals, viou_exceeds

JOBS_ENV_VAR = "SG4D_JOBS"


class TripletMatch(NamedTuple):
    rank: int  # 0-based position in the confidence-ranked prediction list
    pred_index: int
    gt_index: int
    credit: float


class _PairCache:
    """Memoizes flattened tubes and pairwise vIOU counts for one video."""

    def __init__(self, pred: SceneGraph4D, gt: SceneGraph4D):
        self._pred = pred
        self._gt = gt
        self._flat: dict[tuple[str, int], object] = {}
        self._counts: dict[tuple[int, int], tuple[int, int]] = {}

    def _flattened(self, side: str, graph: SceneGraph4D, eid: int):
        key = (side, eid)
        if key not in self._flat:
            self._flat[key] = tube_to_intervals(graph.entities_by_id[eid].tube)
        return self._flat[key]

    def exceeds(self, pred_eid: int, gt_eid: int, threshold: float) -> bool:
        key = (pred_eid, gt_eid)
        if key not in self._counts:
            self._counts[key] = flat_viou_counts(
                self._flattened("p", self._pred, pred_eid),
                self._flattened("g", self._gt, gt_eid),
            )
        inter, union = self._counts[key]
        return viou_exceeds(inter, union, threshold)


def match_triplets(
    pred: SceneGraph4D, gt: SceneGraph4D, k: int, viou_threshold: float = 0.5
) -> list[TripletMatch]:
    """Greedy one-to-one matching of the top-k predictions against GT.

    Predictions are ranked by confidence descending (ties keep input
    order); each is matched to the first unmatched GT triplet, scanned in
    input order, that passes the label and strict tube-vIOU criteria.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if pred.vocabulary_ref != gt.vocabulary_ref:
        raise VocabularyMismatch(
            f"{pred.video_id}: prediction and ground truth use different vocabularies"
        )
    order = sorted(
        range(len(pred.triplets)), key=lambda i: (-pred.triplets[i].confidence, i)
    )
    cache = _PairCache(pred, gt)
    pred_ents = pred.entities_by_id
    gt_ents = gt.entities_by_id
    taken = [False] * len(gt.triplets)
    matches: list[TripletMatch] = []
    for rank, pi in enumerate(order[:k]):
        p = pred.triplets[pi]
        p_subj = pred_ents[p.subject_id]
        p_obj = pred_ents[p.object_id]
        for gi, g in enumerate(gt.triplets):
            if taken[gi]:
                continue
            g_subj = gt_ents[g.subject_id]
            g_obj = gt_ents[g.object_id]
            if (
                p.predicate_id != g.predicate_id
                or p_subj.category_id != g_subj.category_id
                or p_obj.category_id != g_obj.category_id
            ):
                continue
            if not cache.exceeds(p.subject_id, g.subject_id, viou_threshold):
                continue
            if not cache.exceeds(p.object_id, g.object_id, viou_threshold):
                continue
            taken[gi] = True
            matches.append(TripletMatch(rank, pi, gi, span_iou(p.interval, g.interval)))
            break
    return matches


def _per_predicate(
    gt: SceneGraph4D, matches: Sequence[TripletMatch]
) -> dict[int, float]:
    denom: dict[int, int] = {}
    for g in gt.triplets:
        denom[g.predicate_id] = denom.get(g.predicate_id, 0) + 1
    numer: dict[int, list[float]] = {pid: [] for pid in denom}
    for m in matches:
        numer[gt.triplets[m.gt_index].predicate_id].append(m.credit)
    return {pid: math.fsum(numer[pid]) / denom[pid] for pid in sorted(denom)}


def recall_at_k(
    pred: SceneGraph4D, gt: SceneGraph4D, k: int, viou_threshold: float = 0.5
) -> tuple[float | None, dict[int, float], list[tuple[int, int, float]]]:
    """R@K for one video: (recall, per-predicate recall, matched list).

    Recall is the sum of span-IoU credits over |GT|; with no GT triplets it
    is undefined and reported as None. The matched list holds
    (gt index, pred index, credit) in match order.
    """
    matches = match_triplets(pred, gt, k, viou_threshold)
    if not gt.triplets:
        return None, {}, []
    recall = math.fsum(m.credit for m in matches) / len(gt.triplets)
    matched = [(m.gt_index, m.pred_index, m.credit) for m in matches]
    return recall, _per_predicate(gt, matches), matched


def mean_recall_at_k(per_predicate_recall: Mapping[int, float]) -> float:
    """Unweighted mean over the predicate classes present in ground truth."""
    if not per_predicate_recall:
        raise NoGroundTruth("no predicate occurs in the ground truth")
    pids = sorted(per_predicate_recall)
    return math.fsum(per_predicate_recall[p] for p in pids) / len(pids)


@dataclass(frozen=True)
class RecallSlice:
    """Metrics at one K: dataset level or one video."""

    recall: float | None
    mean_recall: float | None
    per_predicate_recall: dict[int, float]
    matched: list[tuple]


@dataclass(frozen=True)
class EvaluationReport:
    ks: tuple[int, ...]
    viou_threshold: float
    dataset: dict[int, RecallSlice]
    per_video: dict[str, dict[int, RecallSlice]] = field(default_factory=dict)


def _resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        jobs = int(os.environ.get(JOBS_ENV_VAR, "1"))
    return max(1, jobs)


def _evaluate_video(
    pred: SceneGraph4D, gt: SceneGraph4D, ks: Sequence[int], viou_threshold: float
) -> dict[int, RecallSlice]:
    # One pass at max(ks) suffices: greedy decisions of the first k ranked
    # predictions never depend on later ones, so the top-k matching is a
    # rank-filtered prefix of the top-max(ks) matching.
    all_matches = match_triplets(pred, gt, max(ks), viou_threshold)
    out: dict[int, RecallSlice] = {}
    for k in ks:
        matches = [m for m in all_matches if m.rank < k]
        if not gt.triplets:
            out[k] = RecallSlice(None, None, {}, [])
            continue
        recall = math.fsum(m.credit for m in matches) / len(gt.triplets)
        per_pred = _per_predicate(gt, matches)
        out[k] = RecallSlice(
            recall,
            mean_recall_at_k(per_pred),
            per_pred,
            [(m.gt_index, m.pred_index, m.credit) for m in matches],
        )
    return out


def evaluate_dataset(
    pairs: Sequence[tuple[SceneGraph4D, SceneGraph4D]],
    ks: Sequence[int] = (20, 50, 100),
    viou_threshold: float = 0.5,
    jobs: int | None = None,
) -> EvaluationReport:
    """Evaluate (prediction, ground truth) graph pairs over all videos.

    Dataset figures are unweighted means over the videos whose ground
    truth is non-empty; per-predicate means run over the videos where the
    predicate occurs. ``jobs`` defaults to the SG4D_JOBS environment
    variable; results are identical at any parallelism degree.
    """
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] < 1:
        raise ValueError("ks must be positive integers")
    seen_ids = set()
    for pred, gt in pairs:
        if pred.video_id != gt.video_id:
            raise ValueError(f"pair mismatch: {pred.video_id!r} vs {gt.video_id!r}")
        if gt.video_id in seen_ids:
            raise DuplicateVideoId(gt.video_id)
        seen_ids.add(gt.video_id)

    jobs = _resolve_jobs(jobs)
    by_video: dict[str, dict[int, RecallSlice]] = {}
    if jobs > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {
                gt.video_id: pool.submit(_evaluate_video, pred, gt, ks, viou_threshold)
                for pred, gt in pairs
            }
            by_video = {vid: f.result() for vid, f in futures.items()}
    else:
        by_video = {
            gt.video_id: _evaluate_video(pred, gt, ks, viou_threshold)
            for pred, gt in pairs
        }

    video_ids = sorted(by_video)
    dataset: dict[int, RecallSlice] = {}
    for k in ks:
        recalls = [
            by_video[v][k].recall for v in video_ids if by_video[v][k].recall is not None
        ]
        means = [
            by_video[v][k].mean_recall
            for v in video_ids
            if by_video[v][k].mean_recall is not None
        ]
        per_pred_values: dict[int, list[float]] = {}
        for v in video_ids:
            for pid, r in by_video[v][k].per_predicate_recall.items():
                per_pred_values.setdefault(pid, []).append(r)
        matched = [
            (v, gi, pi, credit)
            for v in video_ids
            for gi, pi, credit in by_video[v][k].matched
        ]
        dataset[k] = RecallSlice(
            math.fsum(recalls) / len(recalls) if recalls else None,
            math.fsum(means) / len(means) if means else None,
            {
                pid: math.fsum(vals) / len(vals)
                for pid, vals in sorted(per_pred_values.items())
            },
            matched,
        )
    return EvaluationReport(ks, viou_threshold, dataset, {v: by_video[v] for v in video_ids})
