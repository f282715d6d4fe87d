from __future__ import annotations

import pytest

from sg4d.errors import DuplicateVideoId, NoGroundTruth, VocabularyMismatch
from sg4d.metrics import evaluate_dataset, mean_recall_at_k, recall_at_k
from sg4d.model import FrameInterval, RelationTriplet, SceneGraph4D
from sg4d.synthgen import (
    NoiseConfig,
    generate_scene,
    perturb_predictions,
    random_noise,
    random_recipe,
)

from conftest import single_frame_graph


class TestRecallAtK:
    def test_identical_predictions(self, tiny_vocab):
        gt = single_frame_graph(
            "v",
            tiny_vocab,
            {0: (0, 4, 0, 4), 1: (8, 12, 8, 12)},
            [(0, 1, 0, 0, 10, 1.0), (1, 0, 1, 2, 6, 1.0)],
            categories={0: 0, 1: 1},
        )
        recall, per_pred, matched = recall_at_k(gt, gt, k=20)
        assert recall == 1.0
        assert per_pred == {0: 1.0, 1: 1.0}
        assert len(matched) == 2

    def test_soft_span_credit(self, tiny_vocab):
        gt = single_frame_graph(
            "v", tiny_vocab, {0: (0, 8, 0, 8), 1: (10, 14, 10, 14)},
            [(0, 1, 0, 0, 10, 1.0)], categories={0: 0, 1: 1},
        )
        # correct labels, tubes iou 1.0, interval [0,8) vs [0,10)
        pred = single_frame_graph(
            "v", tiny_vocab, {0: (0, 8, 0, 8), 1: (10, 14, 10, 14)},
            [(0, 1, 0, 0, 8, 0.9)], categories={0: 0, 1: 1},
        )
        recall, per_pred, matched = recall_at_k(pred, gt, k=20)
        assert recall == 8 / 10
        assert matched == [(0, 0, 0.8)]

    def test_exact_half_viou_not_credited(self, tiny_vocab):
        gt = single_frame_graph(
            "v", tiny_vocab, {0: (0, 2, 0, 2), 1: (8, 12, 8, 12)},
            [(0, 1, 0, 0, 10, 1.0)],
        )
        # pred subject tube covers half the gt subject pixels: vIOU = 1/2
        pred = single_frame_graph(
            "v", tiny_vocab, {0: (0, 1, 0, 2), 1: (8, 12, 8, 12)},
            [(0, 1, 0, 0, 10, 0.9)],
        )
        recall, _, matched = recall_at_k(pred, gt, k=20)
        assert recall == 0.0 and matched == []

    def test_no_gt_reported_absent(self, tiny_vocab):
        gt = single_frame_graph("v", tiny_vocab, {0: (0, 2, 0, 2)}, [])
        pred = single_frame_graph("v", tiny_vocab, {0: (0, 2, 0, 2)}, [])
        recall, per_pred, matched = recall_at_k(pred, gt, k=20)
        assert recall is None and per_pred == {} and matched == []

    def test_vocabulary_mismatch(self, tiny_vocab):
        gt = single_frame_graph("v", tiny_vocab, {0: (0, 2, 0, 2)}, [])
        pred = SceneGraph4D("v", gt.entities, (), "other-checksum")
        with pytest.raises(VocabularyMismatch):
            recall_at_k(pred, gt, k=20)

    def test_k_must_be_positive(self, tiny_vocab):
        gt = single_frame_graph("v", tiny_vocab, {0: (0, 2, 0, 2)}, [])
        with pytest.raises(ValueError):
            recall_at_k(gt, gt, k=0)

    def test_monotone_in_k(self):
        recipe = random_recipe(77)
        scene = generate_scene(recipe)
        pred, _ = perturb_predictions(
            scene.graph, recipe.vocabulary, random_noise(77), 77
        )
        prev = 0.0
        for k in (1, 2, 3, 5, 8, 13, 21, 100):
            recall, _, _ = recall_at_k(pred, scene.graph, k)
            assert recall >= prev - 1e-12
            prev = recall

    def test_permutation_of_distinct_confidences_is_invariant(self, tiny_vocab):
        gt = single_frame_graph(
            "v", tiny_vocab,
            {0: (0, 4, 0, 4), 1: (8, 12, 8, 12), 2: (0, 4, 8, 12)},
            [(0, 1, 0, 0, 10, 1.0), (2, 1, 1, 0, 6, 1.0), (1, 2, 1, 3, 9, 1.0)],
            categories={0: 0, 1: 1, 2: 2},
        )
        trips = [
            RelationTriplet(0, 1, 0, FrameInterval(0, 9), 0.9),
            RelationTriplet(2, 1, 1, FrameInterval(0, 5), 0.8),
            RelationTriplet(1, 2, 1, FrameInterval(3, 8), 0.7),
        ]
        base = SceneGraph4D("v", gt.entities, tuple(trips), tiny_vocab.checksum)
        shuffled = SceneGraph4D("v", gt.entities, tuple(reversed(trips)), tiny_vocab.checksum)
        ra, pa, ma = recall_at_k(base, gt, 20)
        rb, pb, mb = recall_at_k(shuffled, gt, 20)
        assert ra == rb and pa == pb
        assert sorted((g, c) for g, _, c in ma) == sorted((g, c) for g, _, c in mb)

    def test_matching_one_to_one(self, tiny_vocab):
        gt = single_frame_graph(
            "v", tiny_vocab, {0: (0, 4, 0, 4), 1: (8, 12, 8, 12)},
            [(0, 1, 0, 0, 10, 1.0)],
        )
        # two identical predictions compete for one gt triplet
        pred = single_frame_graph(
            "v", tiny_vocab, {0: (0, 4, 0, 4), 1: (8, 12, 8, 12)},
            [(0, 1, 0, 0, 10, 0.9), (0, 1, 0, 0, 10, 0.8)],
        )
        recall, _, matched = recall_at_k(pred, gt, k=20)
        assert recall == 1.0
        assert len(matched) == 1
        gt_indices = [g for g, _, _ in matched]
        assert len(set(gt_indices)) == len(gt_indices)

    def test_point_mode_graphs(self, tiny_vocab):
        from sg4d.model import EntityNode, PointTube

        def graph(subj_points, interval, conf):
            ents = (
                EntityNode(0, 0, 1.0, PointTube(0, {0: subj_points, 1: subj_points})),
                EntityNode(1, 1, 1.0, PointTube(1, {0: (90, 91, 92)})),
            )
            trips = (RelationTriplet(0, 1, 0, FrameInterval(*interval), conf),)
            return SceneGraph4D("v", ents, trips, tiny_vocab.checksum)

        gt = graph((0, 1, 2, 3), (0, 10), 1.0)
        pred_good = graph((0, 1, 2), (0, 10), 0.9)  # iou 3/4 per frame
        recall, _, _ = recall_at_k(pred_good, gt, 20)
        assert recall == 1.0
        pred_half = graph((0, 1, 8, 9), (0, 10), 0.9)  # iou 2/6 per frame
        recall, _, _ = recall_at_k(pred_half, gt, 20)
        assert recall == 0.0

    def test_credits_within_unit_interval(self):
        for seed in range(5):
            recipe = random_recipe(seed)
            scene = generate_scene(recipe)
            pred, _ = perturb_predictions(
                scene.graph, recipe.vocabulary, random_noise(seed), seed
            )
            _, _, matched = recall_at_k(pred, scene.graph, 100)
            assert all(0.0 <= c <= 1.0 for _, _, c in matched)


class TestMeanRecall:
    def test_two_predicates(self):
        assert mean_recall_at_k({0: 1.0, 1: 0.0}) == 0.5

    def test_single_predicate(self):
        assert mean_recall_at_k({1: 0.37}) == 0.37

    def test_three_predicates(self):
        assert mean_recall_at_k({0: 0.9, 1: 0.6, 2: 0.3}) == pytest.approx(0.6)

    def test_no_ground_truth(self):
        with pytest.raises(NoGroundTruth):
            mean_recall_at_k({})


class TestEvaluateDataset:
    def _pair(self, vocab, vid, credit):
        gt = single_frame_graph(
            vid, vocab, {0: (0, 4, 0, 4), 1: (8, 12, 8, 12)}, [(0, 1, 0, 0, 10, 1.0)]
        )
        if credit == 1.0:
            return gt, gt
        pred = SceneGraph4D(vid, gt.entities, (), vocab.checksum)
        return pred, gt

    def test_macro_average(self, tiny_vocab):
        pairs = [
            self._pair(tiny_vocab, "a", 1.0),
            self._pair(tiny_vocab, "b", 0.0),
        ]
        report = evaluate_dataset(pairs, ks=(20,))
        assert report.dataset[20].recall == 0.5

    def test_single_video_equals_video_figures(self, tiny_vocab):
        pairs = [self._pair(tiny_vocab, "a", 1.0)]
        report = evaluate_dataset(pairs, ks=(20, 50))
        for k in (20, 50):
            assert report.dataset[k].recall == report.per_video["a"][k].recall
            assert report.dataset[k].mean_recall == report.per_video["a"][k].mean_recall

    def test_noise_free_suite_is_perfect(self):
        pairs = []
        for i in range(10):
            recipe = random_recipe(500 + i, video_id=f"v{i:02d}")
            scene = generate_scene(recipe)
            pred, _ = perturb_predictions(
                scene.graph, recipe.vocabulary, NoiseConfig(), 500 + i
            )
            pairs.append((pred, scene.graph))
        max_triplets = max(len(gt.triplets) for _, gt in pairs)
        ks = (max_triplets, max_triplets + 50)
        report = evaluate_dataset(pairs, ks=ks)
        for k in ks:
            assert report.dataset[k].recall == pytest.approx(1.0)
            assert report.dataset[k].mean_recall == pytest.approx(1.0)

    def test_duplicate_video_id(self, tiny_vocab):
        p = self._pair(tiny_vocab, "a", 1.0)
        with pytest.raises(DuplicateVideoId):
            evaluate_dataset([p, p], ks=(20,))

    def test_empty_gt_video_excluded_from_means(self, tiny_vocab):
        full = self._pair(tiny_vocab, "a", 1.0)
        empty_gt = single_frame_graph("b", tiny_vocab, {0: (0, 2, 0, 2)}, [])
        report = evaluate_dataset([full, (empty_gt, empty_gt)], ks=(20,))
        assert report.dataset[20].recall == 1.0
        assert report.per_video["b"][20].recall is None

    def test_jobs_do_not_change_results(self):
        pairs = []
        for i in range(6):
            recipe = random_recipe(700 + i, video_id=f"v{i:02d}")
            scene = generate_scene(recipe)
            pred, _ = perturb_predictions(
                scene.graph, recipe.vocabulary, random_noise(i), i
            )
            pairs.append((pred, scene.graph))
        a = evaluate_dataset(pairs, ks=(20, 50), jobs=1)
        b = evaluate_dataset(pairs, ks=(20, 50), jobs=8)
        assert a == b

    def test_recall_at_k_consistent_with_dataset_slices(self):
        recipe = random_recipe(900)
        scene = generate_scene(recipe)
        pred, _ = perturb_predictions(
            scene.graph, recipe.vocabulary, random_noise(900), 900
        )
        report = evaluate_dataset([(pred, scene.graph)], ks=(5, 20, 100))
        for k in (5, 20, 100):
            recall, per_pred, matched = recall_at_k(pred, scene.graph, k)
            s = report.per_video[scene.graph.video_id][k]
            assert recall == s.recall
            assert per_pred == s.per_predicate_recall
            assert matched == s.matched
