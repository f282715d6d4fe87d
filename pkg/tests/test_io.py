from __future__ import annotations

import json

import numpy as np
import pytest

from sg4d import io
from sg4d.errors import ChecksumMismatch, MissingFile, SchemaViolation
from sg4d.geometry import CameraIntrinsics, RigidTransform
from sg4d.matching import FrameSegment
from sg4d.model import PointTube, SceneGraph4D, validate_scene_graph
from sg4d.relate import Rule, Rulebook
from sg4d.synthgen import generate_scene, random_recipe

from conftest import rect_rle, single_frame_graph


def small_manifest(vid: str, mode: str = io.MODE_RGBD) -> io.VideoManifest:
    return io.VideoManifest(
        vid, 16, 16, 4, 30.0, 1000.0, 20.0, mode,
        CameraIntrinsics(10.0, 10.0, 8.0, 8.0, 16, 16),
    )


class TestDatasetRoundTrip:
    def test_write_read_write_is_byte_identical(self, tmp_path, tiny_vocab):
        g = single_frame_graph(
            "vid0", tiny_vocab, {0: (0, 4, 0, 4), 1: (8, 12, 8, 12)},
            [(0, 1, 0, 0, 3, 1.0)],
        )
        root1 = tmp_path / "a"
        root2 = tmp_path / "b"
        io.write_dataset(root1, tiny_vocab, [(small_manifest("vid0"), g)])
        vocab, items = io.read_dataset(root1)
        assert vocab == tiny_vocab
        assert items[0][1] == g
        io.write_dataset(root2, vocab, items)
        for name in ("manifest.json",):
            assert (root1 / name).read_bytes() == (root2 / name).read_bytes()
        for name in ("video.json", "masks.json", "relations.json"):
            assert (root1 / "videos/vid0" / name).read_bytes() == (
                root2 / "videos/vid0" / name
            ).read_bytes()

    def test_roundtrip_preserves_violations(self, tmp_path, tiny_vocab):
        g = single_frame_graph(
            "vid0", tiny_vocab, {0: (0, 4, 0, 4)}, [(0, 99, 0, 0, 3, 1.0)]
        )
        before = validate_scene_graph(g, tiny_vocab)
        io.write_dataset(tmp_path, tiny_vocab, [(small_manifest("vid0"), g)])
        vocab, items = io.read_dataset(tmp_path)
        after = validate_scene_graph(items[0][1], vocab)
        assert before == after and [v.code for v in after] == ["UnresolvedEntity"]

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFile):
            io.read_dataset(tmp_path / "nope")

    def test_duplicate_predicate_name_rejected(self, tmp_path, tiny_vocab):
        io.write_dataset(tmp_path, tiny_vocab, [])
        mpath = tmp_path / "manifest.json"
        doc = json.loads(mpath.read_text())
        doc["vocabulary"]["predicates"] = [[0, "drink"], [1, "drink"]]
        mpath.write_text(json.dumps(doc))
        with pytest.raises(SchemaViolation):
            io.read_dataset(tmp_path)

    def test_checksum_mismatch(self, tmp_path, tiny_vocab):
        io.write_dataset(tmp_path, tiny_vocab, [])
        mpath = tmp_path / "manifest.json"
        doc = json.loads(mpath.read_text())
        doc["vocabulary_checksum"] = "0" * 64
        mpath.write_text(json.dumps(doc))
        with pytest.raises(ChecksumMismatch):
            io.read_dataset(tmp_path)

    def test_bad_rle_reported_with_path(self, tmp_path, tiny_vocab):
        g = single_frame_graph("vid0", tiny_vocab, {0: (0, 4, 0, 4)}, [])
        io.write_dataset(tmp_path, tiny_vocab, [(small_manifest("vid0"), g)])
        mpath = tmp_path / "videos/vid0/masks.json"
        doc = json.loads(mpath.read_text())
        doc["entities"][0]["masks"]["0"] = [3]
        mpath.write_text(json.dumps(doc))
        with pytest.raises(SchemaViolation) as err:
            io.read_dataset(tmp_path)
        assert "masks.json" in err.value.path

    def test_extrinsics_roundtrip(self, tmp_path, tiny_vocab):
        rng = np.random.default_rng(3)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        if np.linalg.det(q) < 0:
            q[:, 0] *= -1
        m = np.eye(4)
        m[:3, :3] = q
        m[:3, 3] = [1.0, 2.0, 3.0]
        vm = io.VideoManifest(
            "vid0", 16, 16, 2, 30.0, 1000.0, 20.0, io.MODE_RGBD,
            CameraIntrinsics(10.0, 10.0, 8.0, 8.0, 16, 16),
            {1: RigidTransform(m)},
        )
        g = single_frame_graph("vid0", tiny_vocab, {0: (0, 4, 0, 4)}, [])
        io.write_dataset(tmp_path, tiny_vocab, [(vm, g)])
        _, items = io.read_dataset(tmp_path)
        got = items[0][0]
        assert np.array_equal(got.extrinsics[1].matrix, m)
        assert np.array_equal(got.extrinsic_for(0).matrix, np.eye(4))


class TestFrameFiles:
    def test_depth_roundtrip_quantized(self, tmp_path):
        depth = np.array([[0.0, 1.2345], [20.0, 0.0015]])
        io.write_depth_frame(tmp_path, 3, depth, 1000.0)
        back = io.read_depth_frame(tmp_path, 3, 1000.0)
        assert np.abs(back - depth).max() <= 0.5 / 1000.0

    def test_rgb_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        rgb = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
        io.write_rgb_frame(tmp_path, 0, rgb)
        assert np.array_equal(io.read_rgb_frame(tmp_path, 0), rgb)

    def test_points_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        pts = rng.uniform(-5, 5, (37, 6)).astype(np.float32).astype(np.float64)
        io.write_points_frame(tmp_path, 0, pts)
        back = io.read_points_frame(tmp_path, 0)
        assert np.array_equal(back.points, pts)

    def test_missing_frame(self, tmp_path):
        with pytest.raises(MissingFile):
            io.read_depth_frame(tmp_path, 0, 1000.0)


class TestValidateDataset:
    def test_generated_dataset_validates(self, tmp_path):
        recipe = random_recipe(200, video_id="vid0")
        scene = generate_scene(recipe)
        vm = io.VideoManifest(
            "vid0", recipe.width, recipe.height, recipe.frame_count,
            recipe.fps, recipe.depth_scale, recipe.max_depth,
            io.MODE_RGBD, recipe.intrinsics,
        )
        io.write_dataset(tmp_path, recipe.vocabulary, [(vm, scene.graph)])
        for t in range(recipe.frame_count):
            io.write_depth_frame(tmp_path / "videos/vid0", t, scene.depth[t], recipe.depth_scale)
            io.write_rgb_frame(tmp_path / "videos/vid0", t, scene.rgb[t])
        assert io.validate_dataset(tmp_path) == []

    def test_missing_frame_file_reported(self, tmp_path, tiny_vocab):
        g = single_frame_graph("vid0", tiny_vocab, {0: (0, 4, 0, 4)}, [])
        io.write_dataset(tmp_path, tiny_vocab, [(small_manifest("vid0"), g)])
        rows = io.validate_dataset(tmp_path)
        assert [(vid, v.code) for vid, v in rows] == [("vid0", "MissingFrameFile")]

    def test_point_index_range_checked(self, tmp_path, tiny_vocab):
        tube = PointTube(0, {0: (0, 1, 99)})
        from sg4d.model import EntityNode

        g = SceneGraph4D("vid0", (EntityNode(0, 0, 1.0, tube),), (), tiny_vocab.checksum)
        io.write_dataset(
            tmp_path, tiny_vocab, [(small_manifest("vid0", io.MODE_POINTS), g)]
        )
        io.write_points_frame(tmp_path / "videos/vid0", 0, np.zeros((10, 6)))
        rows = io.validate_dataset(tmp_path)
        assert [(vid, v.code) for vid, v in rows] == [("vid0", "PointIndexRange")]


class TestPredictionsFile:
    def test_roundtrip(self, tmp_path, tiny_vocab):
        g = single_frame_graph(
            "vid0", tiny_vocab, {0: (0, 4, 0, 4), 1: (8, 12, 8, 12)},
            [(0, 1, 0, 0, 3, 0.75)],
        )
        path = tmp_path / "pred.json"
        io.write_predictions(path, tiny_vocab.checksum, [(small_manifest("vid0"), g)])
        back = io.read_predictions(path, tiny_vocab)
        assert back == {"vid0": g}

    def test_checksum_guard(self, tmp_path, tiny_vocab):
        g = single_frame_graph("vid0", tiny_vocab, {0: (0, 4, 0, 4)}, [])
        path = tmp_path / "pred.json"
        with pytest.raises(ChecksumMismatch):
            io.write_predictions(path, "f" * 64, [(small_manifest("vid0"), g)])
        io.write_predictions(path, tiny_vocab.checksum, [(small_manifest("vid0"), g)])
        doc = json.loads(path.read_text())
        doc["vocabulary_checksum"] = "f" * 64
        path.write_text(json.dumps(doc))
        with pytest.raises(ChecksumMismatch):
            io.read_predictions(path, tiny_vocab)


class TestSegmentsFile:
    def test_roundtrip(self, tmp_path):
        segs = (
            (
                FrameSegment(0, 1, 0.9, (1.0, 0.0), mask=rect_rle(8, 8, 0, 2, 0, 2)),
                FrameSegment(0, 2, 0.8, (0.0, 1.0), mask=rect_rle(8, 8, 4, 6, 4, 6)),
            ),
            (FrameSegment(1, 1, 0.7, (1.0, 0.1), mask=rect_rle(8, 8, 0, 2, 1, 3)),),
        )
        sf = io.SegmentsFile("vid0", "c" * 64, io.MODE_RGBD, 8, 8, segs)
        path = tmp_path / "segments.json"
        io.write_segments(path, sf)
        assert io.read_segments(path) == sf


class TestRulebookFile:
    def test_roundtrip_and_validation(self, tmp_path, tiny_vocab):
        rb = Rulebook((Rule(0, "near", 2.0, 2), Rule(1, "above", 1.0, 3)))
        path = tmp_path / "rules.json"
        io.write_json(path, io.rulebook_to_doc(rb))
        assert io.read_rulebook(path, tiny_vocab) == rb

    def test_unknown_predicate_rejected(self, tmp_path, tiny_vocab):
        path = tmp_path / "rules.json"
        io.write_json(
            path,
            {"rules": [{"predicate_id": 9, "kind": "near", "threshold": 1.0, "min_duration": 1}]},
        )
        with pytest.raises(SchemaViolation):
            io.read_rulebook(path, tiny_vocab)


class TestRecipeFile:
    def test_roundtrip_single_and_multi(self, tmp_path):
        recipes = [random_recipe(7, video_id="a"), random_recipe(8, video_id="b")]
        single = tmp_path / "one.json"
        multi = tmp_path / "many.json"
        io.write_recipes(single, recipes[:1])
        io.write_recipes(multi, recipes)
        assert io.read_recipes(single) == recipes[:1]
        assert io.read_recipes(multi) == recipes
