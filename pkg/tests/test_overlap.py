from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sg4d.errors import KindMismatch, MalformedRle, ShapeMismatch
from sg4d.model import FrameInterval, MaskTube, PointTube
from sg4d.overlap import (
    RleMask,
    frame_iou,
    rle_decode,
    rle_encode,
    span_iou,
    volume_iou,
    volume_iou_counts,
    volume_iou_exceeds,
)

from conftest import random_mask_tube


def bitmaps(max_h=6, max_w=6):
    return st.integers(1, max_h).flatmap(
        lambda h: st.integers(1, max_w).flatmap(
            lambda w: st.lists(st.booleans(), min_size=h * w, max_size=h * w).map(
                lambda bits: np.array(bits, dtype=bool).reshape(h, w)
            )
        )
    )


class TestRleCodec:
    def test_all_zeros(self):
        assert rle_encode(np.zeros((2, 2), bool)).runs == (4,)

    def test_all_ones(self):
        assert rle_encode(np.ones((2, 2), bool)).runs == (0, 4)

    @given(bitmaps())
    def test_roundtrip(self, bitmap):
        assert (rle_decode(rle_encode(bitmap)) == bitmap).all()

    def test_roundtrip_random_large(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            b = rng.random((17, 23)) < rng.uniform(0.05, 0.95)
            assert (rle_decode(rle_encode(b)) == b).all()

    def test_canonical_no_internal_zeros(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            m = rle_encode(rng.random((9, 9)) < 0.5)
            assert all(r > 0 for r in m.runs[1:])

    def test_bad_run_sum(self):
        with pytest.raises(MalformedRle):
            RleMask(2, 2, (3,))

    def test_internal_zero_run(self):
        with pytest.raises(MalformedRle):
            RleMask(2, 2, (1, 0, 3))

    def test_empty_runs(self):
        with pytest.raises(MalformedRle):
            RleMask(2, 2, ())


class TestFrameIoU:
    def test_identical(self):
        m = rle_encode(np.eye(4, dtype=bool))
        assert frame_iou(m, m) == (1.0, 4, 4)

    def test_disjoint(self):
        a = np.zeros((4, 4), bool)
        b = np.zeros((4, 4), bool)
        a[0, 0] = True
        b[3, 3] = True
        iou, inter, union = frame_iou(rle_encode(a), rle_encode(b))
        assert (iou, inter) == (0.0, 0)

    def test_overlapping_blocks(self):
        # 2x2 block at (0,0) vs 2x2 block at (0,1) in a 4x4 grid
        a = np.zeros((4, 4), bool)
        b = np.zeros((4, 4), bool)
        a[0:2, 0:2] = True
        b[0:2, 1:3] = True
        iou, inter, union = frame_iou(rle_encode(a), rle_encode(b))
        assert (inter, union) == (2, 6)
        assert iou == 1 / 3

    def test_both_empty_is_zero(self):
        m = rle_encode(np.zeros((3, 3), bool))
        assert frame_iou(m, m) == (0.0, 0, 0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            frame_iou(rle_encode(np.ones((2, 2), bool)), rle_encode(np.ones((2, 3), bool)))

    @given(bitmaps(), bitmaps())
    @settings(max_examples=150)
    def test_matches_bitmap_iou(self, a, b):
        if a.shape != b.shape:
            return
        _, inter, union = frame_iou(rle_encode(a), rle_encode(b))
        assert inter == int((a & b).sum())
        assert union == int((a | b).sum())

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            a = rle_encode(rng.random((8, 8)) < 0.4)
            b = rle_encode(rng.random((8, 8)) < 0.4)
            ab, ba = frame_iou(a, b), frame_iou(b, a)
            assert ab == ba
            assert 0.0 <= ab.iou <= 1.0

    def test_intersection_monotone_under_pixel_add(self):
        rng = np.random.default_rng(14)
        for _ in range(50):
            a = rng.random((6, 6)) < 0.4
            b = rng.random((6, 6)) < 0.4
            zeros = np.argwhere(~a)
            if len(zeros) == 0:
                continue
            before = frame_iou(rle_encode(a), rle_encode(b)).intersection
            r, c = zeros[rng.integers(len(zeros))]
            a2 = a.copy()
            a2[r, c] = True
            after = frame_iou(rle_encode(a2), rle_encode(b)).intersection
            assert after >= before


def dense_tube_counts(a: MaskTube, b: MaskTube) -> tuple[int, int]:
    """Independent oracle: brute-force dense boolean grids."""
    frames = sorted(set(a.frames) | set(b.frames))
    inter = union = 0
    for f in frames:
        ga = rle_decode(a.frames[f]) if f in a.frames else np.zeros((a.height, a.width), bool)
        gb = rle_decode(b.frames[f]) if f in b.frames else np.zeros((b.height, b.width), bool)
        inter += int((ga & gb).sum())
        union += int((ga | gb).sum())
    return inter, union


class TestVolumeIoU:
    def test_identical_tubes(self, ):
        rng = np.random.default_rng(15)
        t = random_mask_tube(rng, 0)
        assert volume_iou(t, t) == 1.0

    def test_missing_frame_counts_as_empty(self):
        m = rle_encode(np.pad(np.ones((2, 2), bool), ((0, 2), (0, 2))))
        a = MaskTube(0, 4, 4, {0: m, 1: m})
        b = MaskTube(1, 4, 4, {0: m})
        assert volume_iou_counts(a, b) == (4, 8)
        assert volume_iou(a, b) == 0.5

    def test_random_tubes_match_dense_oracle(self):
        rng = np.random.default_rng(16)
        for _ in range(60):
            a = random_mask_tube(rng, 0)
            b = random_mask_tube(rng, 1)
            assert volume_iou_counts(a, b) == dense_tube_counts(a, b)

    def test_single_frame_equals_frame_iou(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            ma = rle_encode(rng.random((8, 8)) < 0.5)
            mb = rle_encode(rng.random((8, 8)) < 0.5)
            _, inter, union = frame_iou(ma, mb)
            a = MaskTube(0, 8, 8, {3: ma})
            b = MaskTube(1, 8, 8, {3: mb})
            assert volume_iou_counts(a, b) == (inter, union)

    def test_point_mode(self):
        a = PointTube(0, {0: (0, 1, 2), 1: (5, 6)})
        b = PointTube(1, {0: (2, 3), 2: (9,)})
        # frame 0: inter {2}; unions: 4 + 2(frame1) + 1(frame2)
        assert volume_iou_counts(a, b) == (1, 7)

    def test_kind_mismatch(self):
        t = MaskTube(0, 4, 4, {0: rle_encode(np.ones((4, 4), bool))})
        p = PointTube(1, {0: (0,)})
        with pytest.raises(KindMismatch):
            volume_iou(t, p)

    def test_shape_mismatch(self):
        a = MaskTube(0, 4, 4, {0: rle_encode(np.ones((4, 4), bool))})
        b = MaskTube(1, 5, 4, {0: rle_encode(np.ones((5, 4), bool))})
        with pytest.raises(ShapeMismatch):
            volume_iou(a, b)

    def test_both_empty_is_zero(self):
        a = MaskTube(0, 4, 4, {})
        assert volume_iou(a, a) == 0.0

    def test_exceeds_is_strict(self):
        m4 = rle_encode(np.pad(np.ones((2, 2), bool), ((0, 2), (0, 2))))
        m2 = rle_encode(np.pad(np.ones((1, 2), bool), ((0, 3), (0, 2))))
        a = MaskTube(0, 4, 4, {0: m4})
        b = MaskTube(1, 4, 4, {0: m2})
        assert volume_iou_counts(a, b) == (2, 4)
        assert not volume_iou_exceeds(a, b, 0.5)
        assert volume_iou_exceeds(a, b, 0.49999999999)


class TestSpanIoU:
    def test_identical(self):
        assert span_iou(FrameInterval(3, 9), FrameInterval(3, 9)) == 1.0

    def test_disjoint(self):
        assert span_iou(FrameInterval(0, 5), FrameInterval(5, 10)) == 0.0

    def test_partial(self):
        assert span_iou(FrameInterval(0, 10), FrameInterval(5, 15)) == 1 / 3

    @given(
        st.tuples(st.integers(0, 30), st.integers(1, 30)),
        st.tuples(st.integers(0, 30), st.integers(1, 30)),
    )
    def test_symmetric_bounded(self, p, q):
        a = FrameInterval(p[0], p[0] + p[1])
        b = FrameInterval(q[0], q[0] + q[1])
        assert span_iou(a, b) == span_iou(b, a)
        assert 0.0 <= span_iou(a, b) <= 1.0
