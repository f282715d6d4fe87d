from __future__ import annotations

import numpy as np
import pytest

from sg4d.model import (
    EntityNode,
    FrameInterval,
    MaskTube,
    ObjectClass,
    PredicateClass,
    RelationTriplet,
    SceneGraph4D,
    Vocabulary,
)
from sg4d.overlap import RleMask


@pytest.fixture
def tiny_vocab() -> Vocabulary:
    return Vocabulary(
        (
            ObjectClass(0, "person", True),
            ObjectClass(1, "coffee", True),
            ObjectClass(2, "table", True),
        ),
        (PredicateClass(0, "drink"), PredicateClass(1, "near")),
    )


def rect_rle(h: int, w: int, r0: int, r1: int, c0: int, c1: int) -> RleMask:
    """Axis-aligned rectangle [r0, r1) x [c0, c1) as canonical runs."""
    assert 0 <= r0 < r1 <= h and 0 <= c0 < c1 <= w
    width = c1 - c0
    gap = w - width
    runs = [r0 * w + c0]
    for i in range(r1 - r0):
        runs.append(width)
        if i < r1 - r0 - 1:
            runs.append(gap)
    tail = h * w - runs[0] - sum(runs[1:])
    if tail > 0:
        runs.append(tail)
    return RleMask(h, w, tuple(runs))


def single_frame_graph(
    video_id: str,
    vocab: Vocabulary,
    tube_pixels: dict[int, tuple[int, int, int, int]],
    triplets: list[tuple[int, int, int, int, int, float]],
    h: int = 16,
    w: int = 16,
    frames: tuple[int, ...] = (0,),
    categories: dict[int, int] | None = None,
) -> SceneGraph4D:
    """Graph whose entities carry one rectangle per listed frame."""
    entities = []
    for eid, (r0, r1, c0, c1) in tube_pixels.items():
        mask = rect_rle(h, w, r0, r1, c0, c1)
        cat = (categories or {}).get(eid, 0)
        entities.append(
            EntityNode(eid, cat, 1.0, MaskTube(eid, h, w, {f: mask for f in frames}))
        )
    trips = [
        RelationTriplet(s, o, p, FrameInterval(a, b), conf)
        for s, o, p, a, b, conf in triplets
    ]
    return SceneGraph4D(video_id, tuple(entities), tuple(trips), vocab.checksum)


def random_mask_tube(
    rng: np.random.Generator, entity_id: int, max_frames: int = 8, h: int = 16, w: int = 16
) -> MaskTube:
    """Random tube: random subset of frames, random per-frame densities."""
    from sg4d.overlap import rle_encode

    n_frames = int(rng.integers(1, max_frames + 1))
    frame_ids = sorted(
        rng.choice(max_frames, size=n_frames, replace=False).tolist()
    )
    frames = {}
    for f in frame_ids:
        density = rng.uniform(0.05, 0.8)
        frames[f] = rle_encode(rng.random((h, w)) < density)
    return MaskTube(entity_id, h, w, frames)
