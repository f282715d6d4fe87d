"""Command-line surface: evaluate, convert, track, baseline, generate,
narrate, validate."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import SchemaViolation, Sg4dError
from .geometry import FrameGeometry, depth_frame_to_points, tube_points, tube_trajectory
from .matching import link_tracks
from .metrics import evaluate_dataset
from .model import (
    GROUND_TRUTH,
    PREDICTION,
    PointTube,
    SceneGraph4D,
    validate_scene_graph,
)
from .overlap import rle_decode
from .relate import score_pairs_geometric
from .report import render_report_figures, write_report_csv, write_report_json
from .synthgen import RNG_ALGORITHM, generate_scene

EPILOG = "Environment: SG4D_JOBS sets the parallelism degree for evaluation (default 1)."


def _violations_doc(rows) -> dict:
    return {
        "violations": [
            {
                "code": v.code,
                "detail": v.detail,
                "frame": v.frame if v.frame >= 0 else None,
                "offender": v.offender or None,
                "video_id": vid,
            }
            for vid, v in rows
        ]
    }


def _print_violations(rows) -> int:
    print(io.canonical_dumps(_violations_doc(rows)), end="")
    return 2 if rows else 0


def cmd_validate(args) -> int:
    return _print_violations(io.validate_dataset(Path(args.root)))


def cmd_evaluate(args) -> int:
    vocab, items = io.read_dataset(Path(args.gt))
    preds = io.read_predictions(Path(args.pred), vocab)
    known = {vm.video_id for vm, _ in items}
    unknown = sorted(set(preds) - known)
    if unknown:
        raise SchemaViolation(args.pred, f"predictions for unknown videos: {unknown}")

    rows = []
    for vm, gt in items:
        rows.extend((vm.video_id, v) for v in validate_scene_graph(gt, vocab, GROUND_TRUTH))
        pred = preds.get(vm.video_id)
        if pred is not None:
            rows.extend((vm.video_id, v) for v in validate_scene_graph(pred, vocab, PREDICTION))
    if rows:
        return _print_violations(rows)

    pairs = []
    for vm, gt in sorted(items, key=lambda it: it[0].video_id):
        pred = preds.get(vm.video_id)
        if pred is None:
            pred = SceneGraph4D(vm.video_id, (), (), vocab.checksum)
        pairs.append((pred, gt))

    ks = tuple(int(k) for k in args.k.split(","))
    report = evaluate_dataset(pairs, ks, viou_threshold=args.viou_thresh)

    out = Path(args.out)
    write_report_json(out, report)
    stem = out.stem if out.suffix else out.name
    csv_path = out.parent / f"{stem}.csv"
    write_report_csv(csv_path, report, vocab)
    written = [out, csv_path]
    if not args.no_figures:
        written += render_report_figures(out.parent, report, vocab, stem=stem)
    for k in report.ks:
        s = report.dataset[k]
        fmt = lambda x: "n/a" if x is None else f"{x:.4f}"
        print(f"R@{k} {fmt(s.recall)}  mR@{k} {fmt(s.mean_recall)}")
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_generate(args) -> int:
    recipes = io.read_recipes(Path(args.recipe))
    if args.seed is not None:
        recipes = [
            dataclasses.replace(r, seed=args.seed + i) for i, r in enumerate(recipes)
        ]
    vocab = recipes[0].vocabulary
    if any(r.vocabulary.checksum != vocab.checksum for r in recipes):
        raise SchemaViolation(args.recipe, "recipes disagree on the vocabulary")

    out = Path(args.out)
    items = []
    for recipe in recipes:
        scene = generate_scene(recipe)
        vm = io.VideoManifest(
            recipe.video_id,
            recipe.width,
            recipe.height,
            recipe.frame_count,
            recipe.fps,
            recipe.depth_scale,
            recipe.max_depth,
            io.MODE_RGBD,
            recipe.intrinsics,
        )
        items.append((vm, scene.graph))
        vdir = io.video_dir(out, recipe.video_id)
        vdir.mkdir(parents=True, exist_ok=True)
        for t in range(recipe.frame_count):
            io.write_depth_frame(vdir, t, scene.depth[t], recipe.depth_scale)
            io.write_rgb_frame(vdir, t, scene.rgb[t])
        io.write_json(
            vdir / "oracle.json",
            {
                "trajectories": {
                    str(eid): {str(f): list(p) for f, p in sorted(traj.items())}
                    for eid, traj in sorted(scene.trajectories.items())
                }
            },
        )
        print(f"generated {recipe.video_id}: {recipe.frame_count} frames, "
              f"{len(scene.graph.entities)} entities, {len(scene.graph.triplets)} triplets")
    io.write_dataset(
        out,
        vocab,
        items,
        rng_metadata={"algorithm": RNG_ALGORITHM, "seeds": [r.seed for r in recipes]},
    )
    print(f"wrote dataset {out}")
    return 0


def _load_video(video_dir_arg: str):
    vdir = Path(video_dir_arg)
    root = vdir.parent.parent
    vocab, items = io.read_dataset(root)
    for vm, graph in items:
        if vm.video_id == vdir.name:
            return root, vocab, vm, graph
    raise SchemaViolation(str(vdir), "video not listed in the dataset manifest")


def cmd_convert(args) -> int:
    _, vocab, vm, graph = _load_video(args.video)
    if vm.mode != io.MODE_RGBD:
        raise SchemaViolation(args.video, "convert expects an RGB-D video")
    out = Path(args.out)
    new_vm = dataclasses.replace(vm, mode=io.MODE_POINTS, max_depth=args.max_depth)
    src_dir = Path(args.video)
    dst_dir = io.video_dir(out, vm.video_id)
    point_tubes = {e.entity_id: {} for e in graph.entities}
    for t in range(vm.frame_count):
        depth = io.read_depth_frame(src_dir, t, vm.depth_scale)
        rgb = io.read_rgb_frame(src_dir, t)
        cloud = depth_frame_to_points(
            depth, rgb, vm.intrinsics, vm.extrinsic_for(t), args.max_depth
        )
        io.write_points_frame(dst_dir, t, cloud.points)
        valid = (depth > 0) & (depth <= args.max_depth)
        index_of = np.cumsum(valid.ravel()) - 1
        for e in graph.entities:
            mask = e.tube.frames.get(t)
            if mask is None:
                continue
            sel = rle_decode(mask).ravel() & valid.ravel()
            if sel.any():
                point_tubes[e.entity_id][t] = tuple(index_of[np.flatnonzero(sel)].tolist())
    entities = tuple(
        dataclasses.replace(e, tube=PointTube(e.entity_id, point_tubes[e.entity_id]))
        for e in graph.entities
    )
    new_graph = SceneGraph4D(vm.video_id, entities, graph.triplets, vocab.checksum)
    io.write_dataset(out, vocab, [(new_vm, new_graph)])
    print(f"converted {vm.video_id} to point-cloud mode at {out}")
    return 0


def cmd_track(args) -> int:
    seg = io.read_segments(Path(args.segments))
    entities = link_tracks(seg.frames, tau=args.tau, iou_gate=args.iou_gate)
    graph = SceneGraph4D(seg.video_id, tuple(entities), (), seg.vocabulary_checksum)
    io.write_predictions(Path(args.out), seg.vocabulary_checksum, [(None, graph)])
    print(f"linked {sum(len(g) for g in seg.frames)} segments into {len(entities)} tracks")
    print(f"wrote {args.out}")
    return 0


def cmd_baseline(args) -> int:
    _, vocab, vm, graph = _load_video(args.video)
    rulebook = io.read_rulebook(Path(args.rulebook), vocab)
    vdir = Path(args.video)
    frame_ids = sorted({f for e in graph.entities for f in e.tube.frames})
    if vm.mode == io.MODE_RGBD:
        frames = {
            f: FrameGeometry(
                io.read_depth_frame(vdir, f, vm.depth_scale),
                vm.intrinsics,
                vm.extrinsic_for(f),
                vm.max_depth,
            )
            for f in frame_ids
        }
    else:
        frames = {f: io.read_points_frame(vdir, f) for f in frame_ids}
    trajectories = {e.entity_id: tube_trajectory(e, frames) for e in graph.entities}
    points = None
    if rulebook.needs_points():
        points = {e.entity_id: tube_points(e, frames) for e in graph.entities}
    triplets = score_pairs_geometric(graph.entities, trajectories, rulebook, points)
    pred = SceneGraph4D(vm.video_id, graph.entities, tuple(triplets), vocab.checksum)
    io.write_predictions(Path(args.out), vocab.checksum, [(vm, pred)])
    print(f"scored {len(triplets)} triplets for {vm.video_id}")
    print(f"wrote {args.out}")
    return 0


def cmd_narrate(args) -> int:
    _, vocab, vm, graph = _load_video(args.graph)
    fps = args.fps if args.fps is not None else vm.fps
    blocks = io.narrate(graph, vocab, args.window, fps, frame_count=vm.frame_count)
    print("\n\n".join(blocks))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sg4d",
        description="4D scene-graph toolkit: datasets, tracking, relations, recall metrics.",
        epilog=EPILOG,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("evaluate", help="score predictions against a ground-truth dataset",
                       formatter_class=fmt, epilog=EPILOG)
    p.add_argument("--gt", required=True, help="ground-truth dataset root")
    p.add_argument("--pred", required=True, help="predictions JSON file")
    p.add_argument("--k", default="20,50,100", help="comma-separated K values")
    p.add_argument("--viou-thresh", type=float, default=0.5, help="tube vIOU threshold")
    p.add_argument("--out", default="report.json", help="report JSON path")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figure rendering")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("convert", help="convert an RGB-D video to point-cloud mode",
                       formatter_class=fmt)
    p.add_argument("--video", required=True, help="video directory (dataset/videos/<id>)")
    p.add_argument("--lambda", dest="max_depth", type=float, default=20.0,
                   help="depth threshold in meters; farther points are dropped")
    p.add_argument("--out", required=True, help="output dataset root")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("track", help="link per-frame segments into tracks",
                       formatter_class=fmt)
    p.add_argument("--segments", required=True, help="segments JSON file")
    p.add_argument("--tau", type=float, default=0.5, help="cosine similarity threshold")
    p.add_argument("--iou-gate", type=float, default=None, help="optional frame IoU gate")
    p.add_argument("--out", required=True, help="output predictions file")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("baseline", help="score rulebook relations on a video's tubes",
                       formatter_class=fmt)
    p.add_argument("--video", required=True, help="video directory (dataset/videos/<id>)")
    p.add_argument("--rulebook", required=True, help="rulebook JSON file")
    p.add_argument("--out", required=True, help="output predictions file")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("generate", help="generate a synthetic dataset from a recipe",
                       formatter_class=fmt)
    p.add_argument("--recipe", required=True, help="recipe JSON file")
    p.add_argument("--seed", type=int, default=None, help="override the recipe seed")
    p.add_argument("--out", required=True, help="output dataset root")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("narrate", help="render a video's triplets as timed text windows",
                       formatter_class=fmt)
    p.add_argument("--graph", required=True, help="video directory (dataset/videos/<id>)")
    p.add_argument("--window", type=float, default=30.0, help="window length in seconds")
    p.add_argument("--fps", type=float, default=None,
                   help="frames per second (default: the video manifest fps)")
    p.set_defaults(func=cmd_narrate)

    p = sub.add_parser("validate", help="validate a dataset and report violations",
                       formatter_class=fmt)
    p.add_argument("--root", required=True, help="dataset root")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (Sg4dError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
