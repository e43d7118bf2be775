"""Operator command line for the full pipeline without the HTTP service.

Every command is a thin wrapper over the library, bound to a project
directory (--project flag or CROWDMOT_PROJECT). Exit codes: 0 success,
1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .assignment import EmptyMatrix
from .merging import (
    BadSegmentParams,
    LengthMismatch,
    MergeConfig,
    merge_chain,
    plan_segments,
    slice_annotations,
)
from .metrics import evaluate_video
from .model import AnnotationSet, ValidationError, VideoMismatch
from .simulator import NoObjectsAvailable, simulate_submission
from .store import (
    MotParseError,
    NonMonotonicFrames,
    ProjectRecord,
    RecordNotFound,
    SchemaViolation,
    StateConflict,
    Store,
    VersionMismatch,
    annotations_from_doc,
    annotations_to_doc,
    curve_csv,
    export_lineage_csv,
    export_mot_csv,
    import_mot_csv,
    report_to_dict,
    video_from_dict,
    worker_model_from_dict,
)
from .taskgen import TaskState
from .workflow import NoSubmissions, RoundConfig, RoundIncomplete, select_best

VALIDATION_ERRORS = (
    ValidationError, SchemaViolation, VersionMismatch, MotParseError,
    NonMonotonicFrames, BadSegmentParams, LengthMismatch, VideoMismatch,
    EmptyMatrix, NoSubmissions, RoundIncomplete, NoObjectsAvailable,
    StateConflict, ValueError,
)


def _project_store(args) -> Store:
    root = args.project or os.environ.get("CROWDMOT_PROJECT")
    if not root:
        raise ValueError("no project directory: pass --project or set CROWDMOT_PROJECT")
    return Store(root)


def _load_annotations(path: Path, video_id: str | None = None) -> AnnotationSet:
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        return import_mot_csv(text, video_id=video_id or path.stem)
    return annotations_from_doc(json.loads(text))


def _refuse_overwrite(path: Path, force: bool):
    if path.exists() and not force:
        raise ValueError(f"{path} exists; pass --force to overwrite")


def _ensure_project(store: Store) -> ProjectRecord:
    try:
        return store.load_project()
    except RecordNotFound:
        record = ProjectRecord(id=store.root.name)
        store.save_project(record)
        return record


def cmd_ingest(args) -> int:
    store = _project_store(args)
    _ensure_project(store)
    video = video_from_dict(json.loads(Path(args.video).read_text()))
    try:
        store.save_video(video, overwrite=args.force)
    except StateConflict:
        raise ValueError(f"video {video.id!r} already ingested; pass --force to replace")
    print(f"ingested video {video.id} ({video.frame_count} frames)")
    if args.gt:
        gt = _load_annotations(Path(args.gt), video_id=video.id)
        if gt.video_id != video.id:
            gt = AnnotationSet(video_id=video.id, tracks=gt.tracks)
        store.save_ground_truth(gt)
        print(f"ingested ground truth: {len(gt.tracks)} tracks")
    return 0


def cmd_tasks_generate(args) -> int:
    from .service import generate_project_tasks

    store = _project_store(args)
    _ensure_project(store)
    result = generate_project_tasks(store, args.strategy, args.redundancy)
    print(f"round {result['round']}: {len(result['tasks'])} task(s)")
    for tid in result["tasks"]:
        print(f"  {tid}")
    return 0


def cmd_simulate(args) -> int:
    store = _project_store(args)
    model = worker_model_from_dict(json.loads(Path(args.model).read_text()))
    round_no = store.current_round()
    tasks = [t for t in store.list_tasks(round_no) if t.state is TaskState.OPEN]
    if not tasks:
        print("no open tasks")
        return 0
    filled = 0
    for task in sorted(tasks, key=lambda t: t.id):
        gt = store.load_ground_truth(task.video_id)
        for k in range(task.redundancy):
            worker = f"sim-{args.seed}-{k}"
            try:
                ticket = store.claim_slot(round_no, task.id, worker)
            except StateConflict:
                continue  # this synthetic worker already claimed the task
            if ticket is None:
                break
            slot_model = replace(model, seed=args.seed * 1009 + k * 101)
            sub = simulate_submission(slot_model, task, gt, worker_id=worker)
            store.record_submission(round_no, ticket, sub)
            filled += 1
    print(f"round {round_no}: filled {filled} slot(s)")
    return 0


def cmd_merge(args) -> int:
    store = _project_store(args)
    project = _ensure_project(store)
    length, overlap = (int(v) for v in args.plan.split(","))
    cfg = MergeConfig(min_mean_iou=args.min_mean_iou)
    videos = [store.load_video(args.video)] if args.video else store.list_videos()
    sel_cfg = RoundConfig(redundancy=project.redundancy)
    for video in videos:
        plan = plan_segments(video.frame_count, length, overlap)
        gt = store.load_ground_truth(video.id)
        per_segment = []
        for i, seg in enumerate(plan.segments):
            task_id = f"{video.id}-seg{i:03d}"
            subs = store.list_submissions(0, task_id)
            if not subs:
                raise ValueError(f"no submissions for task {task_id!r}")
            best = select_best(subs, slice_annotations(gt, seg), sel_cfg)
            per_segment.append(AnnotationSet(video_id=video.id, tracks=best.tracks))
        merged = merge_chain(per_segment, plan, cfg)
        store.save_accepted(0, merged)
        print(f"{video.id}: merged {len(plan.segments)} segment(s) into {len(merged.tracks)} track(s)")
        if args.out:
            out = Path(args.out)
            _refuse_overwrite(out, args.force)
            out.write_text(json.dumps(annotations_to_doc(merged), indent=2))
            print(f"wrote {out}")
    return 0


def cmd_eval(args) -> int:
    gt = _load_annotations(Path(args.gt), video_id=args.video)
    pred = _load_annotations(Path(args.pred), video_id=gt.video_id)
    if pred.video_id != gt.video_id:
        pred = AnnotationSet(video_id=gt.video_id, tracks=pred.tracks)
    report = evaluate_video(pred, gt)
    print(f"{'AUC':>6}  {'TrAcc':>6}  {'Precision':>9}")
    print(f"{report.mean_auc:6.3f}  {report.mean_tracc:6.3f}  {report.mean_precision20:9.3f}")
    if args.out:
        out = Path(args.out)
        _refuse_overwrite(out, args.force)
        out.write_text(json.dumps(report_to_dict(report), indent=2))
        print(f"wrote {out}")
    if args.curves:
        from .metrics import CurveConfig

        cfg = CurveConfig()
        curves_dir = Path(args.curves)
        curves_dir.mkdir(parents=True, exist_ok=True)
        for tid, score in report.per_track.items():
            (curves_dir / f"{tid}-success.csv").write_text(
                curve_csv(cfg.iou_thresholds, score.success_curve)
            )
            (curves_dir / f"{tid}-precision.csv").write_text(
                curve_csv(cfg.dist_thresholds, score.precision_curve)
            )
        print(f"wrote curves for {len(report.per_track)} track(s) to {curves_dir}")
    return 0


def cmd_export(args) -> int:
    aset = _load_annotations(Path(args.annotations), video_id=args.video)
    out = Path(args.out)
    _refuse_overwrite(out, args.force)
    if out.suffix.lower() == ".csv":
        out.write_text(export_mot_csv(aset))
        lineage = export_lineage_csv(aset)
        if lineage:
            sidecar = out.with_suffix(".lineage.csv")
            sidecar.write_text(lineage)
            print(f"wrote {out} and lineage sidecar {sidecar}")
        else:
            print(f"wrote {out}")
    else:
        out.write_text(json.dumps(annotations_to_doc(aset), indent=2))
        print(f"wrote {out}")
    return 0


def cmd_workflow_advance(args) -> int:
    from .service import advance_project_round

    store = _project_store(args)
    result = advance_project_round(store)
    print(f"round {result['round']} advanced")
    print(f"  accepted: {result['accepted']}")
    print(f"  filtered_out: {result['filtered_out']}")
    print(f"  stopped: {result['stopped']}")
    print(f"  next tasks: {result['next_tasks']}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    store = _project_store(args)
    addr = args.addr or os.environ.get("CROWDMOT_ADDR", "127.0.0.1:8700")
    host, _, port = addr.rpartition(":")
    uvicorn.run(create_app(store), host=host or "127.0.0.1", port=int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdmot",
        description="Crowdsourced multiple-object tracking annotation pipeline",
    )
    parser.add_argument("--project", help="project directory (or CROWDMOT_PROJECT)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="register a video and optional ground truth")
    p.add_argument("--video", required=True, help="video metadata JSON file")
    p.add_argument("--gt", help="ground truth (.json native or .csv MOT)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_ingest)

    tasks = sub.add_parser("tasks", help="task administration")
    tasks_sub = tasks.add_subparsers(dest="tasks_command", required=True)
    p = tasks_sub.add_parser("generate", help="generate round-0 tasks")
    p.add_argument("--strategy", choices=["singseg", "singobj"])
    p.add_argument("--redundancy", type=int)
    p.set_defaults(fn=cmd_tasks_generate)

    p = sub.add_parser("simulate", help="fill open task slots with synthetic workers")
    p.add_argument("--model", required=True, help="worker model JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("merge", help="select best per segment and merge into whole-video tracks")
    p.add_argument("--plan", default="320,20", help="segment length,overlap")
    p.add_argument("--min-mean-iou", type=float, default=0.3)
    p.add_argument("--video", help="merge a single video id")
    p.add_argument("--out", help="also write the merged set to this file")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_merge)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--video", help="video id for MOT CSV inputs")
    p.add_argument("--out", help="write the full report JSON here")
    p.add_argument("--curves", help="write per-track curve CSVs into this directory")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("export", help="convert annotations between native JSON and MOT CSV")
    p.add_argument("--annotations", required=True)
    p.add_argument("--video", help="video id for MOT CSV inputs")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_export)

    wf = sub.add_parser("workflow", help="iterative round administration")
    wf_sub = wf.add_subparsers(dest="workflow_command", required=True)
    p = wf_sub.add_parser("advance", help="close the current round and open the next")
    p.set_defaults(fn=cmd_workflow_advance)

    p = sub.add_parser("serve", help="run the HTTP task service")
    p.add_argument("--addr", help="host:port (or CROWDMOT_ADDR)")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, RecordNotFound) as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
