"""HTTP task service: registration, atomic task assignment, gated
submission intake, round administration, and evaluation.

All payloads mirror the store-io document shapes exactly; request bodies
are validated through the same loaders the file tree uses, so a record that
went in over HTTP always reads back intact. Submission intake enforces the
quality gates: a box must have been created AND moved (two keyframes),
single-object tasks carry exactly one root track, and the client must
attest that it previewed the full video after the last edit.
"""

from __future__ import annotations

import time

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .merging import plan_segments
from .metrics import evaluate_video
from .model import AnnotationSet, ValidationError
from .store import (
    ProjectRecord,
    RecordNotFound,
    SchemaViolation,
    StateConflict,
    Store,
    VersionMismatch,
    annotations_from_doc,
    annotations_to_doc,
    project_to_dict,
    report_to_dict,
    submission_from_dict,
    ticket_to_dict,
    video_from_dict,
    video_to_dict,
)
from .taskgen import SingObj, SingSeg, gen_singobj_round, gen_singseg_tasks
from .workflow import (
    RoundConfig,
    RoundIncomplete,
    WorkflowState,
    advance_round,
    round_report_rows,
)


def _error(status: int, code: str, detail: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "detail": detail, **extra})


class NoGroundTruth(LookupError):
    """An operation needing ground truth found none registered."""


def generate_project_tasks(store: Store, strategy: str | None = None,
                           redundancy: int | None = None) -> dict:
    """Create the round-0 tasks for every registered video and start the
    workflow bookkeeping. Shared by the admin endpoint and the CLI."""
    project = store.load_project()
    strategy = strategy or project.strategy
    redundancy = int(redundancy or project.redundancy)
    if strategy not in ("singseg", "singobj"):
        raise SchemaViolation("$.strategy", "must be 'singseg' or 'singobj'")
    videos = store.list_videos()
    if not videos:
        raise StateConflict("no videos registered")
    created = []
    for video in videos:
        if strategy == "singseg":
            plan = plan_segments(video.frame_count, project.segment_length, project.segment_overlap)
            tasks = gen_singseg_tasks(video, plan, redundancy)
        else:
            tasks = [gen_singobj_round(video, AnnotationSet(video_id=video.id), 0, redundancy)]
        for task in tasks:
            store.save_task(0, task, overwrite=False)
            created.append(task.id)
    store.save_workflow(
        {"round": 0, "strategy": strategy, "redundancy": redundancy,
         "active": [v.id for v in videos], "stopped": []}
    )
    return {"round": 0, "tasks": created}


def advance_project_round(store: Store) -> dict:
    """Fold the current round's submissions into accepted sets, apply the
    AUC filter and stop rule, and lay out the next round's tasks."""
    wf = store.load_workflow()
    if wf.get("strategy") != "singobj":
        raise StateConflict("round advancement applies to single-object projects")
    project = store.load_project()
    round_no = int(wf["round"])
    videos = {v.id: v for v in store.list_videos()}
    active = [v for v in wf["active"] if v in videos]
    ground_truth = {}
    for v in active:
        if not store.has_ground_truth(v):
            raise NoGroundTruth(f"video {v!r} has no ground truth for selection")
        ground_truth[v] = store.load_ground_truth(v)
    accepted = {}
    for v in videos:
        prev = store.latest_accepted(v)
        accepted[v] = prev if prev is not None else AnnotationSet(video_id=v)
    state = WorkflowState(
        videos=videos,
        ground_truth=ground_truth,
        accepted=accepted,
        active=frozenset(active),
        stopped=frozenset(wf["stopped"]),
        round=round_no,
    )
    submissions = {
        v: store.list_submissions(round_no, f"{v}-obj-r{round_no:02d}") for v in active
    }
    cfg = RoundConfig(
        auc_filter=project.auc_filter,
        redundancy=int(wf.get("redundancy", project.redundancy)),
        duplicate_threshold=project.duplicate_threshold,
    )
    next_state, outcome, next_tasks = advance_round(state, submissions, cfg)
    for v in sorted(state.active):
        store.save_accepted(round_no, next_state.accepted[v])
    store.save_round_report(round_no, round_report_rows(outcome))
    for task in next_tasks:
        store.save_task(next_state.round, task, overwrite=True)
    store.save_workflow(
        {"round": next_state.round, "strategy": "singobj", "redundancy": cfg.redundancy,
         "active": sorted(next_state.active), "stopped": sorted(next_state.stopped)}
    )
    return {
        "round": outcome.round,
        "accepted": {v: len(s.tracks) for v, s in outcome.accepted.items()},
        "filtered_out": sorted(outcome.filtered_out),
        "stopped": sorted(outcome.stopped),
        "scores": {v: s.auc for v, s in outcome.scores.items()},
        "next_tasks": [t.id for t in next_tasks],
    }


def _task_payload(store: Store, round_no: int, task, ticket) -> dict:
    video = store.load_video(task.video_id)
    payload = {
        "ticket": ticket_to_dict(ticket),
        "task": {
            "id": task.id,
            "video": video_to_dict(video),
            "redundancy": task.redundancy,
        },
    }
    if isinstance(task.strategy, SingSeg):
        payload["task"]["kind"] = "singseg"
        payload["task"]["segment"] = list(task.strategy.segment)
        payload["task"]["instructions"] = "annotate-all-objects-in-segment"
    else:
        payload["task"]["kind"] = "singobj"
        payload["task"]["round"] = task.strategy.round
        prior = annotations_to_doc(task.strategy.prior)
        prior["read_only"] = True
        payload["task"]["prior"] = prior
        payload["task"]["instructions"] = (
            "annotate-one-unannotated-object"
            if task.strategy.prior.tracks
            else "annotate-one-object"
        )
    return payload


def create_app(store: Store) -> FastAPI:
    app = FastAPI(title="crowdmot task service")

    @app.exception_handler(SchemaViolation)
    async def _schema(request: Request, exc: SchemaViolation):
        return _error(422, "SchemaViolation", str(exc), path=exc.path)

    @app.exception_handler(ValidationError)
    async def _validation(request: Request, exc: ValidationError):
        return _error(422, "ValidationError", str(exc))

    @app.exception_handler(VersionMismatch)
    async def _version(request: Request, exc: VersionMismatch):
        return _error(422, "VersionMismatch", str(exc))

    @app.exception_handler(RecordNotFound)
    async def _missing(request: Request, exc: RecordNotFound):
        return _error(404, "NotFound", str(exc))

    # -- registration ---------------------------------------------------------

    @app.post("/api/projects")
    async def create_project(request: Request):
        body = await request.json()
        known = {
            "id", "strategy", "redundancy", "auc_filter", "duplicate_threshold",
            "segment_length", "segment_overlap", "min_mean_iou",
        }
        unknown = set(body) - known
        if unknown:
            raise SchemaViolation("$", f"unknown field(s) {sorted(unknown)}")
        if "id" not in body:
            raise SchemaViolation("$.id", "missing")
        if body.get("strategy", "singobj") not in ("singseg", "singobj"):
            raise SchemaViolation("$.strategy", "must be 'singseg' or 'singobj'")
        try:
            store.load_project()
            return _error(409, "Conflict", "project already exists")
        except RecordNotFound:
            pass
        record = ProjectRecord(created_at=time.time(), **body)
        store.save_project(record)
        return JSONResponse(status_code=201, content=project_to_dict(record))

    @app.post("/api/videos")
    async def register_video(request: Request):
        body = await request.json()
        video = video_from_dict(body)
        try:
            store.save_video(video, overwrite=False)
        except StateConflict as e:
            return _error(409, "Conflict", str(e))
        return JSONResponse(status_code=201, content=video_to_dict(video))

    @app.post("/api/videos/{video_id}/gt")
    async def register_ground_truth(video_id: str, request: Request):
        store.load_video(video_id)  # 404 when unregistered
        doc = await request.json()
        gt = annotations_from_doc(doc)
        if gt.video_id != video_id:
            raise SchemaViolation("$.video_id", f"expected {video_id!r}, got {gt.video_id!r}")
        store.save_ground_truth(gt)
        return JSONResponse(status_code=201, content={"video_id": video_id, "tracks": len(gt.tracks)})

    # -- task generation and assignment ---------------------------------------

    @app.post("/api/admin/tasks/generate")
    async def generate_tasks(request: Request):
        body = await request.json() if await request.body() else {}
        try:
            result = generate_project_tasks(
                store, body.get("strategy"), body.get("redundancy")
            )
        except StateConflict as e:
            return _error(409, "Conflict", str(e))
        return JSONResponse(status_code=201, content=result)

    @app.get("/api/tasks/next")
    async def next_task(worker: str = ""):
        if not worker:
            raise SchemaViolation("$.worker", "worker query parameter required")
        round_no = store.current_round()
        tasks = sorted(store.list_tasks(round_no), key=lambda t: t.id)
        for task in tasks:
            existing = store.live_ticket(round_no, task.id, worker)
            if existing is not None:
                return _task_payload(store, round_no, task, existing)
        for task in tasks:
            try:
                ticket = store.claim_slot(round_no, task.id, worker)
            except StateConflict as e:
                return _error(409, "Conflict", str(e))
            if ticket is not None:
                return _task_payload(store, round_no, task, ticket)
        return Response(status_code=204)

    @app.post("/api/tasks/{task_id}/submissions")
    async def submit(task_id: str, request: Request):
        body = await request.json()
        worker = body.get("worker_id", "")
        round_no = store.current_round()
        try:
            task = store.load_task(round_no, task_id)
        except RecordNotFound:
            return _error(404, "NotFound", f"no task {task_id!r} in round {round_no}")
        ticket = store.live_ticket(round_no, task_id, worker)
        if ticket is None:
            return _error(410, "TicketExpired", f"no live ticket for worker {worker!r}")

        if not body.get("preview_completed", False):
            return _error(
                422, "QualityGate", "full-video preview not completed after the last edit",
                gate="preview",
            )
        sub = submission_from_dict(
            {
                "task_id": task_id,
                "worker_id": worker,
                "tracks": body.get("tracks", []),
                "elapsed_ms": body.get("elapsed_ms", 0),
                "feedback": body.get("feedback"),
            }
        )
        roots = [t for t in sub.tracks if t.parent_id is None]
        for t in roots:
            if len(t.key_frames) < 2:
                return _error(
                    422, "QualityGate",
                    f"track {t.id!r} has a single keyframe: draw the box AND move it",
                    gate="keyframes", track=t.id,
                )
        if isinstance(task.strategy, SingObj) and len(roots) != 1:
            return _error(
                422, "QualityGate",
                f"single-object task needs exactly one root track, got {len(roots)}",
                gate="single-object",
            )
        if not roots:
            return _error(422, "QualityGate", "submission has no tracks", gate="keyframes")
        try:
            store.record_submission(round_no, ticket, sub)
        except StateConflict as e:
            return _error(409, "Conflict", str(e))
        task = store.load_task(round_no, task_id)
        return JSONResponse(
            status_code=201,
            content={"task_id": task_id, "slot": ticket.slot, "state": task.state.value,
                     "keyframe_count": sub.keyframe_count},
        )

    # -- rounds, annotations, evaluation ---------------------------------------

    @app.post("/api/admin/rounds/advance")
    async def advance(request: Request):
        try:
            result = advance_project_round(store)
        except RecordNotFound:
            return _error(409, "Conflict", "no workflow started; generate tasks first")
        except StateConflict as e:
            return _error(409, "Conflict", str(e))
        except NoGroundTruth as e:
            return _error(404, "NoGroundTruth", str(e))
        except RoundIncomplete as e:
            return _error(409, "RoundIncomplete", str(e))
        return JSONResponse(status_code=200, content=result)

    @app.get("/api/videos/{video_id}/annotations")
    async def annotations(video_id: str):
        store.load_video(video_id)
        acc = store.latest_accepted(video_id)
        if acc is None:
            return _error(404, "NotFound", f"no accepted annotations for {video_id!r}")
        return annotations_to_doc(acc)

    @app.get("/api/eval")
    async def eval_video(video: str = ""):
        if not video:
            raise SchemaViolation("$.video", "video query parameter required")
        store.load_video(video)
        if not store.has_ground_truth(video):
            return _error(404, "NoGroundTruth", f"video {video!r} has no registered ground truth")
        gt = store.load_ground_truth(video)
        acc = store.latest_accepted(video)
        if acc is None:
            return _error(404, "NotFound", f"no accepted annotations for {video!r}")
        report = evaluate_video(acc, gt)
        payload = report_to_dict(report)
        store.save_metrics_report(video, report)
        return payload

    return app
