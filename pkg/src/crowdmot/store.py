"""Serialization formats and file-tree persistence.

The native annotation document is versioned JSON (human-diffable). Ground
truth interop uses the MOT benchmark CSV shape
``frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z`` (1-based frames);
lineage cannot ride in that format, so sets with splits export children as
independent ids plus a ``child_id,parent_id,split_frame`` sidecar.

Persistence is a directory tree of JSON records keyed by
(project, video, round, task, slot) with atomic per-record writes and
compare-and-set task state transitions; no database needed at desk scale.
"""

from __future__ import annotations

import json
import os
import threading
import time
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterable

from .metrics import MetricsReport
from .model import (
    AnnotationSet,
    BoundingBox,
    KeyFrame,
    SplitEvent,
    Track,
    ValidationError,
    VideoMeta,
)
from .simulator import WorkerModel
from .taskgen import SingObj, SingSeg, Submission, TaskSpec, TaskState

SCHEMA_VERSION = 1


class SchemaViolation(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class VersionMismatch(ValueError):
    pass


class MotParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class NonMonotonicFrames(ValueError):
    pass


class RecordNotFound(KeyError):
    pass


class StateConflict(RuntimeError):
    pass


def _check_keys(obj: dict, allowed: set[str], required: set[str], path: str, strict: bool):
    if not isinstance(obj, dict):
        raise SchemaViolation(path, f"expected an object, got {type(obj).__name__}")
    missing = required - set(obj)
    if missing:
        raise SchemaViolation(path, f"missing field(s) {sorted(missing)}")
    if strict:
        unknown = set(obj) - allowed
        if unknown:
            raise SchemaViolation(path, f"unknown field(s) {sorted(unknown)}")


# ---------------------------------------------------------------------------
# native annotation document

def annotations_to_doc(aset: AnnotationSet) -> dict:
    tracks = []
    for t in aset.tracks:
        entry: dict[str, Any] = {
            "id": t.id,
            "label": str(t.label),
            "key_frames": [
                {"frame": kf.frame, "x": kf.box.x, "y": kf.box.y, "w": kf.box.w, "h": kf.box.h}
                for kf in t.key_frames
            ],
        }
        if t.parent_id is not None:
            entry["parent_id"] = t.parent_id
        if t.split is not None:
            entry["split"] = {"frame": t.split.frame, "children": list(t.split.child_ids)}
        tracks.append(entry)
    return {"schema_version": SCHEMA_VERSION, "video_id": aset.video_id, "tracks": tracks}


def _track_from_doc(entry: dict, path: str, strict: bool) -> Track:
    _check_keys(
        entry,
        {"id", "label", "parent_id", "split", "key_frames"},
        {"id", "label", "key_frames"},
        path,
        strict,
    )
    kfs = []
    for k, kf in enumerate(entry["key_frames"]):
        kf_path = f"{path}.key_frames[{k}]"
        _check_keys(kf, {"frame", "x", "y", "w", "h"}, {"frame", "x", "y", "w", "h"}, kf_path, strict)
        try:
            kfs.append(
                KeyFrame(int(kf["frame"]), BoundingBox(kf["x"], kf["y"], kf["w"], kf["h"]))
            )
        except (ValidationError, TypeError, ValueError) as e:
            raise SchemaViolation(kf_path, str(e)) from e
    split = None
    if entry.get("split") is not None:
        s_path = f"{path}.split"
        _check_keys(entry["split"], {"frame", "children"}, {"frame", "children"}, s_path, strict)
        children = entry["split"]["children"]
        if not isinstance(children, list) or len(children) != 2:
            raise SchemaViolation(f"{s_path}.children", "exactly two child ids required")
        split = SplitEvent(int(entry["split"]["frame"]), tuple(children))
    try:
        return Track(
            id=str(entry["id"]),
            label=str(entry["label"]),
            key_frames=tuple(kfs),
            parent_id=entry.get("parent_id"),
            split=split,
        )
    except ValidationError as e:
        raise SchemaViolation(path, str(e)) from e


def annotations_from_doc(doc: dict, strict: bool = True) -> AnnotationSet:
    _check_keys(doc, {"schema_version", "video_id", "tracks"}, {"schema_version", "video_id", "tracks"}, "$", strict)
    if doc["schema_version"] != SCHEMA_VERSION:
        raise VersionMismatch(
            f"document schema_version {doc['schema_version']}, supported {SCHEMA_VERSION}"
        )
    tracks = [
        _track_from_doc(entry, f"$.tracks[{i}]", strict) for i, entry in enumerate(doc["tracks"])
    ]
    try:
        return AnnotationSet(video_id=str(doc["video_id"]), tracks=tuple(tracks))
    except ValidationError as e:
        raise SchemaViolation("$.tracks", str(e)) from e


# ---------------------------------------------------------------------------
# MOT CSV interop

def _mot_id_map(aset: AnnotationSet) -> dict[str, int]:
    ids = [t.id for t in aset.tracks]
    if all(i.isdigit() and int(i) > 0 for i in ids) and len(set(ids)) == len(ids):
        return {i: int(i) for i in ids}
    return {tid: n for n, tid in enumerate(ids, start=1)}


def export_mot_csv(aset: AnnotationSet) -> str:
    """One row per densified frame, 1-based, conf 1, trailing -1,-1,-1.

    Splits cannot be expressed; children become independent ids and a
    warning points at the lineage sidecar.
    """
    from .model import densify

    if any(t.split is not None for t in aset.tracks):
        warnings.warn(
            "MOT CSV cannot express splits; write the lineage sidecar (export_lineage_csv) too",
            stacklevel=2,
        )
    id_map = _mot_id_map(aset)
    rows = []
    for t in aset.tracks:
        for f, box in densify(t).items():
            rows.append((f + 1, id_map[t.id], box))
    rows.sort(key=lambda r: (r[0], r[1]))
    lines = [
        f"{f},{tid},{box.x!r},{box.y!r},{box.w!r},{box.h!r},1,-1,-1,-1"
        for f, tid, box in rows
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def export_lineage_csv(aset: AnnotationSet) -> str:
    """Sidecar rows ``child_id,parent_id,split_frame`` using MOT export ids."""
    id_map = _mot_id_map(aset)
    lines = []
    for t in aset.tracks:
        if t.split is not None:
            for cid in t.split.child_ids:
                lines.append(f"{id_map[cid]},{id_map[t.id]},{t.split.frame}")
    return "\n".join(lines) + ("\n" if lines else "")


def import_mot_csv(text: str, video_id: str) -> AnnotationSet:
    """Rows become keyframes (frames shifted to 0-based), grouped by id; the
    format has no lineage. Frames must increase per id in file order."""
    per_id: dict[str, list[KeyFrame]] = {}
    order: list[str] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) < 6:
            raise MotParseError(line_no, f"expected at least 6 comma-separated fields, got {len(parts)}")
        try:
            frame = int(parts[0])
            tid = str(int(parts[1]))
            x, y, w, h = (float(v) for v in parts[2:6])
        except ValueError as e:
            raise MotParseError(line_no, str(e)) from e
        if frame < 1:
            raise MotParseError(line_no, f"MOT frames are 1-based, got {frame}")
        try:
            kf = KeyFrame(frame - 1, BoundingBox(x, y, w, h))
        except ValidationError as e:
            raise MotParseError(line_no, str(e)) from e
        bucket = per_id.setdefault(tid, [])
        if tid not in order:
            order.append(tid)
        if bucket and kf.frame <= bucket[-1].frame:
            raise NonMonotonicFrames(
                f"line {line_no}: id {tid} frame {frame} not after previous row"
            )
        bucket.append(kf)
    used_labels: set[str] = set()
    tracks = []
    next_label = 1
    for tid in order:
        if tid.isdigit() and int(tid) > 0 and tid not in used_labels:
            label = tid
        else:
            while str(next_label) in used_labels:
                next_label += 1
            label = str(next_label)
        used_labels.add(label)
        tracks.append(Track(id=tid, label=label, key_frames=tuple(per_id[tid])))
    return AnnotationSet(video_id=video_id, tracks=tuple(tracks))


def curve_csv(thresholds: Iterable[float], values: Iterable[float]) -> str:
    lines = ["threshold,value"]
    lines += [f"{t!r},{v!r}" for t, v in zip(thresholds, values)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# record <-> dict converters for the file tree and the HTTP API

def video_to_dict(v: VideoMeta) -> dict:
    return {
        "id": v.id, "url": v.url, "frame_count": v.frame_count,
        "fps": v.fps, "width": v.width, "height": v.height,
    }


def video_from_dict(d: dict, strict: bool = True) -> VideoMeta:
    _check_keys(
        d, {"id", "url", "frame_count", "fps", "width", "height"},
        {"id", "url", "frame_count", "fps", "width", "height"}, "$", strict,
    )
    try:
        return VideoMeta(
            id=str(d["id"]), url=str(d["url"]), frame_count=int(d["frame_count"]),
            fps=float(d["fps"]), width=int(d["width"]), height=int(d["height"]),
        )
    except (ValidationError, TypeError, ValueError) as e:
        raise SchemaViolation("$", str(e)) from e


def task_to_dict(t: TaskSpec) -> dict:
    if isinstance(t.strategy, SingSeg):
        strategy = {"kind": "singseg", "segment": list(t.strategy.segment)}
    else:
        strategy = {
            "kind": "singobj",
            "round": t.strategy.round,
            "prior": annotations_to_doc(t.strategy.prior),
        }
    return {
        "id": t.id, "video_id": t.video_id, "strategy": strategy,
        "redundancy": t.redundancy, "state": t.state.value,
    }


def task_from_dict(d: dict) -> TaskSpec:
    s = d["strategy"]
    if s["kind"] == "singseg":
        strategy: SingSeg | SingObj = SingSeg(segment=tuple(s["segment"]))
    elif s["kind"] == "singobj":
        strategy = SingObj(round=int(s["round"]), prior=annotations_from_doc(s["prior"]))
    else:
        raise SchemaViolation("$.strategy.kind", f"unknown strategy {s['kind']!r}")
    return TaskSpec(
        id=str(d["id"]), video_id=str(d["video_id"]), strategy=strategy,
        redundancy=int(d["redundancy"]), state=TaskState(d["state"]),
    )


def submission_to_dict(s: Submission) -> dict:
    return {
        "task_id": s.task_id,
        "worker_id": s.worker_id,
        "tracks": annotations_to_doc(AnnotationSet(video_id="", tracks=s.tracks))["tracks"],
        "elapsed_ms": s.elapsed_ms,
        "feedback": s.feedback,
        "keyframe_count": s.keyframe_count,
    }


def submission_from_dict(d: dict, strict: bool = True) -> Submission:
    _check_keys(
        d, {"task_id", "worker_id", "tracks", "elapsed_ms", "feedback", "keyframe_count"},
        {"task_id", "worker_id", "tracks"}, "$", strict,
    )
    tracks = [_track_from_doc(e, f"$.tracks[{i}]", strict) for i, e in enumerate(d["tracks"])]
    try:
        AnnotationSet(video_id="", tracks=tuple(tracks))  # lineage links must close
    except ValidationError as e:
        raise SchemaViolation("$.tracks", str(e)) from e
    return Submission(
        task_id=str(d["task_id"]),
        worker_id=str(d["worker_id"]),
        tracks=tuple(tracks),
        elapsed_ms=int(d.get("elapsed_ms", 0)),
        feedback=d.get("feedback"),
        keyframe_count=d.get("keyframe_count"),
    )


def report_to_dict(r: MetricsReport) -> dict:
    return {
        "video_id": r.video_id,
        "mean_auc": r.mean_auc,
        "mean_tracc": r.mean_tracc,
        "mean_precision20": r.mean_precision20,
        "matched_count": r.matched_count,
        "unmatched_count": r.unmatched_count,
        "per_track": {
            tid: {
                "auc": s.auc, "tracc": s.tracc, "precision20": s.precision20,
                "matched": s.matched,
                "success_curve": list(s.success_curve),
                "precision_curve": list(s.precision_curve),
            }
            for tid, s in r.per_track.items()
        },
    }


def worker_model_from_dict(d: dict) -> WorkerModel:
    allowed = {
        "seed", "late_start_frames", "center_jitter_px", "size_jitter_frac",
        "keyframe_stride", "omission_prob", "duplicate_prob", "missed_split_prob",
    }
    _check_keys(d, allowed, set(), "$", strict=True)
    return WorkerModel(**d)


@dataclass(frozen=True)
class ProjectRecord:
    id: str
    strategy: str = "singobj"  # singseg | singobj
    redundancy: int = 3
    auc_filter: float = 0.4
    duplicate_threshold: float = 0.5
    segment_length: int = 320
    segment_overlap: int = 20
    min_mean_iou: float = 0.3
    created_at: float = 0.0
    videos: tuple[VideoMeta, ...] = ()


def project_to_dict(p: ProjectRecord) -> dict:
    d = {k: getattr(p, k) for k in (
        "id", "strategy", "redundancy", "auc_filter", "duplicate_threshold",
        "segment_length", "segment_overlap", "min_mean_iou", "created_at",
    )}
    return d


@dataclass(frozen=True)
class AssignmentTicket:
    task_id: str
    worker_id: str
    slot: int
    issued_at: float
    expires_at: float


def ticket_to_dict(t: AssignmentTicket) -> dict:
    return {
        "task_id": t.task_id, "worker_id": t.worker_id, "slot": t.slot,
        "issued_at": t.issued_at, "expires_at": t.expires_at,
    }


def ticket_from_dict(d: dict) -> AssignmentTicket:
    return AssignmentTicket(
        task_id=str(d["task_id"]), worker_id=str(d["worker_id"]), slot=int(d["slot"]),
        issued_at=float(d["issued_at"]), expires_at=float(d["expires_at"]),
    )


# ---------------------------------------------------------------------------
# file-tree store

class Store:
    """Project directory of JSON records with atomic writes.

    Slot claims and state transitions serialize through an in-process lock;
    fresh files are additionally created with O_EXCL so concurrent processes
    cannot both win the same slot.
    """

    def __init__(self, root: str | Path, clock: Callable[[], float] = time.time,
                 ticket_ttl_s: float = 3600.0):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self.ticket_ttl_s = ticket_ttl_s
        self._lock = threading.RLock()

    # -- raw record io ------------------------------------------------------

    def _path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def _write_json(self, path: Path, payload: Any, exclusive: bool = False):
        path.parent.mkdir(parents=True, exist_ok=True)
        data = json.dumps(payload, indent=2, sort_keys=True)
        tmp = path.with_suffix(path.suffix + f".tmp{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(data)
        if exclusive:
            # hard link is an atomic create-with-content: no reader can ever
            # observe a half-written record, and only one creator wins
            try:
                os.link(tmp, path)
            except FileExistsError:
                raise StateConflict(f"record already exists: {path}")
            finally:
                tmp.unlink(missing_ok=True)
            return
        os.replace(tmp, path)

    def _read_json(self, path: Path) -> Any:
        try:
            return json.loads(path.read_text())
        except FileNotFoundError:
            raise RecordNotFound(str(path.relative_to(self.root)))

    # -- project / videos / ground truth ------------------------------------

    def save_project(self, project: ProjectRecord):
        self._write_json(self._path("project.json"), project_to_dict(project))
        for v in project.videos:
            self.save_video(v)

    def load_project(self) -> ProjectRecord:
        d = self._read_json(self._path("project.json"))
        return ProjectRecord(videos=tuple(self.list_videos()), **d)

    def save_video(self, video: VideoMeta, overwrite: bool = True):
        path = self._path("videos", video.id, "meta.json")
        if not overwrite and path.exists():
            raise StateConflict(f"video {video.id!r} already registered")
        self._write_json(path, video_to_dict(video))

    def load_video(self, video_id: str) -> VideoMeta:
        return video_from_dict(self._read_json(self._path("videos", video_id, "meta.json")))

    def list_videos(self) -> list[VideoMeta]:
        base = self._path("videos")
        if not base.exists():
            return []
        return [self.load_video(p.name) for p in sorted(base.iterdir()) if p.is_dir()]

    def save_ground_truth(self, aset: AnnotationSet):
        self._write_json(self._path("videos", aset.video_id, "gt.json"), annotations_to_doc(aset))

    def load_ground_truth(self, video_id: str) -> AnnotationSet:
        return annotations_from_doc(self._read_json(self._path("videos", video_id, "gt.json")))

    def has_ground_truth(self, video_id: str) -> bool:
        return self._path("videos", video_id, "gt.json").exists()

    # -- tasks ---------------------------------------------------------------

    def _task_path(self, round_no: int, task_id: str) -> Path:
        return self._path("rounds", f"{round_no:03d}", "tasks", f"{task_id}.json")

    def save_task(self, round_no: int, task: TaskSpec, overwrite: bool = False):
        path = self._task_path(round_no, task.id)
        if not overwrite and path.exists():
            raise StateConflict(f"task {task.id!r} already exists in round {round_no}")
        self._write_json(path, task_to_dict(task))

    def load_task(self, round_no: int, task_id: str) -> TaskSpec:
        return task_from_dict(self._read_json(self._task_path(round_no, task_id)))

    def list_tasks(self, round_no: int) -> list[TaskSpec]:
        base = self._path("rounds", f"{round_no:03d}", "tasks")
        if not base.exists():
            return []
        return [task_from_dict(self._read_json(p)) for p in sorted(base.glob("*.json"))]

    def transition_task(self, round_no: int, task_id: str, expect: TaskState, to: TaskState):
        """Compare-and-set on the task state."""
        with self._lock:
            task = self.load_task(round_no, task_id)
            if task.state is not expect:
                raise StateConflict(
                    f"task {task_id!r} is {task.state.value}, expected {expect.value}"
                )
            self._write_json(self._task_path(round_no, task_id), task_to_dict(replace(task, state=to)))

    # -- tickets and submissions ---------------------------------------------

    def _ticket_path(self, round_no: int, task_id: str, slot: int) -> Path:
        return self._path("rounds", f"{round_no:03d}", "tickets", task_id, f"{slot}.json")

    def _submission_path(self, round_no: int, task_id: str, slot: int) -> Path:
        return self._path("rounds", f"{round_no:03d}", "submissions", task_id, f"{slot}.json")

    def claim_slot(self, round_no: int, task_id: str, worker_id: str) -> AssignmentTicket | None:
        """Atomically claim a free redundancy slot; None when the task is
        saturated. A worker is never handed two live tickets for one task."""
        now = self.clock()
        with self._lock:
            task = self.load_task(round_no, task_id)
            if task.state is not TaskState.OPEN:
                return None
            free: list[tuple[int, bool]] = []
            for slot in range(task.redundancy):
                if self._submission_path(round_no, task_id, slot).exists():
                    continue
                tpath = self._ticket_path(round_no, task_id, slot)
                if tpath.exists():
                    ticket = ticket_from_dict(self._read_json(tpath))
                    if ticket.expires_at > now:
                        if ticket.worker_id == worker_id:
                            raise StateConflict(
                                f"worker {worker_id!r} already holds a live ticket for {task_id!r}"
                            )
                        continue
                    free.append((slot, True))  # expired: slot re-offered
                else:
                    free.append((slot, False))
            if not free:
                return None
            slot, recycled = free[0]
            ticket = AssignmentTicket(
                task_id=task_id, worker_id=worker_id, slot=slot,
                issued_at=now, expires_at=now + self.ticket_ttl_s,
            )
            self._write_json(
                self._ticket_path(round_no, task_id, slot), ticket_to_dict(ticket),
                exclusive=not recycled,
            )
            return ticket

    def live_ticket(self, round_no: int, task_id: str, worker_id: str) -> AssignmentTicket | None:
        now = self.clock()
        base = self._path("rounds", f"{round_no:03d}", "tickets", task_id)
        if not base.exists():
            return None
        with self._lock:
            for p in sorted(base.glob("*.json")):
                ticket = ticket_from_dict(self._read_json(p))
                if ticket.worker_id == worker_id and ticket.expires_at > now:
                    if self._submission_path(round_no, task_id, ticket.slot).exists():
                        continue  # already consumed
                    return ticket
        return None

    def record_submission(self, round_no: int, ticket: AssignmentTicket, submission: Submission):
        """Persist the submission into the ticket's slot (write-once) and
        complete the task when every slot is filled."""
        with self._lock:
            task = self.load_task(round_no, ticket.task_id)
            self._write_json(
                self._submission_path(round_no, ticket.task_id, ticket.slot),
                submission_to_dict(submission),
                exclusive=True,
            )
            filled = sum(
                1 for s in range(task.redundancy)
                if self._submission_path(round_no, ticket.task_id, s).exists()
            )
            if filled >= task.redundancy and task.state is TaskState.OPEN:
                self.transition_task(round_no, ticket.task_id, TaskState.OPEN, TaskState.COMPLETE)

    def list_submissions(self, round_no: int, task_id: str) -> list[Submission]:
        base = self._path("rounds", f"{round_no:03d}", "submissions", task_id)
        if not base.exists():
            return []
        return [
            submission_from_dict(self._read_json(p))
            for p in sorted(base.glob("*.json"), key=lambda p: int(p.stem))
        ]

    # -- accepted sets and reports --------------------------------------------

    def save_accepted(self, round_no: int, aset: AnnotationSet):
        self._write_json(
            self._path("rounds", f"{round_no:03d}", "accepted", f"{aset.video_id}.json"),
            annotations_to_doc(aset),
        )

    def load_accepted(self, round_no: int, video_id: str) -> AnnotationSet:
        return annotations_from_doc(
            self._read_json(self._path("rounds", f"{round_no:03d}", "accepted", f"{video_id}.json"))
        )

    def latest_accepted(self, video_id: str) -> AnnotationSet | None:
        base = self._path("rounds")
        if not base.exists():
            return None
        for rdir in sorted(base.iterdir(), reverse=True):
            p = rdir / "accepted" / f"{video_id}.json"
            if p.exists():
                return annotations_from_doc(self._read_json(p))
        return None

    def save_round_report(self, round_no: int, rows: list[dict]):
        self._write_json(self._path("rounds", f"{round_no:03d}", "report.json"), rows)

    def list_round_reports(self) -> list[dict]:
        base = self._path("rounds")
        rows: list[dict] = []
        if not base.exists():
            return rows
        for rdir in sorted(base.iterdir()):
            p = rdir / "report.json"
            if p.exists():
                rows.extend(self._read_json(p))
        return rows

    def save_metrics_report(self, video_id: str, report: MetricsReport):
        self._write_json(self._path("reports", f"{video_id}.json"), report_to_dict(report))

    def current_round(self) -> int:
        base = self._path("rounds")
        if not base.exists():
            return 0
        rounds = [int(p.name) for p in base.iterdir() if p.name.isdigit()]
        return max(rounds) if rounds else 0

    # -- workflow bookkeeping ---------------------------------------------------

    def save_workflow(self, snapshot: dict):
        self._write_json(self._path("workflow.json"), snapshot)

    def load_workflow(self) -> dict:
        return self._read_json(self._path("workflow.json"))
