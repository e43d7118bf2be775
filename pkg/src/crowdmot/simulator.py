"""Synthetic annotators for desk-scale pipeline tests.

A worker model wraps the failure modes observed in crowdsourced tracking
work: objects skipped outright, boxes jittered in position and size, tracks
started late, already-annotated objects re-annotated, and split events
missed. Magnitudes are operator-chosen knobs, not claims about human error
distributions. Every model is deterministic given its seed: the random
stream is keyed on (seed, task id) so adding tasks never perturbs existing
ones.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .model import (
    AnnotationSet,
    BoundingBox,
    KeyFrame,
    LineageLabel,
    SplitEvent,
    Track,
    VideoMeta,
    interpolate_box,
    lifetime,
)
from .taskgen import SingSeg, Submission, TaskSpec, is_duplicate


class NoObjectsAvailable(RuntimeError):
    """A single-object task has nothing left to annotate."""


@dataclass(frozen=True)
class WorkerModel:
    seed: int = 0
    late_start_frames: int = 0
    center_jitter_px: float = 0.0
    size_jitter_frac: float = 0.0
    keyframe_stride: int = 1
    omission_prob: float = 0.0      # SingSeg: skip an object lineage entirely
    duplicate_prob: float = 0.0     # SingObj: re-annotate an annotated object
    missed_split_prob: float = 0.0  # keep following child "-1" through a split

    def __post_init__(self):
        for name in ("omission_prob", "duplicate_prob", "missed_split_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")
        if self.keyframe_stride < 1:
            raise ValueError(f"keyframe_stride must be >= 1, got {self.keyframe_stride}")
        if self.late_start_frames < 0:
            raise ValueError(f"late_start_frames must be >= 0, got {self.late_start_frames}")
        if self.center_jitter_px < 0 or self.size_jitter_frac < 0:
            raise ValueError("jitter magnitudes must be >= 0")


def _task_rng(model: WorkerModel, task_id: str) -> np.random.Generator:
    digest = hashlib.sha256(task_id.encode()).digest()
    return np.random.default_rng([model.seed, int.from_bytes(digest[:8], "big")])


def _perturbed_keyframes(
    rng: np.random.Generator,
    model: WorkerModel,
    box_at,
    start: int,
    end: int,
) -> tuple[KeyFrame, ...]:
    """Sample boxes every `keyframe_stride` frames over [start, end] and
    jitter each one. Noise draws happen unconditionally so the stream stays
    aligned across models that differ only in magnitudes."""
    frames = list(range(start, end + 1, model.keyframe_stride))
    if frames[-1] != end:
        frames.append(end)
    out = []
    for f in frames:
        b = box_at(f)
        dx, dy, zw, zh = rng.standard_normal(4)
        w = max(1e-3, b.w * (1.0 + float(zw) * model.size_jitter_frac))
        h = max(1e-3, b.h * (1.0 + float(zh) * model.size_jitter_frac))
        # shift the center, scale about it; written so an all-zero model
        # reproduces the source box bit for bit
        x = b.x + float(dx) * model.center_jitter_px + (b.w - w) / 2.0
        y = b.y + float(dy) * model.center_jitter_px + (b.h - h) / 2.0
        out.append(KeyFrame(f, BoundingBox(x, y, w, h)))
    return tuple(out)


def _simulate_lineage(
    rng: np.random.Generator,
    model: WorkerModel,
    scope: AnnotationSet,
    root: Track,
    *,
    next_label: int,
    late_start: bool,
    promote_lost_children: bool,
) -> tuple[list[Track], int]:
    """Annotate one object and its progeny as a worker would.

    Missed splits keep the worker on child "-1" as if nothing happened;
    child "-2" is then either promoted to a fresh root (segment tasks, where
    the worker would notice it as a new object) or lost (single-object
    tasks). Returns the produced tracks and the next free display label.
    """
    index = scope.by_id()
    produced: list[Track] = []

    def walk(src: Track, out_id: str, out_label: LineageLabel, parent_out: str | None, delay: int):
        nonlocal next_label
        start = lifetime(src)[0] + delay
        # follow the chain of tracks this worker will treat as one object
        chain = [src]
        promoted: list[Track] = []
        cur = src
        while cur.split is not None and rng.random() < model.missed_split_prob:
            first, second = cur.split.child_ids
            chain.append(index[first])
            if promote_lost_children:
                promoted.append(index[second])
            cur = chain[-1]

        last = chain[-1]
        end = lifetime(last)[1]
        split = last.split
        if split is not None:
            end = split.frame - 1
        if start > end:
            return  # delayed past its whole lifetime: effectively omitted

        spans = [lifetime(t) for t in chain]

        def box_at(f: int) -> BoundingBox:
            for t, (lo, hi) in zip(chain, spans):
                if lo <= f <= hi:
                    return interpolate_box(t, f)
            raise AssertionError(f"frame {f} outside chained lifetimes")

        kfs = _perturbed_keyframes(rng, model, box_at, start, end)
        if split is not None:
            child_out_ids = (f"{out_id}-1", f"{out_id}-2")
            produced.append(
                Track(out_id, out_label, kfs, parent_id=parent_out,
                      split=SplitEvent(split.frame, child_out_ids))
            )
            for n, cid in enumerate(split.child_ids, start=1):
                walk(index[cid], child_out_ids[n - 1], out_label.child(n), out_id, 0)
        else:
            produced.append(Track(out_id, out_label, kfs, parent_id=parent_out, split=None))

        for lost in promoted:
            label = LineageLabel(str(next_label))
            next_label += 1
            walk(lost, str(label), label, None,
                 model.late_start_frames if late_start else 0)

    label = LineageLabel(str(next_label))
    next_label += 1
    walk(root, str(label), label, None, model.late_start_frames if late_start else 0)
    return produced, next_label


def simulate_submission(
    model: WorkerModel,
    task: TaskSpec,
    gt: AnnotationSet,
    worker_id: str | None = None,
) -> Submission:
    """Derive a worker's submission from ground truth plus the model's
    error knobs. Deterministic for a given (model, task, gt) triple."""
    from .merging import slice_annotations

    if gt.video_id != task.video_id:
        raise ValueError(f"gt is for video {gt.video_id!r}, task for {task.video_id!r}")
    rng = _task_rng(model, task.id)
    tracks: list[Track] = []
    next_label = 1

    if isinstance(task.strategy, SingSeg):
        visible = slice_annotations(gt, task.strategy.segment)
        for root in visible.roots():
            if root.parent_id is None and rng.random() < model.omission_prob:
                continue
            produced, next_label = _simulate_lineage(
                rng, model, visible, root,
                next_label=next_label, late_start=True, promote_lost_children=True,
            )
            tracks.extend(produced)
    else:
        prior = task.strategy.prior
        roots = gt.roots()
        annotated = [r for r in roots if is_duplicate(r, prior)]
        fresh = [r for r in roots if not is_duplicate(r, prior)]
        wants_duplicate = rng.random() < model.duplicate_prob
        if wants_duplicate and annotated:
            target = annotated[int(rng.integers(len(annotated)))]
        elif fresh:
            target = fresh[int(rng.integers(len(fresh)))]
        else:
            raise NoObjectsAvailable(
                f"video {gt.video_id!r}: every object is annotated and the worker declined to repeat one"
            )
        tracks, next_label = _simulate_lineage(
            rng, model, gt, target,
            next_label=next_label, late_start=True, promote_lost_children=False,
        )

    keyframes = sum(len(t.key_frames) for t in tracks)
    elapsed = int(45_000 + 1_500 * keyframes + rng.integers(0, 30_000))
    return Submission(
        task_id=task.id,
        worker_id=worker_id if worker_id is not None else f"sim-{model.seed}",
        tracks=tuple(tracks),
        elapsed_ms=elapsed,
    )


def synthesize_ground_truth(
    video: VideoMeta,
    n_objects: int,
    seed: int = 0,
    n_splits: int = 0,
    keyframe_every: int = 40,
) -> AnnotationSet:
    """Synthetic GT: laned boxes with piecewise-linear drift so distinct
    objects never overlap, optionally with binary split events."""
    if n_splits > n_objects:
        raise ValueError("cannot split more objects than exist")
    rng = np.random.default_rng([seed, video.frame_count, n_objects])
    fc = video.frame_count
    lane_h = video.height / (n_objects + 1)
    tracks: list[Track] = []
    for i in range(n_objects):
        h = min(max(14.0, lane_h * 0.45), 80.0)
        w = float(rng.uniform(0.8, 1.6)) * h
        cy = lane_h * (i + 1)
        birth = int(rng.integers(0, max(1, fc // 4)))
        death = int(rng.integers(birth + fc // 2, fc))
        death = min(death, fc - 1)
        frames = list(range(birth, death + 1, keyframe_every))
        if frames[-1] != death:
            frames.append(death)
        x = float(rng.uniform(0, video.width * 0.3))
        vx = float(rng.uniform(0.2, 1.2)) * (1 if rng.random() < 0.5 else -1)
        kfs = []
        for f in frames:
            xx = x + vx * (f - birth)
            xx = min(max(xx, -w / 2), video.width - w / 2)  # may poke past the edge
            kfs.append(KeyFrame(f, BoundingBox(xx, cy - h / 2, w, h)))
        root_id = f"g{i + 1}"
        track = Track(root_id, LineageLabel(str(i + 1)), tuple(kfs))
        if i < n_splits:
            split_at = (birth + death) // 2
            pre = tuple(kf for kf in kfs if kf.frame < split_at)
            if not pre:
                pre = (KeyFrame(birth, kfs[0].box),)
            parent = Track(
                root_id, track.label, pre,
                split=SplitEvent(split_at, (f"{root_id}-1", f"{root_id}-2")),
            )
            tracks.append(parent)
            for n, sign in ((1, -1), (2, 1)):
                child_frames = list(range(split_at, death + 1, keyframe_every))
                if child_frames[-1] != death:
                    child_frames.append(death)
                ch = h * 0.7
                cw = w * 0.7
                ckfs = []
                for f in child_frames:
                    # children diverge but stay inside the parent's lane
                    drift = sign * ch * min(0.35 + 0.02 * (f - split_at), 0.6)
                    base = interpolate_box(track, f)
                    ckfs.append(
                        KeyFrame(f, BoundingBox(base.x, cy - ch / 2 + drift, cw, ch))
                    )
                tracks.append(
                    Track(
                        f"{root_id}-{n}",
                        track.label.child(n),
                        tuple(ckfs),
                        parent_id=root_id,
                    )
                )
        else:
            tracks.append(track)
    return AnnotationSet(video_id=video.id, tracks=tuple(tracks))
