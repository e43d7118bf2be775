"""Microtask generation for the two task decompositions.

SingSeg: one worker annotates every object inside one temporal segment.
SingObj: one worker annotates a single object (and its progeny) across the
whole video, optionally shown the objects accepted in earlier rounds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .merging import SegmentPlan
from .metrics import _boxes_over, _iou_per_frame
from .model import AnnotationSet, Track, VideoMeta, VideoMismatch, lifetime

DUPLICATE_MEAN_IOU = 0.5


class TaskState(enum.Enum):
    OPEN = "open"
    COMPLETE = "complete"
    STOPPED = "stopped"


@dataclass(frozen=True)
class SingSeg:
    segment: tuple[int, int]


@dataclass(frozen=True)
class SingObj:
    round: int
    prior: AnnotationSet

    def __post_init__(self):
        if self.round < 0:
            raise ValueError(f"round must be >= 0, got {self.round}")


@dataclass(frozen=True)
class TaskSpec:
    id: str
    video_id: str
    strategy: SingSeg | SingObj
    redundancy: int
    state: TaskState = TaskState.OPEN

    def __post_init__(self):
        if self.redundancy < 1:
            raise ValueError(f"redundancy must be >= 1, got {self.redundancy}")
        if isinstance(self.strategy, SingObj) and self.strategy.prior.video_id != self.video_id:
            raise VideoMismatch(
                f"task video {self.video_id!r} vs prior video {self.strategy.prior.video_id!r}"
            )


@dataclass(frozen=True)
class Submission:
    """One worker's response to a task, with effort metadata."""

    task_id: str
    worker_id: str
    tracks: tuple[Track, ...]
    elapsed_ms: int = 0
    feedback: str | None = None
    keyframe_count: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))
        total = sum(len(t.key_frames) for t in self.tracks)
        if self.keyframe_count is None:
            object.__setattr__(self, "keyframe_count", total)
        elif self.keyframe_count != total:
            raise ValueError(f"keyframe_count {self.keyframe_count} != actual total {total}")
        if self.elapsed_ms < 0:
            raise ValueError(f"elapsed_ms must be >= 0, got {self.elapsed_ms}")


def gen_singseg_tasks(video: VideoMeta, plan: SegmentPlan, redundancy: int) -> list[TaskSpec]:
    """One open task per plan segment, each wanting `redundancy` submissions."""
    if plan.segments[-1][1] != video.frame_count - 1:
        raise ValueError(
            f"plan ends at frame {plan.segments[-1][1]} but video {video.id!r} has "
            f"{video.frame_count} frames"
        )
    return [
        TaskSpec(
            id=f"{video.id}-seg{i:03d}",
            video_id=video.id,
            strategy=SingSeg(segment=seg),
            redundancy=redundancy,
        )
        for i, seg in enumerate(plan.segments)
    ]


def gen_singobj_round(
    video: VideoMeta, accepted: AnnotationSet, round: int, redundancy: int
) -> TaskSpec:
    """The next single-object task, showing previously accepted tracks as a
    read-only prior (empty at round 0)."""
    if accepted.video_id != video.id:
        raise VideoMismatch(f"accepted set for {accepted.video_id!r}, video is {video.id!r}")
    return TaskSpec(
        id=f"{video.id}-obj-r{round:02d}",
        video_id=video.id,
        strategy=SingObj(round=round, prior=accepted),
        redundancy=redundancy,
    )


def shared_lifetime_iou(a: Track, b: Track) -> float:
    """Mean IoU over the intersection of two tracks' lifetimes; 0 if the
    lifetimes never coincide."""
    a_lo, a_hi = lifetime(a)
    b_lo, b_hi = lifetime(b)
    lo, hi = max(a_lo, b_lo), min(a_hi, b_hi)
    if lo > hi:
        return 0.0
    ious = _iou_per_frame(_boxes_over(a, lo, hi), _boxes_over(b, lo, hi))
    return float(np.mean(ious))


def is_duplicate(
    candidate: Track, accepted: AnnotationSet, threshold: float = DUPLICATE_MEAN_IOU
) -> bool:
    """True iff the candidate shadows some accepted track: mean IoU over
    their shared lifetime at or above the threshold."""
    return any(shared_lifetime_iou(candidate, t) >= threshold for t in accepted.tracks)
