"""Segment planning and identity stitching across segment overlaps.

Long videos are annotated in fixed-length segments that share a small
overlap window. Per-segment annotation sets are merged into whole-video
tracks by matching tracks across each overlap (optimal assignment on
1 - mean IoU) and fusing matched pairs, with the earlier segment owning the
overlap frames.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .assignment import solve_assignment
from .model import (
    AnnotationSet,
    KeyFrame,
    SplitEvent,
    Track,
    VideoMismatch,
    interpolate_box,
    iou,
    lifetime,
)


class BadSegmentParams(ValueError):
    """Segment length/overlap combination cannot tile a video."""


class LengthMismatch(ValueError):
    """Number of annotation sets does not match the segment plan."""


class StitchRule(enum.Enum):
    KEEP_EARLIER_THROUGH_OVERLAP = "keep-earlier-through-overlap"


@dataclass(frozen=True)
class SegmentPlan:
    """Ordered inclusive [start, end] frame intervals covering a video."""

    segments: tuple[tuple[int, int], ...]
    length: int = 320
    overlap: int = 20

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple((int(a), int(b)) for a, b in self.segments))
        if not self.segments:
            raise BadSegmentParams("a plan needs at least one segment")
        for (a0, b0), (a1, b1) in zip(self.segments, self.segments[1:]):
            if a1 <= a0 or b1 <= b0 or a1 > b0:
                raise BadSegmentParams(f"segments [{a0},{b0}] and [{a1},{b1}] do not chain")

    def overlap_interval(self, i: int) -> tuple[int, int]:
        """Shared frames between segments i and i+1."""
        return (self.segments[i + 1][0], self.segments[i][1])


@dataclass(frozen=True)
class MergeConfig:
    min_mean_iou: float = 0.3
    stitch_rule: StitchRule = StitchRule.KEEP_EARLIER_THROUGH_OVERLAP

    def __post_init__(self):
        if not 0.0 <= self.min_mean_iou <= 1.0:
            raise ValueError(f"min_mean_iou must be in [0,1], got {self.min_mean_iou}")


def plan_segments(frame_count: int, length: int = 320, overlap: int = 20) -> SegmentPlan:
    """Tile [0, frame_count) with length-sized segments sharing `overlap`
    frames; the last segment is clipped to the video end."""
    if frame_count <= 0:
        raise BadSegmentParams(f"frame_count must be positive, got {frame_count}")
    if overlap <= 0 or overlap >= length:
        raise BadSegmentParams(f"need 0 < overlap < length, got {overlap}/{length}")
    stride = length - overlap
    segments = []
    start = 0
    while True:
        segments.append((start, min(start + length - 1, frame_count - 1)))
        start += stride
        if start >= frame_count - overlap:
            break
    return SegmentPlan(tuple(segments), length=length, overlap=overlap)


def slice_annotations(aset: AnnotationSet, window: tuple[int, int]) -> AnnotationSet:
    """Restrict a set to what an annotator of `window` would produce.

    Tracks are clipped to the window with interpolated boundary keyframes;
    splits beyond the window are invisible (the parent just continues to the
    window edge) and children of splits before the window become roots.
    """
    a, b = window
    if a > b:
        raise ValueError(f"empty window [{a}, {b}]")
    index = aset.by_id()
    out: list[Track] = []
    for t in aset.tracks:
        start, end = lifetime(t)
        lo, hi = max(start, a), min(end, b)
        if lo > hi:
            continue
        split = t.split
        if split is not None and split.frame > b:
            split = None  # split happens after this window; not visible here
        kfs = [kf for kf in t.key_frames if lo <= kf.frame <= hi]
        if not kfs or kfs[0].frame != lo:
            kfs.insert(0, KeyFrame(lo, interpolate_box(t, lo)))
        if end > b and kfs[-1].frame != hi:
            kfs.append(KeyFrame(hi, interpolate_box(t, hi)))
        parent_id = t.parent_id
        if parent_id is not None:
            parent = index[parent_id]
            if parent.split is not None and parent.split.frame < a:
                parent_id = None  # parent ended before the window; child stands alone
        out.append(Track(id=t.id, label=t.label, key_frames=tuple(kfs), parent_id=parent_id, split=split))
    return AnnotationSet(video_id=aset.video_id, tracks=tuple(out))


def _mean_overlap_iou(a: Track, b: Track, interval: tuple[int, int]) -> float:
    """Mean IoU across all interval frames; frames either track misses count 0."""
    lo, hi = interval
    a_lo, a_hi = lifetime(a)
    b_lo, b_hi = lifetime(b)
    total = 0.0
    for f in range(lo, hi + 1):
        if a_lo <= f <= a_hi and b_lo <= f <= b_hi:
            total += iou(interpolate_box(a, f), interpolate_box(b, f))
    return total / (hi - lo + 1)


def _fresh_id(base: str, taken: set[str]) -> str:
    if base not in taken:
        return base
    k = 2
    while f"{base}:{k}" in taken:
        k += 1
    return f"{base}:{k}"


def merge_pair(
    earlier: AnnotationSet,
    later: AnnotationSet,
    overlap_interval: tuple[int, int],
    cfg: MergeConfig = MergeConfig(),
) -> AnnotationSet:
    """Fuse two consecutive segments' annotations across their overlap.

    Tracks active in the overlap are matched by optimal assignment on
    1 - mean IoU; pairs at or above `cfg.min_mean_iou` become one identity
    (the earlier track's), keeping earlier keyframes through the overlap end
    and appending later keyframes strictly after it. Everything unmatched
    passes through, later tracks under fresh ids on collision.
    """
    if earlier.video_id != later.video_id:
        raise VideoMismatch(f"{earlier.video_id!r} vs {later.video_id!r}")
    o_start, o_end = overlap_interval
    if o_start > o_end:
        raise ValueError(f"empty overlap interval [{o_start}, {o_end}]")

    def active(aset: AnnotationSet) -> list[Track]:
        out = []
        for t in aset.tracks:
            lo, hi = lifetime(t)
            if lo <= o_end and hi >= o_start:
                out.append(t)
        return out

    e_active = active(earlier)
    l_active = active(later)

    fused: list[tuple[Track, Track]] = []
    if e_active and l_active:
        mean_ious = [[_mean_overlap_iou(e, l, overlap_interval) for l in l_active] for e in e_active]
        pairs = solve_assignment([[1.0 - v for v in row] for row in mean_ious])
        fused = [(e_active[i], l_active[j]) for i, j in pairs if mean_ious[i][j] >= cfg.min_mean_iou]

    later_index = later.by_id()
    consumed: dict[str, str] = {}  # later id -> earlier id it fused into
    dropped: set[str] = set()      # later tracks discarded outright
    orphaned: set[str] = set()     # later split children whose split was overruled
    fused_by_earlier: dict[str, tuple[Track, Track]] = {}

    def later_descendants(tid: str) -> list[str]:
        out, queue = [], [tid]
        while queue:
            t = later_index[queue.pop(0)]
            if t.split is not None:
                for cid in t.split.child_ids:
                    if cid in later_index:
                        out.append(cid)
                        queue.append(cid)
        return out

    for e, l in fused:
        consumed[l.id] = e.id
        fused_by_earlier[e.id] = (e, l)
        if e.split is not None and l.split is not None:
            # the earlier segment already resolved this lineage; the later
            # worker's conflicting split (and its subtree) is discarded
            dropped.update(later_descendants(l.id))
        elif e.split is None and l.split is not None and l.split.frame <= o_end:
            # split inside the overlap that the earlier worker did not see:
            # earlier version wins, children live on as independent tracks
            orphaned.update(l.split.child_ids)

    # final ids for surviving later tracks
    taken = {t.id for t in earlier.tracks}
    later_id_map: dict[str, str] = dict(consumed)
    for t in later.tracks:
        if t.id in consumed or t.id in dropped:
            continue
        new_id = _fresh_id(t.id, taken)
        taken.add(new_id)
        later_id_map[t.id] = new_id

    def map_split(split: SplitEvent | None) -> SplitEvent | None:
        if split is None:
            return None
        return SplitEvent(split.frame, tuple(later_id_map[c] for c in split.child_ids))

    out: dict[str, Track] = {}
    for e in earlier.tracks:
        if e.id in fused_by_earlier:
            e, l = fused_by_earlier[e.id]
            if e.split is not None:
                out[e.id] = e
                continue
            kept = tuple(kf for kf in e.key_frames if kf.frame <= o_end)
            appended = tuple(kf for kf in l.key_frames if kf.frame > o_end)
            adopt = l.split if (l.split is not None and l.split.frame > o_end) else None
            out[e.id] = Track(
                id=e.id,
                label=e.label,
                key_frames=kept + appended,
                parent_id=e.parent_id,
                split=map_split(adopt),
            )
        else:
            out[e.id] = e

    # surviving later tracks, parents before children so labels can chain
    pending = [t for t in later.tracks if t.id not in consumed and t.id not in dropped]
    emitted_later: set[str] = set()
    while pending:
        progressed = False
        rest = []
        for t in pending:
            parent_id = t.parent_id
            if t.id in orphaned:
                parent_id = None
            if parent_id is not None:
                mapped_parent = later_id_map.get(parent_id, parent_id)
                if mapped_parent not in out and parent_id not in emitted_later:
                    rest.append(t)
                    continue
                parent_track = out[mapped_parent]
                which = 1 if parent_track.split.child_ids[0] == later_id_map[t.id] else 2
                label = parent_track.label.child(which)
                parent_final = mapped_parent
            else:
                label = t.label
                parent_final = None
            out[later_id_map[t.id]] = Track(
                id=later_id_map[t.id],
                label=label,
                key_frames=t.key_frames,
                parent_id=parent_final,
                split=map_split(t.split),
            )
            emitted_later.add(t.id)
            progressed = True
        pending = rest
        if pending and not progressed:
            raise AssertionError("cyclic or dangling lineage links in later segment")

    return AnnotationSet(video_id=earlier.video_id, tracks=tuple(out.values()))


def merge_chain(
    per_segment: Sequence[AnnotationSet],
    plan: SegmentPlan,
    cfg: MergeConfig = MergeConfig(),
) -> AnnotationSet:
    """Left fold of merge_pair over consecutive segments of the plan."""
    if len(per_segment) != len(plan.segments):
        raise LengthMismatch(f"{len(per_segment)} sets for {len(plan.segments)} segments")
    acc = per_segment[0]
    for i in range(1, len(per_segment)):
        acc = merge_pair(acc, per_segment[i], plan.overlap_interval(i - 1), cfg)
    return acc
