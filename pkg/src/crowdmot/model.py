"""Domain model for keyframe-annotated video tracks with lineage support.

A bounding box is an axis-aligned pixel rectangle (top-left corner plus
size, continuous coordinates). A track is one object's lifetime: an ordered
list of keyframes, linearly interpolated in between, optionally ending in a
split event that hands the identity off to exactly two child tracks.

Everything here is an immutable value; all operations are pure functions.
"""

from __future__ import annotations

import math
import re
from bisect import bisect_right
from dataclasses import dataclass, field


class ValidationError(ValueError):
    """An invariant of the domain model was violated."""


class OutOfLifetime(ValidationError):
    """A frame outside the track's lifetime was queried."""


class AlreadySplit(ValidationError):
    """A second split was requested on a track that already has one."""


class FrameBeforeBirth(ValidationError):
    """A split was requested at or before the track's first keyframe."""


class VideoMismatch(ValidationError):
    """Two operands reference different videos."""


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned rectangle: top-left corner (x, y), width w, height h."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if type(v) is not float:
                object.__setattr__(self, name, float(v))  # numpy scalars, ints
            if not math.isfinite(v):
                raise ValidationError(f"box.{name} must be finite, got {v!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"box size must be positive, got w={self.w}, h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0.0 when disjoint."""
    if (b.x, b.y, b.w, b.h) < (a.x, a.y, a.w, a.h):
        a, b = b, a  # canonical order keeps the float result symmetric
    # work relative to b's corner: exact (= 1.0) for identical boxes, where
    # the naive (x + w) - x form picks up rounding error
    ux = a.x - b.x
    uy = a.y - b.y
    ix = min(ux + a.w, b.w) - max(ux, 0.0)
    iy = min(uy + a.h, b.h) - max(uy, 0.0)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return min(1.0, inter / (a.area + b.area - inter))


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    """Euclidean distance between box centers, in pixels."""
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by)


_LABEL_RE = re.compile(r"[1-9][0-9]*(-[12])*")


@dataclass(frozen=True, slots=True, order=True)
class LineageLabel:
    """Display label encoding descent: ``root(-child)*`` with child in {1, 2}.

    A root object is labelled e.g. ``"3"``; when it splits its children are
    ``"3-1"`` and ``"3-2"``, and so on recursively.
    """

    text: str

    def __post_init__(self):
        if not _LABEL_RE.fullmatch(self.text):
            raise ValidationError(f"malformed lineage label {self.text!r}")

    @property
    def depth(self) -> int:
        return self.text.count("-")

    @property
    def parent(self) -> LineageLabel | None:
        if "-" not in self.text:
            return None
        return LineageLabel(self.text.rsplit("-", 1)[0])

    def child(self, which: int) -> LineageLabel:
        if which not in (1, 2):
            raise ValidationError("a split has exactly two children: 1 or 2")
        return LineageLabel(f"{self.text}-{which}")

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True, slots=True)
class KeyFrame:
    """A box pinned by a human (or simulator) to one frame index."""

    frame: int
    box: BoundingBox

    def __post_init__(self):
        if type(self.frame) is not int:
            object.__setattr__(self, "frame", int(self.frame))
        if self.frame < 0:
            raise ValidationError(f"keyframe frame must be >= 0, got {self.frame}")


@dataclass(frozen=True, slots=True)
class SplitEvent:
    """Binary split: at `frame` the parent disappears and two children appear."""

    frame: int
    child_ids: tuple[str, str]

    def __post_init__(self):
        object.__setattr__(self, "child_ids", tuple(self.child_ids))
        if len(self.child_ids) != 2:
            raise ValidationError("splits are binary: exactly two child ids")


@dataclass(frozen=True, slots=True)
class Track:
    """One object's annotated lifetime.

    Keyframes are strictly increasing by frame. If `split` is set, no
    keyframe may sit at or after the split frame: the parent's last visible
    frame is ``split.frame - 1`` and its children take over at
    ``split.frame``.
    """

    id: str
    label: LineageLabel
    key_frames: tuple[KeyFrame, ...]
    parent_id: str | None = None
    split: SplitEvent | None = None

    def __post_init__(self):
        if isinstance(self.label, str):
            object.__setattr__(self, "label", LineageLabel(self.label))
        object.__setattr__(self, "key_frames", tuple(self.key_frames))
        if not self.key_frames:
            raise ValidationError(f"track {self.id!r} has no keyframes")
        frames = [kf.frame for kf in self.key_frames]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValidationError(f"track {self.id!r} keyframes not strictly increasing: {frames}")
        if self.split is not None:
            if self.split.frame <= frames[0]:
                raise FrameBeforeBirth(
                    f"track {self.id!r} split at {self.split.frame} not after first keyframe {frames[0]}"
                )
            if frames[-1] >= self.split.frame:
                raise ValidationError(
                    f"track {self.id!r} has keyframes at or after its split frame {self.split.frame}"
                )

    @property
    def first_frame(self) -> int:
        return self.key_frames[0].frame


def lifetime(track: Track) -> tuple[int, int]:
    """Inclusive [start, end] frame interval during which the track exists.

    A split ends the parent's lifetime at ``split.frame - 1``; otherwise the
    track lives through its last keyframe.
    """
    start = track.key_frames[0].frame
    if track.split is not None:
        return (start, track.split.frame - 1)
    return (start, track.key_frames[-1].frame)


def interpolate_box(track: Track, frame: int) -> BoundingBox:
    """Box at `frame`: exact at keyframes, linear in between, constant after
    the last keyframe up to a pending split."""
    start, end = lifetime(track)
    if frame < start or frame > end:
        raise OutOfLifetime(f"frame {frame} outside track {track.id!r} lifetime [{start}, {end}]")
    kfs = track.key_frames
    i = bisect_right([kf.frame for kf in kfs], frame)
    if i == len(kfs):
        return kfs[-1].box  # between last keyframe and split: hold the box
    if kfs[i - 1].frame == frame:
        return kfs[i - 1].box
    f0, b0 = kfs[i - 1].frame, kfs[i - 1].box
    f1, b1 = kfs[i].frame, kfs[i].box
    a = (frame - f0) / (f1 - f0)
    # b0 + a*(b1-b0) rather than (1-a)*b0 + a*b1: same affine map, but exact
    # when a coordinate is constant across the bracketing keyframes
    return BoundingBox(
        x=b0.x + a * (b1.x - b0.x),
        y=b0.y + a * (b1.y - b0.y),
        w=b0.w + a * (b1.w - b0.w),
        h=b0.h + a * (b1.h - b0.h),
    )


def densify(track: Track) -> dict[int, BoundingBox]:
    """Interpolated box for every frame of the track's lifetime, inclusive."""
    start, end = lifetime(track)
    return {f: interpolate_box(track, f) for f in range(start, end + 1)}


def split_track(
    parent: Track,
    frame: int,
    box_a: BoundingBox,
    box_b: BoundingBox,
    child_ids: tuple[str, str] | None = None,
) -> tuple[Track, Track, Track]:
    """End `parent` at ``frame - 1`` and start two children at `frame`.

    Children are labelled ``parent-1`` / ``parent-2`` and seeded with one
    keyframe each. Parent keyframes at or past the split frame are dropped.
    """
    if parent.split is not None:
        raise AlreadySplit(f"track {parent.id!r} already splits at {parent.split.frame}")
    if frame <= parent.first_frame:
        raise FrameBeforeBirth(
            f"split frame {frame} not after track {parent.id!r} birth {parent.first_frame}"
        )
    ids = child_ids if child_ids is not None else (f"{parent.id}-1", f"{parent.id}-2")
    kept = tuple(kf for kf in parent.key_frames if kf.frame < frame)
    updated = Track(
        id=parent.id,
        label=parent.label,
        key_frames=kept,
        parent_id=parent.parent_id,
        split=SplitEvent(frame=frame, child_ids=ids),
    )
    children = tuple(
        Track(
            id=cid,
            label=parent.label.child(n),
            key_frames=(KeyFrame(frame, box),),
            parent_id=parent.id,
        )
        for n, (cid, box) in enumerate(zip(ids, (box_a, box_b)), start=1)
    )
    return (updated, children[0], children[1])


@dataclass(frozen=True, slots=True)
class VideoMeta:
    """Reference to a video the annotator loads by URL; no decoding here."""

    id: str
    url: str
    frame_count: int
    fps: float
    width: int
    height: int

    def __post_init__(self):
        if self.frame_count <= 0:
            raise ValidationError(f"frame_count must be positive, got {self.frame_count}")
        if self.fps <= 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"video size must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True, slots=True)
class AnnotationSet:
    """All tracks for one video from one source (submission, merge, or GT)."""

    video_id: str
    tracks: tuple[Track, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))
        by_id: dict[str, Track] = {}
        for t in self.tracks:
            if t.id in by_id:
                raise ValidationError(f"duplicate track id {t.id!r}")
            by_id[t.id] = t
        for t in self.tracks:
            if t.parent_id is not None:
                parent = by_id.get(t.parent_id)
                if parent is None:
                    raise ValidationError(f"track {t.id!r} references missing parent {t.parent_id!r}")
                if parent.split is None or t.id not in parent.split.child_ids:
                    raise ValidationError(
                        f"track {t.id!r} claims parent {t.parent_id!r} which does not split into it"
                    )
                if t.first_frame != parent.split.frame:
                    raise ValidationError(
                        f"child {t.id!r} first keyframe {t.first_frame} != parent split frame "
                        f"{parent.split.frame}"
                    )
                if t.label.parent != parent.label:
                    raise ValidationError(
                        f"child {t.id!r} label {t.label} does not extend parent label {parent.label}"
                    )
            if t.split is not None:
                for cid in t.split.child_ids:
                    child = by_id.get(cid)
                    if child is None:
                        raise ValidationError(f"track {t.id!r} split child {cid!r} missing from set")
                    if child.parent_id != t.id:
                        raise ValidationError(
                            f"split child {cid!r} does not point back at parent {t.id!r}"
                        )

    def by_id(self) -> dict[str, Track]:
        return {t.id: t for t in self.tracks}

    def roots(self) -> tuple[Track, ...]:
        return tuple(t for t in self.tracks if t.parent_id is None)

    def descendants(self, track_id: str) -> tuple[Track, ...]:
        """The track's children, their children, and so on, in BFS order."""
        index = self.by_id()
        out: list[Track] = []
        queue = [track_id]
        while queue:
            t = index[queue.pop(0)]
            if t.split is not None:
                for cid in t.split.child_ids:
                    if cid in index:
                        out.append(index[cid])
                        queue.append(cid)
        return tuple(out)
