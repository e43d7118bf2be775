from crowdmot.model import AnnotationSet, BoundingBox, KeyFrame, Track, VideoMeta


def bb(x, y, w, h):
    return BoundingBox(float(x), float(y), float(w), float(h))


def make_track(tid, kfs, label=None, parent_id=None, split=None):
    """kfs: iterable of (frame, x, y, w, h)."""
    return Track(
        id=tid,
        label=label if label is not None else "1",
        key_frames=tuple(KeyFrame(f, bb(x, y, w, h)) for f, x, y, w, h in kfs),
        parent_id=parent_id,
        split=split,
    )


def static_track(tid, lo, hi, box, label=None, parent_id=None, split=None):
    """A track holding one box from frame lo through hi."""
    kfs = [(lo, box.x, box.y, box.w, box.h)]
    if hi > lo:
        kfs.append((hi, box.x, box.y, box.w, box.h))
    return make_track(tid, kfs, label=label, parent_id=parent_id, split=split)


def video(vid="v1", frame_count=1000, width=1280, height=720):
    return VideoMeta(
        id=vid,
        url=f"https://videos.example/{vid}.mp4",
        frame_count=frame_count,
        fps=30.0,
        width=width,
        height=height,
    )


def aset(vid, *tracks):
    return AnnotationSet(video_id=vid, tracks=tuple(tracks))
