"""Tracking-quality evaluation: success/precision curves, AUC, TrAcc.

Each predicted track is scored against one ground-truth track over the GT
track's lifetime. The success curve sweeps an IoU threshold over a 101-point
grid (strict inequality, so its value at threshold 0 is the fraction of
frames with any overlap at all: TrAcc); AUC is the mean of the sampled
curve. The precision curve sweeps a center-distance threshold 0..50 px
(inclusive comparison) and is conventionally reported at 20 px.

Predictions are paired with ground truth by optimal assignment on geometric
overlap; unmatched ground-truth tracks score zero and still count toward
the video means, so unannotated objects depress the aggregate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import solve_assignment
from .model import AnnotationSet, Track, VideoMismatch, lifetime


class EmptyGT(ValueError):
    """Ground-truth track has an empty lifetime (impossible for valid tracks)."""


def _default_iou_grid() -> tuple[float, ...]:
    return tuple(i / 100 for i in range(101))


def _default_dist_grid() -> tuple[float, ...]:
    return tuple(float(d) for d in range(51))


@dataclass(frozen=True)
class CurveConfig:
    """Threshold grids for the success and precision sweeps."""

    iou_thresholds: tuple[float, ...] = field(default_factory=_default_iou_grid)
    dist_thresholds: tuple[float, ...] = field(default_factory=_default_dist_grid)
    precision_cutoff: float = 20.0

    def __post_init__(self):
        for name in ("iou_thresholds", "dist_thresholds"):
            grid = getattr(self, name)
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if self.precision_cutoff not in self.dist_thresholds:
            raise ValueError(f"precision cutoff {self.precision_cutoff} not on the distance grid")

    @property
    def cutoff_index(self) -> int:
        return self.dist_thresholds.index(self.precision_cutoff)


@dataclass(frozen=True)
class TrackScore:
    auc: float
    tracc: float
    precision20: float
    success_curve: tuple[float, ...]
    precision_curve: tuple[float, ...]
    matched: bool

    @staticmethod
    def zero(cfg: CurveConfig) -> TrackScore:
        return TrackScore(
            auc=0.0,
            tracc=0.0,
            precision20=0.0,
            success_curve=(0.0,) * len(cfg.iou_thresholds),
            precision_curve=(0.0,) * len(cfg.dist_thresholds),
            matched=False,
        )


@dataclass(frozen=True)
class MetricsReport:
    video_id: str
    per_track: dict[str, TrackScore]
    mean_auc: float
    mean_tracc: float
    mean_precision20: float
    matched_count: int
    unmatched_count: int


def _box_rows(track: Track) -> tuple[np.ndarray, np.ndarray]:
    kf_f = np.array([kf.frame for kf in track.key_frames], dtype=float)
    kf_b = np.array([[kf.box.x, kf.box.y, kf.box.w, kf.box.h] for kf in track.key_frames])
    return kf_f, kf_b

def _interp_boxes(track: Track, frames: np.ndarray) -> np.ndarray:
    """(N, 4) interpolated boxes; frames must lie inside the track lifetime.

    Computes the same per-coordinate affine form as interpolate_box, in the
    same operation order, so results agree bitwise with the scalar path.
    """
    kf_f, kf_b = _box_rows(track)
    if len(kf_f) == 1:
        return np.repeat(kf_b, len(frames), axis=0)
    i = np.searchsorted(kf_f, frames, side="right")
    i = np.clip(i, 1, len(kf_f) - 1)
    f0 = kf_f[i - 1]
    f1 = kf_f[i]
    a = ((frames - f0) / (f1 - f0))[:, None]
    out = kf_b[i - 1] + a * (kf_b[i] - kf_b[i - 1])  # same form as interpolate_box
    past_end = frames > kf_f[-1]
    if past_end.any():
        out[past_end] = kf_b[-1]  # frames past the last keyframe hold its box exactly
    return out


def _boxes_over(track: Track, lo: int, hi: int) -> np.ndarray:
    """(hi-lo+1, 4) boxes with NaN rows on frames the track does not cover."""
    out = np.full((hi - lo + 1, 4), np.nan)
    t_lo, t_hi = lifetime(track)
    s, e = max(t_lo, lo), min(t_hi, hi)
    if s > e:
        return out
    out[s - lo : e - lo + 1] = _interp_boxes(track, np.arange(s, e + 1, dtype=float))
    return out


def _iou_per_frame(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Frame-wise IoU of two (N, 4) box arrays; NaN rows contribute 0.

    Same translated-frame form as model.iou so identical boxes score an
    exact 1.0."""
    with np.errstate(invalid="ignore"):
        ux = a[:, 0] - b[:, 0]
        uy = a[:, 1] - b[:, 1]
        ix = np.minimum(ux + a[:, 2], b[:, 2]) - np.maximum(ux, 0.0)
        iy = np.minimum(uy + a[:, 3], b[:, 3]) - np.maximum(uy, 0.0)
        inter = ix * iy
        union = a[:, 2] * a[:, 3] + b[:, 2] * b[:, 3] - inter
        vals = np.minimum(inter / union, 1.0)
    vals = np.where((ix > 0) & (iy > 0), vals, 0.0)
    return np.nan_to_num(vals, nan=0.0)


def _gt_frame_ious(pred: Track, gt: Track) -> np.ndarray:
    lo, hi = lifetime(gt)
    if hi < lo:
        raise EmptyGT(f"gt track {gt.id!r} has an empty lifetime")
    gt_boxes = _interp_boxes(gt, np.arange(lo, hi + 1, dtype=float))
    pred_boxes = _boxes_over(pred, lo, hi)
    return _iou_per_frame(pred_boxes, gt_boxes)


def _gt_frame_dists(pred: Track, gt: Track) -> np.ndarray:
    """Center distance per GT-lifetime frame; +inf where pred is absent."""
    lo, hi = lifetime(gt)
    gt_boxes = _interp_boxes(gt, np.arange(lo, hi + 1, dtype=float))
    pred_boxes = _boxes_over(pred, lo, hi)
    dx = (pred_boxes[:, 0] + pred_boxes[:, 2] / 2.0) - (gt_boxes[:, 0] + gt_boxes[:, 2] / 2.0)
    dy = (pred_boxes[:, 1] + pred_boxes[:, 3] / 2.0) - (gt_boxes[:, 1] + gt_boxes[:, 3] / 2.0)
    d = np.hypot(dx, dy)
    return np.where(np.isnan(d), np.inf, d)


def success_curve(pred: Track, gt: Track, cfg: CurveConfig = CurveConfig()) -> tuple[float, ...]:
    """Fraction of GT-lifetime frames with IoU strictly above each grid
    threshold; frames the prediction misses count as IoU 0."""
    ious = _gt_frame_ious(pred, gt)
    thr = np.asarray(cfg.iou_thresholds)
    return tuple(float(v) for v in np.mean(ious[None, :] > thr[:, None], axis=1))


def auc(curve: tuple[float, ...]) -> float:
    """Mean of the sampled success values (the curve's area)."""
    return float(np.mean(np.asarray(curve)))


def tracc(pred: Track, gt: Track) -> float:
    """Fraction of GT-lifetime frames with nonzero overlap; equals the
    success curve's value at threshold 0."""
    ious = _gt_frame_ious(pred, gt)
    return float(np.mean(ious > 0.0))


def precision_curve(pred: Track, gt: Track, cfg: CurveConfig = CurveConfig()) -> tuple[float, ...]:
    """Fraction of GT-lifetime frames with center distance within each grid
    threshold (inclusive); missed frames count as infinitely far."""
    dists = _gt_frame_dists(pred, gt)
    thr = np.asarray(cfg.dist_thresholds)
    return tuple(float(v) for v in np.mean(dists[None, :] <= thr[:, None], axis=1))


def precision_at(curve: tuple[float, ...], distance: float = 20.0, cfg: CurveConfig = CurveConfig()) -> float:
    return curve[cfg.dist_thresholds.index(distance)]


def mean_track_iou(pred: Track, gt: Track) -> float:
    """Mean IoU over the GT track's lifetime (0 on frames pred misses)."""
    return float(np.mean(_gt_frame_ious(pred, gt)))


def match_tracks_to_gt(pred: AnnotationSet, gt: AnnotationSet) -> dict[str, str | None]:
    """Pair GT tracks with predicted tracks by optimal geometric assignment.

    Cost is 1 - mean IoU over the GT lifetime; pairs with zero overlap are
    left unmatched. Each predicted track is used at most once.
    """
    if pred.video_id != gt.video_id:
        raise VideoMismatch(f"{pred.video_id!r} vs {gt.video_id!r}")
    out: dict[str, str | None] = {t.id: None for t in gt.tracks}
    if not pred.tracks or not gt.tracks:
        return out
    overlaps = [[mean_track_iou(p, g) for p in pred.tracks] for g in gt.tracks]
    pairs = solve_assignment([[1.0 - v for v in row] for row in overlaps])
    for i, j in pairs:
        if overlaps[i][j] > 0.0:
            out[gt.tracks[i].id] = pred.tracks[j].id
    return out


def score_track(pred: Track, gt: Track, cfg: CurveConfig = CurveConfig()) -> TrackScore:
    """Full per-track score card for one matched pred/GT pair."""
    s_curve = success_curve(pred, gt, cfg)
    p_curve = precision_curve(pred, gt, cfg)
    return TrackScore(
        auc=auc(s_curve),
        tracc=s_curve[0],
        precision20=p_curve[cfg.cutoff_index],
        success_curve=s_curve,
        precision_curve=p_curve,
        matched=True,
    )


def evaluate_video(
    pred: AnnotationSet, gt: AnnotationSet, cfg: CurveConfig = CurveConfig()
) -> MetricsReport:
    """Score every GT track (zeros when unmatched) and aggregate means.

    Split children are independent GT tracks; a prediction that misses a
    split keeps following one object past the GT parent's lifetime end and
    pays for it through the children it leaves uncovered.
    """
    if pred.video_id != gt.video_id:
        raise VideoMismatch(f"{pred.video_id!r} vs {gt.video_id!r}")
    matching = match_tracks_to_gt(pred, gt)
    pred_by_id = pred.by_id()
    per_track: dict[str, TrackScore] = {}
    for g in gt.tracks:
        p_id = matching[g.id]
        if p_id is None:
            per_track[g.id] = TrackScore.zero(cfg)
        else:
            per_track[g.id] = score_track(pred_by_id[p_id], g, cfg)
    n = len(gt.tracks)
    scores = list(per_track.values())
    return MetricsReport(
        video_id=gt.video_id,
        per_track=per_track,
        mean_auc=float(np.mean([s.auc for s in scores])) if n else 0.0,
        mean_tracc=float(np.mean([s.tracc for s in scores])) if n else 0.0,
        mean_precision20=float(np.mean([s.precision20 for s in scores])) if n else 0.0,
        matched_count=sum(1 for s in scores if s.matched),
        unmatched_count=sum(1 for s in scores if not s.matched),
    )
