"""Round orchestration: redundancy selection, AUC filtering, stop rule.

Each iterative round posts one single-object task per live video. When all
redundancy slots are in, the best non-duplicate submission (highest mean
AUC against ground truth, or an operator callback) joins the video's
accepted set; videos whose newest object scores under the AUC filter leave
the rotation, and a video whose submissions ALL duplicate existing objects
stops propagating tasks altogether.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .merging import _fresh_id
from .metrics import CurveConfig, evaluate_video, match_tracks_to_gt, score_track
from .model import AnnotationSet, LineageLabel, SplitEvent, Track, VideoMeta
from .taskgen import Submission, TaskSpec, gen_singobj_round, is_duplicate


class NoSubmissions(ValueError):
    """select_best was called with an empty submission list."""


class RoundIncomplete(RuntimeError):
    """A round was advanced before every live video filled its redundancy."""


class SelectionMode(enum.Enum):
    BEST_AUC_VS_GROUND_TRUTH = "best-auc-vs-ground-truth"
    EXTERNAL_SUPERVISOR = "external-supervisor"


class FilterMode(enum.Enum):
    NEWEST_OBJECT = "newest-object"
    SET_MEAN = "set-mean"


@dataclass(frozen=True)
class RoundConfig:
    auc_filter: float = 0.4
    redundancy: int = 5
    selection: SelectionMode = SelectionMode.BEST_AUC_VS_GROUND_TRUTH
    filter_mode: FilterMode = FilterMode.NEWEST_OBJECT
    duplicate_threshold: float = 0.5
    max_rounds: int | None = None  # None: capped at the video's GT object count
    supervisor: Callable[[Sequence[Submission]], Submission] | None = None
    curve_cfg: CurveConfig = field(default_factory=CurveConfig)

    def __post_init__(self):
        if not 0.0 <= self.auc_filter <= 1.0:
            raise ValueError(f"auc_filter must be in [0,1], got {self.auc_filter}")
        if self.selection is SelectionMode.EXTERNAL_SUPERVISOR and self.supervisor is None:
            raise ValueError("external-supervisor selection needs a supervisor callback")


@dataclass(frozen=True)
class VideoRoundScore:
    """Quality of the object a video gained this round."""

    auc: float
    tracc: float
    precision20: float


@dataclass(frozen=True)
class RoundOutcome:
    round: int
    accepted: dict[str, AnnotationSet]  # videos that passed the filter
    filtered_out: frozenset[str]
    stopped: frozenset[str]
    scores: dict[str, VideoRoundScore]


@dataclass(frozen=True)
class WorkflowState:
    videos: dict[str, VideoMeta]
    ground_truth: dict[str, AnnotationSet]
    accepted: dict[str, AnnotationSet]
    active: frozenset[str]
    stopped: frozenset[str]
    round: int = 0


def start_state(
    videos: Sequence[VideoMeta], ground_truth: Mapping[str, AnnotationSet]
) -> WorkflowState:
    return WorkflowState(
        videos={v.id: v for v in videos},
        ground_truth=dict(ground_truth),
        accepted={v.id: AnnotationSet(video_id=v.id) for v in videos},
        active=frozenset(v.id for v in videos),
        stopped=frozenset(),
    )


def round_tasks(state: WorkflowState, cfg: RoundConfig) -> list[TaskSpec]:
    """Single-object tasks for every video still in rotation."""
    return [
        gen_singobj_round(state.videos[v], state.accepted[v], state.round, cfg.redundancy)
        for v in sorted(state.active)
    ]


def select_best(
    submissions: Sequence[Submission], gt: AnnotationSet | None, cfg: RoundConfig
) -> Submission:
    """The submission with the highest mean AUC against ground truth (or the
    supervisor's pick); ties go to the earliest submission."""
    if not submissions:
        raise NoSubmissions("no submissions to select from")
    if cfg.selection is SelectionMode.EXTERNAL_SUPERVISOR:
        return cfg.supervisor(submissions)
    if gt is None:
        raise ValueError("ground-truth-based selection needs a ground truth set")
    best = None
    best_auc = -1.0
    for sub in submissions:  # list order is arrival order
        pred = AnnotationSet(video_id=gt.video_id, tracks=sub.tracks)
        mean_auc = evaluate_video(pred, gt, cfg.curve_cfg).mean_auc
        if mean_auc > best_auc:
            best, best_auc = sub, mean_auc
    return best


def filter_round(
    scores: Mapping[str, float], threshold: float
) -> tuple[frozenset[str], frozenset[str]]:
    """Keep videos scoring at or above the threshold; the boundary stays."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0,1], got {threshold}")
    kept = frozenset(v for v, s in scores.items() if s >= threshold)
    return kept, frozenset(scores) - kept


def append_object(accepted: AnnotationSet, tracks: Sequence[Track]) -> AnnotationSet:
    """Add a newly accepted object (root plus progeny) to a video's set,
    renaming ids on collision and relabeling the lineage to the next free
    display number."""
    taken = {t.id for t in accepted.tracks}
    id_map: dict[str, str] = {}
    for t in tracks:
        new_id = _fresh_id(t.id, taken)
        taken.add(new_id)
        id_map[t.id] = new_id
    # renumber from the count of distinct root lineages already present
    next_root = len({t.label.text.split("-")[0] for t in accepted.tracks}) + 1
    relabeled: dict[str, LineageLabel] = {}

    def relabel(t: Track) -> LineageLabel:
        if t.parent_id is None:
            suffix = t.label.text.split("-", 1)
            tail = ("-" + suffix[1]) if len(suffix) > 1 else ""
            return LineageLabel(f"{next_root}{tail}")
        parent_label = relabeled[t.parent_id]
        which = 1 if t.label.text.endswith("-1") else 2
        return parent_label.child(which)

    out = list(accepted.tracks)
    for t in tracks:  # callers pass parents before children
        label = relabel(t)
        relabeled[t.id] = label
        out.append(
            Track(
                id=id_map[t.id],
                label=label,
                key_frames=t.key_frames,
                parent_id=id_map[t.parent_id] if t.parent_id is not None else None,
                split=SplitEvent(t.split.frame, tuple(id_map[c] for c in t.split.child_ids))
                if t.split is not None
                else None,
            )
        )
    return AnnotationSet(video_id=accepted.video_id, tracks=tuple(out))


def _new_object_score(
    tracks: Sequence[Track], gt: AnnotationSet, cfg: RoundConfig
) -> VideoRoundScore:
    """Mean per-track quality of one submission's tracks against their
    geometrically matched GT tracks (unmatched tracks score zero)."""
    pred = AnnotationSet(video_id=gt.video_id, tracks=tuple(tracks))
    matching = match_tracks_to_gt(pred, gt)
    by_pred = {p: g for g, p in matching.items() if p is not None}
    gt_by_id = gt.by_id()
    aucs, traccs, precs = [], [], []
    for t in tracks:
        g = by_pred.get(t.id)
        if g is None:
            aucs.append(0.0), traccs.append(0.0), precs.append(0.0)
        else:
            s = score_track(t, gt_by_id[g], cfg.curve_cfg)
            aucs.append(s.auc), traccs.append(s.tracc), precs.append(s.precision20)
    return VideoRoundScore(
        auc=float(np.mean(aucs)) if aucs else 0.0,
        tracc=float(np.mean(traccs)) if traccs else 0.0,
        precision20=float(np.mean(precs)) if precs else 0.0,
    )


def _set_mean_score(accepted: AnnotationSet, gt: AnnotationSet, cfg: RoundConfig) -> VideoRoundScore:
    return _new_object_score(accepted.tracks, gt, cfg)


def _round_cap(state: WorkflowState, cfg: RoundConfig, video_id: str) -> int:
    if cfg.max_rounds is not None:
        return cfg.max_rounds
    gt = state.ground_truth.get(video_id)
    if gt is None:
        raise ValueError(f"no max_rounds configured and no ground truth for {video_id!r}")
    return len(gt.roots())


def advance_round(
    state: WorkflowState,
    new_submissions: Mapping[str, Sequence[Submission]],
    cfg: RoundConfig,
) -> tuple[WorkflowState, RoundOutcome, list[TaskSpec]]:
    """Fold one completed round into the project state.

    Per live video: discard duplicate submissions, accept the best of the
    rest (stop the video when every submission was a duplicate), then drop
    videos whose new object scored under the AUC filter. Returns the next
    state, the round outcome, and the next round's tasks.
    """
    for v in state.active:
        got = len(new_submissions.get(v, ()))
        if got < cfg.redundancy:
            raise RoundIncomplete(
                f"video {v!r} has {got} of {cfg.redundancy} submissions for round {state.round}"
            )

    accepted = dict(state.accepted)
    newly_stopped: set[str] = set()
    scores: dict[str, VideoRoundScore] = {}

    for v in sorted(state.active):
        subs = list(new_submissions[v])
        gt = state.ground_truth.get(v)
        fresh = []
        n_duplicates = 0
        for sub in subs:
            roots = [t for t in sub.tracks if t.parent_id is None]
            if roots and all(
                is_duplicate(r, accepted[v], cfg.duplicate_threshold) for r in roots
            ):
                n_duplicates += 1
            elif sub.tracks:
                fresh.append(sub)
        if n_duplicates == len(subs):
            newly_stopped.add(v)
            continue
        if not fresh:
            continue  # nothing usable, video stays in rotation
        best = select_best(fresh, gt, cfg)
        accepted[v] = append_object(accepted[v], best.tracks)
        if gt is not None:
            if cfg.filter_mode is FilterMode.SET_MEAN:
                scores[v] = _set_mean_score(accepted[v], gt, cfg)
            else:
                scores[v] = _new_object_score(best.tracks, gt, cfg)

    kept, removed = filter_round({v: s.auc for v, s in scores.items()}, cfg.auc_filter)

    next_active = set()
    for v in state.active:
        if v in newly_stopped or v in removed:
            continue
        if state.round + 1 >= _round_cap(state, cfg, v):
            continue
        next_active.add(v)

    next_state = replace(
        state,
        accepted=accepted,
        active=frozenset(next_active),
        stopped=state.stopped | frozenset(newly_stopped),
        round=state.round + 1,
    )
    outcome = RoundOutcome(
        round=state.round,
        accepted={v: accepted[v] for v in kept},
        filtered_out=removed,
        stopped=frozenset(newly_stopped),
        scores=scores,
    )
    return next_state, outcome, round_tasks(next_state, cfg)


def round_report_rows(outcome: RoundOutcome) -> list[dict]:
    """Two aggregate rows per round: every scored video, then the filtered
    survivors; the shape a two-round run reports as raw/filtered pairs."""
    def row(name: str, videos: Sequence[str]) -> dict:
        picked = [outcome.scores[v] for v in videos]
        return {
            "set": name,
            "videos": len(picked),
            "mean_auc": float(np.mean([s.auc for s in picked])) if picked else 0.0,
            "mean_tracc": float(np.mean([s.tracc for s in picked])) if picked else 0.0,
            "mean_precision20": float(np.mean([s.precision20 for s in picked])) if picked else 0.0,
        }

    scored = sorted(outcome.scores)
    kept = sorted(set(outcome.accepted))
    return [
        row(f"round{outcome.round}", scored),
        row(f"round{outcome.round}-filtered", kept),
    ]
