"""End-to-end simulated annotation pipelines for the two task designs.

These compose the library the way an operator would: generate tasks, gather
redundant simulated submissions, select the best per task, then either
merge per-segment sets into whole-video tracks (segment design) or iterate
single-object rounds until every object is covered or propagation stops.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .merging import MergeConfig, merge_chain, plan_segments, slice_annotations
from .metrics import evaluate_video
from .model import AnnotationSet, VideoMeta
from .simulator import WorkerModel, simulate_submission, synthesize_ground_truth
from .taskgen import gen_singseg_tasks
from .workflow import (
    RoundConfig,
    RoundOutcome,
    WorkflowState,
    advance_round,
    round_tasks,
    select_best,
    start_state,
)


def _worker(model: WorkerModel, seed: int, slot: int) -> WorkerModel:
    return replace(model, seed=seed * 1009 + slot * 101)


def run_singseg_pipeline(
    video: VideoMeta,
    gt: AnnotationSet,
    model: WorkerModel,
    redundancy: int = 3,
    seed: int = 0,
    segment_length: int = 320,
    segment_overlap: int = 20,
    merge_cfg: MergeConfig = MergeConfig(),
    round_cfg: RoundConfig | None = None,
) -> AnnotationSet:
    """Segment design: per segment, redundant submissions, best-by-AUC
    selection against the segment's slice of ground truth, then a chain
    merge across overlaps."""
    cfg = round_cfg if round_cfg is not None else RoundConfig(redundancy=redundancy)
    plan = plan_segments(video.frame_count, segment_length, segment_overlap)
    tasks = gen_singseg_tasks(video, plan, redundancy)
    per_segment: list[AnnotationSet] = []
    for i, task in enumerate(tasks):
        subs = [
            simulate_submission(_worker(model, seed, k), task, gt, worker_id=f"w{k}")
            for k in range(redundancy)
        ]
        gt_segment = slice_annotations(gt, plan.segments[i])
        best = select_best(subs, gt_segment, cfg)
        per_segment.append(AnnotationSet(video_id=video.id, tracks=best.tracks))
    return merge_chain(per_segment, plan, merge_cfg)


def run_iterative_workflow(
    videos: list[VideoMeta],
    ground_truth: dict[str, AnnotationSet],
    model: WorkerModel,
    cfg: RoundConfig,
    seed: int = 0,
) -> tuple[WorkflowState, list[RoundOutcome]]:
    """Single-object design: iterate rounds over every video until each is
    stopped, filtered out, or has had as many rounds as it has objects."""
    state = start_state(videos, ground_truth)
    outcomes: list[RoundOutcome] = []
    while state.active:
        tasks = round_tasks(state, cfg)
        subs = {
            task.video_id: [
                simulate_submission(
                    _worker(model, seed, k), task, ground_truth[task.video_id], worker_id=f"w{k}"
                )
                for k in range(cfg.redundancy)
            ]
            for task in tasks
        }
        state, outcome, _ = advance_round(state, subs, cfg)
        outcomes.append(outcome)
    return state, outcomes


def run_singobj_pipeline(
    video: VideoMeta,
    gt: AnnotationSet,
    model: WorkerModel,
    redundancy: int = 3,
    seed: int = 0,
    round_cfg: RoundConfig | None = None,
) -> AnnotationSet:
    cfg = round_cfg if round_cfg is not None else RoundConfig(redundancy=redundancy)
    state, _ = run_iterative_workflow([video], {video.id: gt}, model, cfg, seed)
    return state.accepted[video.id]


@dataclass(frozen=True)
class PipelineComparison:
    singseg_auc: float
    singobj_auc: float
    per_video: dict[str, tuple[float, float]]


def compare_pipelines(
    corpus: list[tuple[VideoMeta, AnnotationSet]],
    model: WorkerModel,
    redundancy: int = 3,
    seed: int = 0,
) -> PipelineComparison:
    """Run both pipelines on the same corpus with the same worker model and
    report mean-of-video mean AUCs."""
    per_video: dict[str, tuple[float, float]] = {}
    for video, gt in corpus:
        seg = run_singseg_pipeline(video, gt, model, redundancy=redundancy, seed=seed)
        obj = run_singobj_pipeline(video, gt, model, redundancy=redundancy, seed=seed)
        per_video[video.id] = (
            evaluate_video(seg, gt).mean_auc,
            evaluate_video(obj, gt).mean_auc,
        )
    n = len(per_video)
    return PipelineComparison(
        singseg_auc=sum(a for a, _ in per_video.values()) / n,
        singobj_auc=sum(b for _, b in per_video.values()) / n,
        per_video=per_video,
    )


def demo_corpus(n_videos: int = 5, seed: int = 7) -> list[tuple[VideoMeta, AnnotationSet]]:
    """Five-ish synthetic videos, 5-8 objects over 1000-2000 frames, one
    video with a split lineage."""
    import numpy as np

    rng = np.random.default_rng(seed)
    corpus = []
    for i in range(n_videos):
        frame_count = int(rng.integers(1000, 2001))
        n_objects = int(rng.integers(5, 9))
        video = VideoMeta(
            id=f"video{i + 1}",
            url=f"https://videos.example/video{i + 1}.mp4",
            frame_count=frame_count,
            fps=30.0,
            width=1280,
            height=720,
        )
        gt = synthesize_ground_truth(
            video, n_objects, seed=seed * 131 + i, n_splits=1 if i == 0 else 0
        )
        corpus.append((video, gt))
    return corpus
