#!/usr/bin/env python3
"""Two rounds of single-object tasks over a video collection.

Round 0 workers see a bare video; round 1 workers see the accepted object
from round 0 read-only. Prints the per-round raw and filtered aggregates
(the classic four-row comparison: first-round, first-round-filtered,
second-round, second-round-filtered).
"""

import argparse

from crowdmot.pipelines import demo_corpus, run_iterative_workflow
from crowdmot.simulator import WorkerModel
from crowdmot.workflow import RoundConfig, round_report_rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--videos", type=int, default=8)
    parser.add_argument("--redundancy", type=int, default=5)
    parser.add_argument("--auc-filter", type=float, default=0.4)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    corpus = demo_corpus(n_videos=args.videos, seed=13)
    model = WorkerModel(
        late_start_frames=8,
        center_jitter_px=2.0,
        size_jitter_frac=0.08,
        keyframe_stride=25,
        duplicate_prob=0.2,
        missed_split_prob=0.1,
    )
    cfg = RoundConfig(
        redundancy=args.redundancy, auc_filter=args.auc_filter, max_rounds=2
    )
    videos = [v for v, _ in corpus]
    gts = {v.id: gt for v, gt in corpus}
    _, outcomes = run_iterative_workflow(videos, gts, model, cfg, seed=args.seed)

    print(f"{'set':<18} {'videos':>6} {'AUC':>7} {'TrAcc':>7} {'Precision':>9}")
    for outcome in outcomes:
        for row in round_report_rows(outcome):
            print(
                f"{row['set']:<18} {row['videos']:>6} {row['mean_auc']:>7.3f} "
                f"{row['mean_tracc']:>7.3f} {row['mean_precision20']:>9.3f}"
            )
        if outcome.stopped:
            print(f"  stopped propagation: {sorted(outcome.stopped)}")
        if outcome.filtered_out:
            print(f"  filtered out: {sorted(outcome.filtered_out)}")


if __name__ == "__main__":
    main()
