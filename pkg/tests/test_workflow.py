import pytest

from crowdmot.metrics import evaluate_video
from crowdmot.model import AnnotationSet
from crowdmot.simulator import WorkerModel, simulate_submission, synthesize_ground_truth
from crowdmot.taskgen import SingObj, Submission
from crowdmot.workflow import (
    FilterMode,
    NoSubmissions,
    RoundConfig,
    RoundIncomplete,
    SelectionMode,
    advance_round,
    append_object,
    filter_round,
    round_report_rows,
    round_tasks,
    select_best,
    start_state,
)

from conftest import aset, bb, static_track, video


def _submission(tracks, task_id="t", worker="w"):
    return Submission(task_id=task_id, worker_id=worker, tracks=tuple(tracks))


class TestSelectBest:
    def _gt(self):
        return aset("v", static_track("g", 0, 99, bb(0, 0, 20, 20)))

    def test_argmax_of_three(self):
        gt = self._gt()
        # offsets degrade IoU progressively
        subs = [
            _submission([static_track("a", 0, 99, bb(0, 14, 20, 20))], worker="w1"),
            _submission([static_track("b", 0, 99, bb(0, 1, 20, 20))], worker="w2"),
            _submission([static_track("c", 0, 99, bb(0, 6, 20, 20))], worker="w3"),
        ]
        aucs = [
            evaluate_video(aset("v", s.tracks[0]), gt).mean_auc for s in subs
        ]
        assert aucs[1] == max(aucs)
        best = select_best(subs, gt, RoundConfig())
        assert best.worker_id == "w2"

    def test_single_submission(self):
        gt = self._gt()
        sub = _submission([static_track("a", 0, 99, bb(0, 0, 20, 20))])
        assert select_best([sub], gt, RoundConfig()) is sub

    def test_tie_goes_to_earliest(self):
        gt = self._gt()
        same = static_track("a", 0, 99, bb(0, 2, 20, 20))
        first = _submission([same], worker="early")
        second = _submission([same], worker="late")
        assert select_best([first, second], gt, RoundConfig()).worker_id == "early"

    def test_empty_list(self):
        with pytest.raises(NoSubmissions):
            select_best([], self._gt(), RoundConfig())

    def test_external_supervisor(self):
        subs = [
            _submission([static_track("a", 0, 9, bb(0, 0, 5, 5))], worker="w1"),
            _submission([static_track("b", 0, 9, bb(0, 0, 5, 5))], worker="w2"),
        ]
        cfg = RoundConfig(
            selection=SelectionMode.EXTERNAL_SUPERVISOR, supervisor=lambda s: s[-1]
        )
        assert select_best(subs, None, cfg).worker_id == "w2"


class TestFilterRound:
    def test_boundary_is_kept(self):
        kept, removed = filter_round({"a": 0.39, "b": 0.40, "c": 0.41}, 0.4)
        assert kept == {"b", "c"}
        assert removed == {"a"}

    def test_all_below(self):
        kept, removed = filter_round({"a": 0.1, "b": 0.2}, 0.4)
        assert kept == frozenset()
        assert removed == {"a", "b"}

    def test_empty(self):
        assert filter_round({}, 0.4) == (frozenset(), frozenset())

    def test_partitions_input(self):
        scores = {f"v{i}": i / 10 for i in range(10)}
        kept, removed = filter_round(scores, 0.55)
        assert kept | removed == set(scores)
        assert kept & removed == frozenset()


class TestAppendObject:
    def test_relabels_to_next_root_number(self):
        acc = aset("v", static_track("old", 0, 50, bb(0, 0, 5, 5), label="1"))
        out = append_object(acc, [static_track("1", 0, 60, bb(0, 100, 5, 5), label="1")])
        labels = sorted(str(t.label) for t in out.tracks)
        assert labels == ["1", "2"]

    def test_renames_colliding_ids(self):
        acc = aset("v", static_track("1", 0, 50, bb(0, 0, 5, 5), label="1"))
        out = append_object(acc, [static_track("1", 0, 60, bb(0, 100, 5, 5), label="1")])
        assert len({t.id for t in out.tracks}) == 2


def _two_video_state(n_objects=2, frames=600):
    v1, v2 = video("v1", frame_count=frames), video("v2", frame_count=frames)
    gts = {
        "v1": synthesize_ground_truth(v1, n_objects, seed=41),
        "v2": synthesize_ground_truth(v2, n_objects, seed=42),
    }
    return start_state([v1, v2], gts), gts


class TestAdvanceRound:
    def test_happy_path_accepts_and_continues(self):
        state, gts = _two_video_state()
        cfg = RoundConfig(redundancy=2, auc_filter=0.4)
        tasks = round_tasks(state, cfg)
        assert [t.strategy.round for t in tasks] == [0, 0]
        subs = {
            t.video_id: [
                simulate_submission(WorkerModel(seed=100 + k), t, gts[t.video_id], worker_id=f"w{k}")
                for k in range(2)
            ]
            for t in tasks
        }
        next_state, outcome, next_tasks = advance_round(state, subs, cfg)
        assert set(outcome.accepted) == {"v1", "v2"}
        assert outcome.filtered_out == frozenset()
        assert outcome.stopped == frozenset()
        assert all(len(s.tracks) >= 1 for s in outcome.accepted.values())
        assert {t.video_id for t in next_tasks} == {"v1", "v2"}
        assert all(t.strategy.round == 1 for t in next_tasks)
        # the accepted object rides along as the next round's prior
        for t in next_tasks:
            assert isinstance(t.strategy, SingObj)
            assert len(t.strategy.prior.tracks) >= 1

    def test_round_incomplete(self):
        state, gts = _two_video_state()
        cfg = RoundConfig(redundancy=3)
        tasks = round_tasks(state, cfg)
        subs = {
            t.video_id: [simulate_submission(WorkerModel(seed=1), t, gts[t.video_id])]
            for t in tasks
        }
        with pytest.raises(RoundIncomplete):
            advance_round(state, subs, cfg)

    def test_all_duplicates_stops_video(self):
        state, gts = _two_video_state()
        cfg = RoundConfig(redundancy=2)
        tasks = round_tasks(state, cfg)
        subs = {
            t.video_id: [
                simulate_submission(WorkerModel(seed=200 + k), t, gts[t.video_id])
                for k in range(2)
            ]
            for t in tasks
        }
        state1, _, tasks1 = advance_round(state, subs, cfg)
        # round 1: every worker re-annotates an existing object on v1
        dup_model = WorkerModel(seed=300, duplicate_prob=1.0)
        subs1 = {}
        for t in tasks1:
            if t.video_id == "v1":
                subs1["v1"] = [
                    simulate_submission(WorkerModel(seed=300 + k, duplicate_prob=1.0), t, gts["v1"])
                    for k in range(2)
                ]
            else:
                subs1["v2"] = [
                    simulate_submission(WorkerModel(seed=310 + k), t, gts["v2"])
                    for k in range(2)
                ]
        state2, outcome1, tasks2 = advance_round(state1, subs1, cfg)
        assert outcome1.stopped == {"v1"}
        assert "v1" in state2.stopped
        assert all(t.video_id != "v1" for t in tasks2)
        # a stopped video never reappears
        assert "v1" not in state2.active

    def test_low_auc_filters_video_out(self):
        state, gts = _two_video_state()
        cfg = RoundConfig(redundancy=1, auc_filter=0.4)
        tasks = round_tasks(state, cfg)
        subs = {}
        for t in tasks:
            if t.video_id == "v1":
                model = WorkerModel(seed=400, center_jitter_px=200.0, keyframe_stride=5)
            else:
                model = WorkerModel(seed=401)
            subs[t.video_id] = [simulate_submission(model, t, gts[t.video_id])]
        _, outcome, next_tasks = advance_round(state, subs, cfg)
        assert outcome.scores["v1"].auc < 0.4 <= outcome.scores["v2"].auc
        assert outcome.filtered_out == {"v1"}
        assert set(outcome.accepted) == {"v2"}
        assert {t.video_id for t in next_tasks} == {"v2"}

    def test_accepted_sets_grow_monotonically(self):
        state, gts = _two_video_state(n_objects=3, frames=700)
        cfg = RoundConfig(redundancy=2)
        seen = {v: 0 for v in state.videos}
        while state.active:
            tasks = round_tasks(state, cfg)
            subs = {
                t.video_id: [
                    simulate_submission(
                        WorkerModel(seed=500 + 10 * state.round + k), t, gts[t.video_id]
                    )
                    for k in range(2)
                ]
                for t in tasks
            }
            state, outcome, _ = advance_round(state, subs, cfg)
            for v, acc in state.accepted.items():
                assert len(acc.tracks) >= seen[v]
                seen[v] = len(acc.tracks)
        # round cap: at most one object accepted per round per video
        assert state.round <= 3

    def test_round_report_rows_shape(self):
        state, gts = _two_video_state()
        cfg = RoundConfig(redundancy=1)
        tasks = round_tasks(state, cfg)
        subs = {
            t.video_id: [simulate_submission(WorkerModel(seed=600), t, gts[t.video_id])]
            for t in tasks
        }
        _, outcome, _ = advance_round(state, subs, cfg)
        rows = round_report_rows(outcome)
        assert [r["set"] for r in rows] == ["round0", "round0-filtered"]
        assert rows[0]["videos"] == 2
        assert 0.0 <= rows[0]["mean_auc"] <= 1.0
