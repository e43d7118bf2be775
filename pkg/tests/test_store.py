import json
import threading

import numpy as np
import pytest

from crowdmot.merging import plan_segments
from crowdmot.model import AnnotationSet, SplitEvent, densify
from crowdmot.store import (
    MotParseError,
    NonMonotonicFrames,
    RecordNotFound,
    SchemaViolation,
    StateConflict,
    Store,
    VersionMismatch,
    annotations_from_doc,
    annotations_to_doc,
    curve_csv,
    export_lineage_csv,
    export_mot_csv,
    import_mot_csv,
    submission_from_dict,
    submission_to_dict,
    task_from_dict,
    task_to_dict,
    worker_model_from_dict,
)
from crowdmot.simulator import WorkerModel, synthesize_ground_truth
from crowdmot.taskgen import Submission, TaskState, gen_singobj_round, gen_singseg_tasks

from conftest import aset, bb, make_track, static_track, video


def random_annotation_set(rng, video_id="v", with_split=True):
    n = int(rng.integers(1, 5))
    tracks = []
    for i in range(n):
        birth = int(rng.integers(0, 20))
        frames = sorted(set([birth] + [int(f) for f in rng.integers(birth + 1, 60, size=3)]))
        kfs = [
            (f, float(rng.uniform(-50, 900)), float(rng.uniform(-50, 500)),
             float(rng.uniform(0.5, 120)), float(rng.uniform(0.5, 120)))
            for f in frames
        ]
        tracks.append(make_track(f"t{i}", kfs, label=str(i + 1)))
    if with_split and rng.random() < 0.5:
        host = tracks[0]
        split_at = host.key_frames[-1].frame + int(rng.integers(1, 10))
        tracks[0] = make_track(
            host.id,
            [(kf.frame, kf.box.x, kf.box.y, kf.box.w, kf.box.h) for kf in host.key_frames],
            label=str(host.label),
            split=SplitEvent(split_at, (f"{host.id}-1", f"{host.id}-2")),
        )
        for k in (1, 2):
            tracks.append(
                make_track(
                    f"{host.id}-{k}",
                    [(split_at, float(rng.uniform(0, 500)), float(rng.uniform(0, 300)),
                      float(rng.uniform(1, 60)), float(rng.uniform(1, 60))),
                     (split_at + 30, float(rng.uniform(0, 500)), float(rng.uniform(0, 300)),
                      float(rng.uniform(1, 60)), float(rng.uniform(1, 60)))],
                    label=f"{host.label}-{k}",
                    parent_id=host.id,
                )
            )
    return AnnotationSet(video_id=video_id, tracks=tuple(tracks))


class TestNativeDocument:
    def test_empty_set_round_trips(self):
        s = AnnotationSet(video_id="v")
        doc = annotations_to_doc(s)
        assert doc["tracks"] == []
        assert annotations_from_doc(doc) == s

    def test_two_level_lineage_round_trips(self):
        root = make_track(
            "1", [(0, 0, 0, 10, 10), (49, 0, 0, 10, 10)], label="1",
            split=SplitEvent(50, ("1-1", "1-2")),
        )
        c11 = static_track("1-1", 50, 200, bb(0, 0, 8, 8), label="1-1", parent_id="1")
        c12 = make_track(
            "1-2", [(50, 20, 0, 8, 8), (99, 20, 0, 8, 8)], label="1-2", parent_id="1",
            split=SplitEvent(100, ("1-2-1", "1-2-2")),
        )
        c121 = static_track("1-2-1", 100, 200, bb(20, -10, 6, 6), label="1-2-1", parent_id="1-2")
        c122 = static_track("1-2-2", 100, 200, bb(20, 10, 6, 6), label="1-2-2", parent_id="1-2")
        s = aset("v", root, c11, c12, c121, c122)
        loaded = annotations_from_doc(json.loads(json.dumps(annotations_to_doc(s))))
        assert loaded == s
        by_id = loaded.by_id()
        assert by_id["1-2"].split.child_ids == ("1-2-1", "1-2-2")
        assert str(by_id["1-2-2"].label) == "1-2-2"

    def test_child_birth_mismatch_is_schema_violation(self):
        doc = {
            "schema_version": 1,
            "video_id": "v",
            "tracks": [
                {"id": "p", "label": "1", "split": {"frame": 50, "children": ["a", "b"]},
                 "key_frames": [{"frame": 0, "x": 0, "y": 0, "w": 5, "h": 5}]},
                {"id": "a", "label": "1-1", "parent_id": "p",
                 "key_frames": [{"frame": 51, "x": 0, "y": 0, "w": 5, "h": 5}]},
                {"id": "b", "label": "1-2", "parent_id": "p",
                 "key_frames": [{"frame": 50, "x": 0, "y": 0, "w": 5, "h": 5}]},
            ],
        }
        with pytest.raises(SchemaViolation):
            annotations_from_doc(doc)

    def test_unknown_field_strict_vs_lenient(self):
        doc = annotations_to_doc(aset("v", static_track("t", 0, 5, bb(0, 0, 4, 4))))
        doc["tracks"][0]["color"] = "red"
        with pytest.raises(SchemaViolation) as err:
            annotations_from_doc(doc, strict=True)
        assert "$.tracks[0]" in str(err.value)
        assert annotations_from_doc(doc, strict=False).tracks[0].id == "t"

    def test_version_mismatch(self):
        doc = annotations_to_doc(AnnotationSet(video_id="v"))
        doc["schema_version"] = 99
        with pytest.raises(VersionMismatch):
            annotations_from_doc(doc)

    def test_seeded_corpus_round_trips(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            s = random_annotation_set(rng)
            assert annotations_from_doc(json.loads(json.dumps(annotations_to_doc(s)))) == s


class TestMotCsv:
    def test_single_row_example(self):
        s = import_mot_csv("1,3,10,20,30,40,1,-1,-1,-1\n", video_id="v")
        assert len(s.tracks) == 1
        t = s.tracks[0]
        assert t.id == "3"
        assert t.key_frames[0].frame == 0
        box = t.key_frames[0].box
        assert (box.x, box.y, box.w, box.h) == (10.0, 20.0, 30.0, 40.0)

    def test_empty_file(self):
        assert import_mot_csv("", video_id="v").tracks == ()

    def test_parse_error_carries_line_number(self):
        with pytest.raises(MotParseError) as err:
            import_mot_csv("1,1,0,0,10,10,1,-1,-1,-1\nnot,a,row\n", video_id="v")
        assert err.value.line_no == 2

    def test_non_monotonic_frames(self):
        text = "5,1,0,0,10,10,1,-1,-1,-1\n4,1,0,0,10,10,1,-1,-1,-1\n"
        with pytest.raises(NonMonotonicFrames):
            import_mot_csv(text, video_id="v")

    def test_round_trip_densifies_identically(self):
        rng = np.random.default_rng(555)
        for _ in range(30):
            s = random_annotation_set(rng, with_split=False)
            back = import_mot_csv(export_mot_csv(s), video_id="v")
            # non-numeric ids are remapped to 1..n in track order on export
            originals = {str(n): t for n, t in enumerate(s.tracks, start=1)}
            assert len(back.tracks) == len(s.tracks)
            for t in back.tracks:
                dense_in = densify(originals[t.id])
                dense_out = densify(t)
                assert dense_in.keys() == dense_out.keys()
                for f, box in dense_in.items():
                    got = dense_out[f]
                    assert (got.x, got.y, got.w, got.h) == pytest.approx(
                        (box.x, box.y, box.w, box.h), abs=1e-9
                    )

    def test_split_export_warns_and_writes_sidecar(self):
        parent = make_track(
            "1", [(0, 0, 0, 10, 10), (49, 0, 0, 10, 10)], label="1",
            split=SplitEvent(50, ("1-1", "1-2")),
        )
        c1 = static_track("1-1", 50, 99, bb(0, -15, 8, 8), label="1-1", parent_id="1")
        c2 = static_track("1-2", 50, 99, bb(0, 15, 8, 8), label="1-2", parent_id="1")
        s = aset("v", parent, c1, c2)
        with pytest.warns(UserWarning):
            text = export_mot_csv(s)
        assert text
        sidecar = export_lineage_csv(s)
        rows = [line.split(",") for line in sidecar.strip().splitlines()]
        assert len(rows) == 2
        assert all(r[2] == "50" for r in rows)

    def test_curve_csv_layout(self):
        text = curve_csv((0.0, 0.5, 1.0), (1.0, 0.5, 0.0))
        lines = text.strip().splitlines()
        assert lines[0] == "threshold,value"
        assert len(lines) == 4


class TestRecordConverters:
    def test_task_round_trip_singseg(self):
        v = video("v", frame_count=1000)
        task = gen_singseg_tasks(v, plan_segments(1000, 320, 20), 3)[1]
        assert task_from_dict(json.loads(json.dumps(task_to_dict(task)))) == task

    def test_task_round_trip_singobj_with_prior(self):
        v = video("v")
        prior = aset("v", static_track("t", 0, 50, bb(0, 0, 10, 10)))
        task = gen_singobj_round(v, prior, round=2, redundancy=5)
        assert task_from_dict(json.loads(json.dumps(task_to_dict(task)))) == task

    def test_submission_round_trip(self):
        sub = Submission(
            task_id="task", worker_id="w9",
            tracks=(static_track("1", 0, 30, bb(5, 5, 12, 12)),),
            elapsed_ms=120000, feedback="tricky video",
        )
        assert submission_from_dict(json.loads(json.dumps(submission_to_dict(sub)))) == sub

    def test_worker_model_from_config(self):
        model = worker_model_from_dict({"seed": 3, "center_jitter_px": 2.0})
        assert model == WorkerModel(seed=3, center_jitter_px=2.0)
        with pytest.raises(SchemaViolation):
            worker_model_from_dict({"سpeed": 1})


class TestStoreTree:
    def test_task_write_read_identical(self, tmp_path):
        store = Store(tmp_path)
        v = video("v", frame_count=640)
        task = gen_singseg_tasks(v, plan_segments(640, 320, 20), 3)[0]
        store.save_task(0, task)
        assert store.load_task(0, task.id) == task

    def test_missing_record(self, tmp_path):
        with pytest.raises(RecordNotFound):
            Store(tmp_path).load_task(0, "nope")

    def test_video_duplicate_registration_conflicts(self, tmp_path):
        store = Store(tmp_path)
        store.save_video(video("v"), overwrite=False)
        with pytest.raises(StateConflict):
            store.save_video(video("v"), overwrite=False)

    def test_ground_truth_round_trip(self, tmp_path):
        store = Store(tmp_path)
        gt = synthesize_ground_truth(video("v", frame_count=500), 3, seed=1)
        store.save_ground_truth(gt)
        assert store.load_ground_truth("v") == gt

    def test_concurrent_slot_claims_one_winner(self, tmp_path):
        store = Store(tmp_path)
        v = video("v", frame_count=320)
        task = gen_singseg_tasks(v, plan_segments(320, 320, 20), 1)[0]
        store.save_task(0, task)
        results = []
        barrier = threading.Barrier(8)

        def claim(worker):
            barrier.wait()
            results.append(store.claim_slot(0, task.id, worker))

        threads = [threading.Thread(target=claim, args=(f"w{i}",)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        tickets = [r for r in results if r is not None]
        assert len(tickets) == 1

    def test_expired_ticket_reoffered(self, tmp_path):
        fake_now = [1000.0]
        store = Store(tmp_path, clock=lambda: fake_now[0], ticket_ttl_s=60.0)
        v = video("v", frame_count=320)
        task = gen_singseg_tasks(v, plan_segments(320, 320, 20), 1)[0]
        store.save_task(0, task)
        first = store.claim_slot(0, task.id, "w1")
        assert first is not None
        assert store.claim_slot(0, task.id, "w2") is None  # saturated
        fake_now[0] += 61.0
        second = store.claim_slot(0, task.id, "w2")
        assert second is not None and second.slot == first.slot

    def test_same_worker_not_issued_two_live_tickets(self, tmp_path):
        store = Store(tmp_path)
        v = video("v", frame_count=320)
        task = gen_singseg_tasks(v, plan_segments(320, 320, 20), 3)[0]
        store.save_task(0, task)
        store.claim_slot(0, task.id, "w1")
        with pytest.raises(StateConflict):
            store.claim_slot(0, task.id, "w1")

    def test_submission_completes_task(self, tmp_path):
        store = Store(tmp_path)
        v = video("v", frame_count=320)
        task = gen_singseg_tasks(v, plan_segments(320, 320, 20), 2)[0]
        store.save_task(0, task)
        for w in ("w1", "w2"):
            ticket = store.claim_slot(0, task.id, w)
            sub = Submission(
                task_id=task.id, worker_id=w,
                tracks=(static_track("1", 0, 319, bb(0, 0, 10, 10)),),
            )
            store.record_submission(0, ticket, sub)
        assert store.load_task(0, task.id).state is TaskState.COMPLETE
        assert len(store.list_submissions(0, task.id)) == 2

    def test_double_submission_same_slot_conflicts(self, tmp_path):
        store = Store(tmp_path)
        v = video("v", frame_count=320)
        task = gen_singseg_tasks(v, plan_segments(320, 320, 20), 2)[0]
        store.save_task(0, task)
        ticket = store.claim_slot(0, task.id, "w1")
        sub = Submission(task_id=task.id, worker_id="w1",
                         tracks=(static_track("1", 0, 319, bb(0, 0, 10, 10)),))
        store.record_submission(0, ticket, sub)
        with pytest.raises(StateConflict):
            store.record_submission(0, ticket, sub)

    def test_hundred_interleaved_writes_all_intact(self, tmp_path):
        store = Store(tmp_path)
        v = video("v", frame_count=5000)
        plan = plan_segments(5000, 320, 20)
        tasks = gen_singseg_tasks(v, plan, 2)[:16]
        errors = []

        def write(task):
            try:
                store.save_task(0, task)
            except Exception as e:  # noqa: BLE001
                errors.append(e)

        # interleave writers over 100 distinct records
        all_tasks = [
            gen_singobj_round(video(f"v{k}"), AnnotationSet(video_id=f"v{k}"), 0, 3)
            for k in range(100)
        ]
        threads = [threading.Thread(target=write, args=(t,)) for t in all_tasks]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        listed = store.list_tasks(0)
        assert len(listed) == 100
        assert {t.id for t in listed} == {t.id for t in all_tasks}

    def test_accepted_and_reports_round_trip(self, tmp_path):
        store = Store(tmp_path)
        acc = aset("v", static_track("1", 0, 99, bb(0, 0, 10, 10)))
        store.save_accepted(0, acc)
        assert store.load_accepted(0, "v") == acc
        assert store.latest_accepted("v") == acc
        rows = [{"set": "round0", "videos": 1, "mean_auc": 0.9,
                 "mean_tracc": 1.0, "mean_precision20": 1.0}]
        store.save_round_report(0, rows)
        assert store.list_round_reports() == rows
