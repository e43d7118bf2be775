#!/usr/bin/env python3
"""Regenerate the shared interpolation test vectors for the browser client.

The engine densifies a handful of seeded tracks and the exact results are
frozen into frontend/tests/fixtures/interpolation.json; the client's
interpolation must agree within 1e-6 per coordinate.
"""

import json
from pathlib import Path

import numpy as np

from crowdmot.model import BoundingBox, KeyFrame, SplitEvent, Track, densify

OUT = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures" / "interpolation.json"


def track_doc(t: Track) -> dict:
    doc = {
        "id": t.id,
        "label": str(t.label),
        "key_frames": [
            {"frame": kf.frame, "x": kf.box.x, "y": kf.box.y, "w": kf.box.w, "h": kf.box.h}
            for kf in t.key_frames
        ],
    }
    if t.split is not None:
        doc["split"] = {"frame": t.split.frame, "children": list(t.split.child_ids)}
    return doc


def main():
    rng = np.random.default_rng(606)
    cases = []
    for case_no in range(12):
        n_kf = int(rng.integers(2, 6))
        frames = sorted(rng.choice(np.arange(0, 300), size=n_kf, replace=False).tolist())
        kfs = tuple(
            KeyFrame(
                int(f),
                BoundingBox(*(float(v) for v in rng.uniform((0, 0, 2, 2), (900, 500, 200, 200)))),
            )
            for f in frames
        )
        split = None
        if case_no % 4 == 0:
            split = SplitEvent(frames[-1] + int(rng.integers(2, 20)), ("a", "b"))
        track = Track(id=f"t{case_no}", label="1", key_frames=kfs, split=split)
        doc = track_doc(track)
        expected = {
            str(f): [b.x, b.y, b.w, b.h] for f, b in densify(track).items()
        }
        cases.append({"track": doc, "expected": expected})
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(cases, indent=1))
    print(f"wrote {len(cases)} cases to {OUT}")


if __name__ == "__main__":
    main()
