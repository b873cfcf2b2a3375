import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptsiam.errors import DatasetFormatError
from adaptsiam.synthdata import (
    SequenceSpec,
    drift_suite,
    generate_sequence,
    occluder_masks,
    occlusion_suite,
    read_dataset,
    read_pnm,
    read_sequence,
    read_spec,
    synthesize,
    training_suite,
    write_pnm,
    write_sequence,
)


def test_static_sequence_repeats_frames():
    frames, anns = generate_sequence(SequenceSpec("s", 6))
    assert all(np.array_equal(frames[0], f) for f in frames[1:])
    assert all(a.gt_box == anns[0].gt_box for a in anns)
    assert not any(a.occluded or a.drift_event for a in anns)


def test_generation_is_deterministic():
    spec = SequenceSpec("d", 20, velocity=(1.0, 0.5), drift_rate=0.05, occlusions=[(5, 9, 0.6)],
                        clutter_count=2, noise=3.0, seed=4)
    a, b = generate_sequence(spec), generate_sequence(spec)
    assert all(np.array_equal(x, y) for x, y in zip(a[0], b[0]))
    assert a[1] == b[1]
    other = generate_sequence(SequenceSpec(**{**spec.__dict__, "seed": 5}))
    assert not all(np.array_equal(x, y) for x, y in zip(a[0], other[0]))


def test_occluded_flags_match_interval():
    spec = SequenceSpec("o", 80, velocity=(0.3, 0.0), occlusions=[(50, 60, 0.7)], seed=1)
    _, anns = generate_sequence(spec)
    assert [a.frame_index for a in anns if a.occluded] == list(range(50, 60))


@pytest.mark.parametrize("coverage", [0.3, 0.6, 0.9, 1.0])
def test_occluder_covers_requested_fraction(coverage):
    spec = SequenceSpec("c", 30, size=(18.0, 22.0), velocity=(0.7, -0.4), occlusions=[(10, 20, coverage)], seed=3)
    _, anns = generate_sequence(spec)
    masks = occluder_masks(spec)
    side = spec.frame_side
    centers = np.arange(side) + 0.5
    for t in range(10, 20):
        b = anns[t].gt_box
        inside = np.outer((centers >= b.y) & (centers < b.y + b.h), (centers >= b.x) & (centers < b.x + b.w))
        assert masks[t][inside].mean() >= coverage - 1e-9


@settings(max_examples=10)
@given(st.integers(0, 2**31 - 1))
def test_suite_boxes_stay_in_frame(seed):
    for spec in drift_suite(seed, count=2, length=90) + occlusion_suite(seed, count=1, length=150):
        _, anns = generate_sequence(spec)
        for a in anns:
            b = a.gt_box
            assert b.x >= 0 and b.y >= 0 and b.x + b.w <= spec.frame_side and b.y + b.h <= spec.frame_side


def test_suites_shapes():
    assert len(training_suite(0)) == 60 and len(drift_suite(0)) == 20 and len(occlusion_suite(0)) == 10
    assert all(len(s.occlusions) == 4 for s in occlusion_suite(0))
    assert [s.to_json() for s in drift_suite(3)] == [s.to_json() for s in drift_suite(3)]
    with pytest.raises(ValueError, match="too short"):
        occlusion_suite(0, length=60)
    with pytest.raises(ValueError):
        SequenceSpec("bad", 10, occlusions=[(5, 12, 0.5)])


def test_round_trip(tmp_path):
    spec = SequenceSpec("r", 8, velocity=(1.0, 1.0), occlusions=[(2, 4, 0.5)], noise=2.0, seed=9)
    frames, anns = generate_sequence(spec)
    write_sequence(tmp_path / "r", frames, anns, spec)
    back_frames, back_anns = read_sequence(tmp_path / "r")
    assert all(np.array_equal(x, y) for x, y in zip(frames, back_frames))
    assert back_anns == anns
    assert read_spec(tmp_path / "r") == spec
    synthesize(tmp_path / "ds", [spec])
    assert list(read_dataset(tmp_path / "ds")) == ["r"]


def test_pnm_round_trip_and_truncation(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    write_pnm(tmp_path / "a.pnm", img)
    assert np.array_equal(read_pnm(tmp_path / "a.pnm"), img)
    rgb = np.arange(24, dtype=np.uint8).reshape(2, 4, 3)
    write_pnm(tmp_path / "c.pnm", rgb)
    assert np.array_equal(read_pnm(tmp_path / "c.pnm"), rgb)
    data = (tmp_path / "a.pnm").read_bytes()
    (tmp_path / "b.pnm").write_bytes(data[:-3])
    with pytest.raises(DatasetFormatError, match="truncated"):
        read_pnm(tmp_path / "b.pnm")
    (tmp_path / "h.pnm").write_bytes(b"P5\n4")
    with pytest.raises(DatasetFormatError):
        read_pnm(tmp_path / "h.pnm")


def test_missing_annotation_field_is_named(tmp_path):
    frames, anns = generate_sequence(SequenceSpec("m", 2))
    write_sequence(tmp_path / "m", frames, anns)
    path = tmp_path / "m" / "annotations.jsonl"
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    del rec["occluded"]
    path.write_text(lines[0] + "\n" + json.dumps(rec) + "\n")
    with pytest.raises(DatasetFormatError, match=r"annotations.jsonl:2: missing field 'occluded'"):
        read_sequence(tmp_path / "m")


def test_missing_frame_file(tmp_path):
    frames, anns = generate_sequence(SequenceSpec("f", 3))
    write_sequence(tmp_path / "f", frames, anns)
    (tmp_path / "f" / "frame_000002.pnm").unlink()
    with pytest.raises(DatasetFormatError, match="missing frame"):
        read_sequence(tmp_path / "f")
