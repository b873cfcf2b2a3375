import json

import numpy as np
import pytest
import torch

from adaptsiam.adapt import init_adapter
from adaptsiam.backbone import init_backbone
from adaptsiam.change import CalibrationStats
from adaptsiam.errors import InvalidBoxError
from adaptsiam.generator import generate_next, init_generator
from adaptsiam.imaging import BBox
from adaptsiam.synthdata import SequenceSpec, generate_sequence
from adaptsiam.tracker import (
    ALL_MODES,
    Models,
    Tracker,
    TrackerConfig,
    TrackerOutput,
    run,
    run_vot_protocol,
    write_trajectory,
)

NEVER = CalibrationStats(0.0, 1e6)  # regularity ~1: never a change
ALWAYS = CalibrationStats(0.0, 1e-9)  # any error drives regularity to 0


@pytest.fixture(scope="module")
def seq():
    spec = SequenceSpec("t", 14, size=(18, 16), velocity=(0.8, -0.4), drift_rate=0.02, clutter_count=1,
                        noise=2.0, seed=11)
    return generate_sequence(spec)


@pytest.fixture(scope="module")
def nets():
    return init_backbone(0), init_generator(4, 0), init_adapter(32, 0)


def models(nets, stats=NEVER):
    return Models(*nets, stats)


def test_config_validation():
    with pytest.raises(ValueError):
        TrackerConfig(alpha=1.5)
    with pytest.raises(ValueError):
        TrackerConfig(tau=1.0)
    with pytest.raises(ValueError):
        TrackerConfig(update_mode="bogus")
    assert len(ALL_MODES) == 6


def test_init_contract(seq, nets):
    frames, anns = seq
    tr = Tracker(models(nets))
    a = tr.init(frames[0], anns[0].gt_box)
    b = tr.init(frames[0], anns[0].gt_box)
    assert torch.equal(a.phi_tilde, a.phi_init)
    assert len(a.buffer) == 4
    assert torch.equal(a.phi_init, b.phi_init) and a.buffer.same_contents(b.buffer)
    with pytest.raises(InvalidBoxError):
        tr.init(frames[0], BBox(500, 500, 10, 10))


def test_frozen_never_touches_generator_or_adapter(seq, nets):
    frames, anns = seq
    tr = Tracker(models(nets), TrackerConfig(update_mode="frozen"))
    state = tr.init(frames[0], anns[0].gt_box)
    for f in frames[1:]:
        state, _ = tr.step(state, f)
        assert torch.equal(state.phi_tilde, state.phi_init)
    assert tr.generator_calls == 0 and tr.adapter_calls == 0
    # frozen needs only the backbone
    Tracker(Models(nets[0]), TrackerConfig(update_mode="frozen"))


def test_modes_require_their_models(nets):
    with pytest.raises(ValueError):
        Tracker(Models(nets[0]), TrackerConfig(update_mode="updatenet_style"))
    with pytest.raises(ValueError):
        Tracker(Models(nets[0], None, nets[2]), TrackerConfig(update_mode="generative"))
    with pytest.raises(ValueError):
        Tracker(Models(*nets, None), TrackerConfig(update_mode="generative+blend+change"))


def test_warmup_then_generation(seq, nets):
    frames, anns = seq
    tr = Tracker(models(nets))
    state = tr.init(frames[0], anns[0].gt_box)
    flags = []
    for f in frames[1:8]:
        state, out = tr.step(state, f)
        flags.append(out.warmup)
        if out.warmup:
            assert out.regularity == 1.0 and not out.change
    assert flags == [True] * 4 + [False] * 3
    assert tr.generator_calls == 3 and tr.adapter_calls == 3


def test_stall_invariant(seq, nets):
    frames, anns = seq
    tr = Tracker(models(nets, ALWAYS))
    state = tr.init(frames[0], anns[0].gt_box)
    changes = 0
    for f in frames[1:]:
        before_phi, before_buf = state.phi_tilde.clone(), state.buffer.copy()
        state, out = tr.step(state, f)
        assert not out.change or out.regularity < 0.5
        if out.change:
            changes += 1
            assert torch.equal(state.phi_tilde, before_phi)
            assert state.buffer.same_contents(before_buf)
    assert changes == len(frames) - 1 - 4


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_alpha_extremes_select_pushed_template(seq, nets, alpha):
    frames, anns = seq
    tr = Tracker(models(nets), TrackerConfig(alpha=alpha))
    state = tr.init(frames[0], anns[0].gt_box)
    for f in frames[1:6]:
        state, _ = tr.step(state, f)
    t_hat = generate_next(nets[1], state.buffer.slots)
    crop = state.last_template.copy()
    state, out = tr.step(state, frames[6])
    assert not out.warmup and not out.change
    assert np.array_equal(state.buffer.newest, t_hat if alpha == 1.0 else crop)


def test_outputs_are_clipped(seq, nets):
    frames, anns = seq
    for mode in ALL_MODES:
        outs = run(frames, anns[0].gt_box, models(nets), TrackerConfig(update_mode=mode))
        for o in outs:
            b = o.bbox
            assert b.w > 0 and b.h > 0
            assert 0 <= b.x and b.x + b.w <= 96 and 0 <= b.y and b.y + b.h <= 96


def test_run_contracts(seq, nets, tmp_path):
    frames, anns = seq
    one = run(frames[:1], anns[0].gt_box, models(nets))
    assert len(one) == 1 and one[0].bbox == anns[0].gt_box
    with pytest.raises(ValueError):
        run([], anns[0].gt_box, models(nets))
    a = run(frames, anns[0].gt_box, models(nets))
    b = run(frames, anns[0].gt_box, models(nets))
    write_trajectory(tmp_path / "a.jsonl", a)
    write_trajectory(tmp_path / "b.jsonl", b)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    rec = json.loads((tmp_path / "a.jsonl").read_text().splitlines()[3])
    assert set(rec) == {"frame", "bbox", "score", "regularity", "change"}


class Playback:
    """Replays scripted boxes; boxes listed in ``misses`` are replaced by a far-away box."""

    def __init__(self, gts, misses=()):
        self.gts, self.misses, self.inits = gts, set(misses), []

    def init(self, frame, box):
        i = len(self.inits) and None
        self.inits.append(box)
        return {"i": self.gts.index(box)}

    def step(self, state, frame):
        i = state["i"] + 1
        box = self.gts[i]
        if i in self.misses:
            box = BBox(box.x + 500, box.y, box.w, box.h)
        return {"i": i}, TrackerOutput(i, box, 1.0)


def _gts(n):
    return [BBox(float(i), 10.0, 5.0, 5.0) for i in range(n)]


def test_vot_playback_has_no_failures():
    gts = _gts(30)
    res = run_vot_protocol([None] * 30, gts, tracker=Playback(gts))
    assert res.failures == 0 and res.reinit_frames == [] and len(res.overlaps) == 30
    assert all(o == 1.0 for o in res.overlaps)


def test_vot_forced_failure_reinits_after_five_frames():
    gts = _gts(30)
    pb = Playback(gts, misses={10})
    res = run_vot_protocol([None] * 30, gts, tracker=pb)
    assert res.failures == 1
    assert res.failure_frames == [10]
    assert res.reinit_frames == [15]
    assert pb.inits[1] == gts[15]
    assert res.overlaps[10:15] == [0.0] * 5
    assert len(res.overlaps) == 30 and len(res.trajectory) == 30
    assert [len(s) for s in res.segments] == [15, 15]


def test_vot_failure_near_end_does_not_reinit():
    gts = _gts(30)
    res = run_vot_protocol([None] * 30, gts, tracker=Playback(gts, misses={26}))
    assert res.failures == 1 and res.reinit_frames == []
    assert len(res.overlaps) == 30


def test_vot_length_mismatch():
    with pytest.raises(ValueError):
        run_vot_protocol([None] * 3, _gts(4), tracker=Playback(_gts(4)))
