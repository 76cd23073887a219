import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import make_traj, x_steps
from motion_lingua import reference
from motion_lingua.core import AxisConvention, PipelineConfig
from motion_lingua.detector import DetectorVerdict, positions_from_normalized
from motion_lingua.renderer import (
    STOP,
    AxisActivation,
    MalformedMotionString,
    MotionLabel,
    annotate_arrays,
    annotate_episode,
    annotate_episodes,
    annotate_trajectory,
    canonical_string,
    code_index,
    codes_from_label,
    label_from_codes,
    parse_label,
    render_label,
    string_table,
)

MOVING = DetectorVerdict(True, False, False)
STILL = DetectorVerdict(False, False, False)


def render(verdict, acc, before=True, after=True, thr=0.02, cfg=None):
    act = AxisActivation.from_thresholds(acc, [thr] * 6, before, after)
    return str(render_label(verdict, act, cfg or PipelineConfig()))


def test_below_threshold_is_stop():
    assert render(STILL, (0.001, 0, 0, 0, 0, 0)) == "stop"


def test_move_forward_down():
    assert render(MOVING, (0.05, 0.001, -0.03, 0.001, 0.0, 0.0)) == "move forward down"


def test_full_word_order():
    got = render(MOVING, (0.0, 0.0, 0.03, 0.0, -0.04, 0.05), before=True, after=False)
    assert got == "move up tilt down rotate counterclockwise close gripper"


def test_dominant_axis_fallback():
    assert render(MOVING, (0.001, -0.015, 0.002, 0, 0, 0)) == "move right"


def test_roll_never_rendered():
    assert render(STILL, (0, 0, 0, 0.5, 0, 0)) == "stop"


def test_gripper_opening_without_motion():
    assert render(STILL, (0, 0, 0, 0, 0, 0), before=False, after=True) == "open gripper"


def test_exceeds_follows_thresholds():
    act = AxisActivation.from_thresholds((0.02, -0.021, 0, 0, 0, 0), [0.02] * 6, True, True)
    assert act.exceeds[:2] == (False, True)


@pytest.mark.parametrize(
    "label, text",
    [
        (MotionLabel(move_x="forward"), "move forward"),
        (MotionLabel(gripper="open"), "open gripper"),
        (
            MotionLabel("backward", "right", "down", "up", "clockwise", "close"),
            "move backward right down tilt up rotate clockwise close gripper",
        ),
        (STOP, "stop"),
    ],
)
def test_canonical_strings(label, text):
    assert canonical_string(label) == text
    assert parse_label(text) == label


def test_parse_example():
    assert parse_label("move forward down") == MotionLabel(move_x="forward", move_z="down")


@pytest.mark.parametrize(
    "text",
    [
        "move sideways",
        "",
        "Stop",
        "move",
        "move  forward",
        " move forward",
        "move forward ",
        "move down forward",
        "tilt up move forward",
        "move forward forward",
        "rotate left",
        "open",
        "close gripper open gripper",
        "stop stop",
        "tilt",
    ],
)
def test_malformed_strings(text):
    with pytest.raises(MalformedMotionString):
        parse_label(text)


def test_label_field_values_checked():
    with pytest.raises(ValueError):
        MotionLabel(move_x="left")


def test_all_combinations_round_trip():
    conv = AxisConvention()
    table = string_table(conv)
    assert len(table) == 729 and len(set(table)) == 729
    for codes in itertools.product((-1, 0, 1), repeat=6):
        label = label_from_codes(codes, conv)
        text = canonical_string(label)
        assert canonical_string(parse_label(text)) == text
        assert codes_from_label(label, conv) == codes
        assert table[int(code_index(np.array(codes)))] == text


def test_zero_episode_is_all_stop(cfg):
    labels = annotate_trajectory(make_traj(np.zeros((20, 7))), None, cfg)
    assert len(labels) == 20 and all(l.is_stop for l in labels)


def _oracle(norm, cfg, p=None):
    return reference.annotate(norm.tolist(), norm[:, 6].tolist(), p, cfg)


def test_move_then_stop_boundary(cfg):
    norm = x_steps([0.004] * 6 + [0.0] * 6)
    got = annotate_arrays(norm, norm[:, 6], positions_from_normalized(norm), cfg).strings(cfg.axis_convention)
    want = _oracle(norm, cfg)
    assert got == want
    boundary = got.index("stop")
    assert set(got[:boundary]) == {"move forward"}
    assert set(got[boundary:]) == {"stop"}
    # frozen from the reference run: from step 3 every window contains a zero step
    assert boundary == 3


def test_gripper_close_is_labelled(cfg):
    norm = np.zeros((10, 7))
    norm[:5, 6] = 1.0
    got = annotate_arrays(norm, norm[:, 6], positions_from_normalized(norm), cfg).strings(cfg.axis_convention)
    assert got == _oracle(norm, cfg)
    hits = [t for t, s in enumerate(got) if "close gripper" in s]
    assert hits and all(s == "close gripper" for s in (got[t] for t in hits))
    # every labelled step reads a window that straddles the change at step 5
    assert all(t <= 5 for t in hits)
    assert all("gripper" not in s for t, s in enumerate(got) if t > 5)


def test_label_count_matches_steps(cfg):
    rng = np.random.default_rng(0)
    for n in (1, 2, 3, 9, 33):
        ann = annotate_episode(make_traj(rng.normal(scale=0.01, size=(n, 7))), None, cfg)
        assert len(ann) == n == len(ann.strings(cfg.axis_convention))


def test_recorded_positions_are_used(cfg):
    actions = np.zeros((6, 7))
    pos = np.zeros((6, 3))
    pos[:, 2] = np.arange(6) * 0.02
    got = annotate_trajectory(make_traj(actions, positions=pos), None, cfg)
    assert canonical_string(got[0]) == "move up"


def test_batch_equals_single():
    rng = np.random.default_rng(4)
    trajs = []
    for k in range(40):
        n = int(rng.integers(1, 30))
        a = rng.normal(scale=0.01, size=(n, 7))
        a[:, 6] = rng.random(n) > 0.3
        pos = np.cumsum(rng.normal(scale=0.01, size=(n, 3)), axis=0) if k % 3 == 0 else None
        trajs.append(make_traj(a, ep_id=f"e{k}", positions=pos))
    for cfg in (PipelineConfig(), PipelineConfig(anchor="backward", window_fit="shrink")):
        batch = annotate_episodes(trajs, None, cfg)
        for traj, ann in zip(trajs, batch):
            single = annotate_episode(traj, None, cfg)
            assert (ann.codes == single.codes).all()
            assert (ann.fired == single.fired).all()
            assert ann.roll_exceedances == single.roll_exceedances


def test_roll_exceedances_counted(cfg):
    norm = np.zeros((6, 7))
    norm[:, 3] = 0.05
    ann = annotate_arrays(norm, norm[:, 6], positions_from_normalized(norm), cfg)
    assert ann.roll_exceedances == 6
    assert set(ann.strings(cfg.axis_convention)) == {"stop"}


steps = st.lists(
    st.tuples(*[st.floats(-0.03, 0.03)] * 6, st.sampled_from([0.0, 1.0])), min_size=1, max_size=25
)


@given(steps)
def test_matches_reference(rows):
    cfg = PipelineConfig()
    norm = np.array(rows)
    got = annotate_arrays(norm, norm[:, 6], positions_from_normalized(norm), cfg).strings(cfg.axis_convention)
    assert got == _oracle(norm, cfg)


@given(steps)
def test_y_convention_flip_swaps_left_right(rows):
    norm = np.array(rows)
    p = positions_from_normalized(norm)
    a = annotate_arrays(norm, norm[:, 6], p, PipelineConfig())
    flipped = PipelineConfig(axis_convention=AxisConvention(y="right"))
    b = annotate_arrays(norm, norm[:, 6], p, flipped)
    swap = {"left": "right", "right": "left"}
    for s1, s2 in zip(a.strings(AxisConvention()), b.strings(flipped.axis_convention)):
        assert s2 == " ".join(swap.get(w, w) for w in s1.split(" "))


@given(steps)
def test_deterministic(rows):
    cfg = PipelineConfig()
    norm = np.array(rows)
    p = positions_from_normalized(norm)
    first = annotate_arrays(norm, norm[:, 6], p, cfg).strings(cfg.axis_convention)
    assert first == annotate_arrays(norm.copy(), norm[:, 6].copy(), p.copy(), cfg).strings(cfg.axis_convention)
