import csv
import io
import json

import numpy as np
import pytest

from helpers import make_traj, x_steps
from motion_lingua.harness import (
    DEFAULT_FIXED_GRID,
    InvalidSpec,
    LengthMismatch,
    Segment,
    SyntheticSpec,
    fixed_threshold_annotate,
    generate_synthetic,
    jitter_sweep,
    run_benchmark,
    score,
    sweep_csv,
)
from motion_lingua.renderer import MotionLabel, annotate_trajectory, canonical_string, parse_label

FORWARD = MotionLabel(move_x="forward")


def one_segment(label, n=10, mag=0.01, **kw):
    return SyntheticSpec(episodes=((Segment(label, n, mag),),), n_episodes=1, **kw)


def test_clean_forward_segment_reproduced(cfg):
    (traj, truth), = generate_synthetic(one_segment(FORWARD), cfg)
    assert truth == ["move forward"] * 10
    assert traj.actions[:, 0].tolist() == [0.01] * 10
    got = [canonical_string(l) for l in annotate_trajectory(traj, None, cfg)]
    assert got == truth


def test_generation_is_seeded(cfg):
    spec = SyntheticSpec(seed=5, n_episodes=4, jitter_amplitude=0.01)
    a = generate_synthetic(spec, cfg)
    b = generate_synthetic(spec, cfg)
    assert all((x.actions.tobytes(), tx) == (y.actions.tobytes(), ty) for (x, tx), (y, ty) in zip(a, b))
    c = generate_synthetic(SyntheticSpec(seed=6, n_episodes=4, jitter_amplitude=0.01), cfg)
    assert a[0][0].actions.tobytes() != c[0][0].actions.tobytes()


def test_rotate_clockwise_sign(cfg):
    (traj, truth), = generate_synthetic(one_segment(MotionLabel(rotate="clockwise")), cfg)
    a = traj.actions
    assert (a[:, 3] == 0).all() and (a[:, 4] == 0).all() and (a[:, 5] < 0).all()
    assert truth[0] == "rotate clockwise"


def test_gripper_stays_open(cfg):
    for traj, _ in generate_synthetic(SyntheticSpec(n_episodes=5), cfg):
        assert (traj.actions[:, 6] == 1.0).all()


@pytest.mark.parametrize("kind", ["uniform", "gaussian-truncated"])
@pytest.mark.parametrize("mode", ["action", "pose"])
def test_jitter_bounded_by_amplitude(cfg, kind, mode):
    a = 0.01
    segs = ((Segment(FORWARD, 12, 0.02), Segment(MotionLabel(tilt="up"), 20, 0.03)),)
    spec = SyntheticSpec(episodes=segs, n_episodes=3, jitter_amplitude=a, jitter_kind=kind, jitter_mode=mode)
    clean = generate_synthetic(SyntheticSpec(episodes=segs, n_episodes=3), cfg)
    noisy = generate_synthetic(spec, cfg)
    for (c, _), (n, _) in zip(clean, noisy):
        # pose jitter shows up as a difference of two errors
        bound = a if mode == "action" else 2 * a
        assert np.abs(n.actions[:, :6] - c.actions[:, :6]).max() <= bound


def test_pose_jitter_never_drifts(cfg):
    spec = SyntheticSpec(n_episodes=2, jitter_amplitude=0.02, jitter_mode="pose", stop_fraction=1.0)
    for traj, truth in generate_synthetic(spec, cfg):
        assert set(truth) == {"stop"}
        assert np.abs(np.cumsum(traj.actions[:, :3], axis=0)).max() <= 0.04


@pytest.mark.parametrize(
    "spec",
    [
        SyntheticSpec(n_episodes=0),
        SyntheticSpec(jitter_amplitude=-1),
        SyntheticSpec(jitter_kind="pink"),
        SyntheticSpec(jitter_mode="both"),
        SyntheticSpec(episode_length=4),
        SyntheticSpec(max_segments=9),
        SyntheticSpec(magnitude_range=(0, 1)),
        SyntheticSpec(stop_fraction=1.5),
        SyntheticSpec(episodes=()),
        SyntheticSpec(episodes=((Segment(FORWARD, 4, 0.01),),)),
        SyntheticSpec(episodes=((Segment(MotionLabel(gripper="open"), 10, 0.01),),)),
    ],
)
def test_invalid_specs(cfg, spec):
    with pytest.raises(InvalidSpec):
        generate_synthetic(spec, cfg)


def test_clean_episode_fixed_matches_adaptive(cfg):
    (traj, truth), = generate_synthetic(one_segment(FORWARD, n=16, mag=0.02), cfg)
    adaptive = [canonical_string(l) for l in annotate_trajectory(traj, None, cfg)]
    assert fixed_threshold_annotate(traj, None, 0.01, 4, cfg) == adaptive == truth


def test_infinite_fixed_threshold_is_all_stop(cfg):
    (traj, _), = generate_synthetic(one_segment(FORWARD, n=16, mag=0.02), cfg)
    assert set(fixed_threshold_annotate(traj, None, 1e300, 4, cfg)) == {"stop"}
    with pytest.raises(ValueError):
        fixed_threshold_annotate(traj, None, 0.0, 4, cfg)


def test_jittered_stationary_episode(cfg):
    # zero-mean noise +a +a -a -a: the two-step drift 2a = 0.016 beats a fixed
    # T_base, yet stays under the adaptive fast bound 2T = 2 * 0.01133; longer
    # windows see zero net drift
    a = 0.008
    noise = a * np.resize([1.0, 1.0, -1.0, -1.0], 48)
    traj = make_traj(x_steps(noise))
    fixed = fixed_threshold_annotate(traj, None, cfg.t_base[0], 2, cfg)
    adaptive = [canonical_string(l) for l in annotate_trajectory(traj, None, cfg)]
    assert set(adaptive) == {"stop"}
    spurious = [s for s in fixed if s != "stop"]
    assert len(spurious) >= len(fixed) // 3
    assert set(spurious) <= {"move forward", "move backward"}


def test_score_examples():
    truth = ["stop", "move up", "stop", "move up"]
    assert score(truth, truth).mean_accuracy == 1.0
    rep = score(["stop"] * 4, truth)
    assert rep.mean_accuracy == 0.5
    assert sum(rep.confusion.values()) == rep.steps == 4
    assert rep.confusion[("move up", "stop")] == 2
    with pytest.raises(LengthMismatch):
        score(["stop"], truth)


def test_report_merge():
    a = score(["stop"], ["stop"])
    b = score(["stop", "stop"], ["move up", "stop"])
    m = a.merge(b)
    assert (m.correct, m.steps) == (2, 3) and m.episode_accuracy == [1.0, 0.5]


def test_noise_free_benchmark(cfg):
    res = run_benchmark(SyntheticSpec(n_episodes=60), cfg)
    assert res.adaptive.mean_accuracy >= 0.99
    assert res.fixed.mean_accuracy >= 0.99
    assert 0 <= min(res.adaptive.episode_accuracy) and max(res.adaptive.episode_accuracy) <= 1
    assert res.adaptive.steps == res.fixed.steps == 60 * 64


def test_benchmark_deterministic_and_serializable(cfg):
    spec = SyntheticSpec(n_episodes=10, jitter_amplitude=0.01)
    a, b = run_benchmark(spec, cfg), run_benchmark(spec, cfg)
    assert a.to_json() == b.to_json()
    doc = json.loads(a.to_json())
    assert set(doc) == {"adaptive", "fixed", "spec", "seed"}
    assert doc["fixed"]["fixed_T"] in DEFAULT_FIXED_GRID
    for c in doc["adaptive"]["confusion"]:
        parse_label(c["truth"]), parse_label(c["pred"])


def test_pinned_fixed_threshold(cfg):
    res = run_benchmark(SyntheticSpec(n_episodes=5), cfg, fixed_T=0.01, window=2)
    assert res.fixed_T == 0.01 and res.window == 2 and list(res.fixed_sweep) == [0.01]


def test_sweep_rows_and_csv(cfg):
    rows = jitter_sweep(SyntheticSpec(n_episodes=8), cfg, multiples=(0.0, 1.0), seeds=(0, 1))
    assert [r["jitter_multiple"] for r in rows] == [0.0, 1.0]
    assert rows[0]["adaptive"] >= rows[1]["adaptive"]
    parsed = list(csv.DictReader(io.StringIO(sweep_csv(rows))))
    assert float(parsed[1]["adaptive"]) == rows[1]["adaptive"]
    assert float(parsed[1]["jitter_amplitude"]) == 0.01


def test_adaptive_accuracy_degrades_monotonically(cfg):
    rows = jitter_sweep(SyntheticSpec(n_episodes=40), cfg, seeds=range(20))
    acc = [r["adaptive"] for r in rows]
    assert [r["jitter_multiple"] for r in rows] == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert all(a >= b for a, b in zip(acc, acc[1:])), acc
