import pickle

import numpy as np
import pytest

from helpers import make_traj
from motion_lingua.core import (
    ActionVector,
    AxisConvention,
    ConfigError,
    EmptyEpisode,
    EmptyInstruction,
    MixedPositionPresence,
    NonFiniteValue,
    PipelineConfig,
    Trajectory,
    TrajectoryStep,
    ValidationError,
    axis_words,
    config_violations,
    validate_trajectory,
)


def _steps(n, positions=None):
    out = []
    for j in range(n):
        pos = positions(j) if positions else None
        out.append(TrajectoryStep(ActionVector(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0), pos))
    return out


def test_valid_episode_returned_unchanged():
    traj = make_traj(np.zeros((10, 7)))
    assert validate_trajectory(traj) is traj


def test_nan_names_episode_and_step():
    a = np.zeros((10, 7))
    a[3, 1] = np.nan
    with pytest.raises(NonFiniteValue) as info:
        validate_trajectory(make_traj(a, ep_id="e7"))
    assert info.value.step == 3
    assert info.value.episode_id == "e7"
    assert "dy" in str(info.value)


def test_infinite_position_rejected():
    pos = np.zeros((4, 3))
    pos[2, 0] = np.inf
    with pytest.raises(NonFiniteValue) as info:
        validate_trajectory(make_traj(np.zeros((4, 7)), positions=pos))
    assert info.value.step == 2


def test_mixed_positions_rejected():
    traj = Trajectory("m", "go", _steps(10, lambda j: (0.0, 0.0, 0.0) if j < 5 else None))
    with pytest.raises(MixedPositionPresence) as info:
        validate_trajectory(traj)
    assert info.value.step == 5


def test_empty_episode_and_instruction():
    with pytest.raises(EmptyEpisode):
        validate_trajectory(Trajectory("e", "go", []))
    with pytest.raises(EmptyInstruction):
        validate_trajectory(make_traj(np.zeros((2, 7)), instruction="   "))


def test_step_and_array_forms_agree():
    a = np.arange(21, dtype=float).reshape(3, 7)
    from_arrays = make_traj(a, frame_refs=["f0", None, "f2"])
    from_steps = Trajectory("ep", "pick up the cup", from_arrays.steps)
    assert from_steps == from_arrays
    np.testing.assert_array_equal(from_steps.actions, a)
    assert from_steps.frame_refs == ["f0", None, "f2"]


def test_arrays_are_read_only():
    traj = make_traj(np.zeros((2, 7)))
    with pytest.raises(ValueError):
        traj.actions[0, 0] = 1.0


def test_trajectory_pickles():
    traj = make_traj(np.ones((3, 7)), positions=np.zeros((3, 3)))
    assert pickle.loads(pickle.dumps(traj)) == traj


def test_validation_errors_survive_pickling():
    # worker processes send these back to the parent
    err = pickle.loads(pickle.dumps(NonFiniteValue("e", 4, "bad")))
    assert (err.episode_id, err.step, str(err)) == ("e", 4, str(NonFiniteValue("e", 4, "bad")))
    cerr = pickle.loads(pickle.dumps(ConfigError("tau", "x")))
    assert cerr.code == "tau"


def test_action_vector_length_checked():
    with pytest.raises(ValueError):
        ActionVector.from_sequence([1, 2, 3])


def test_default_config_values():
    cfg = PipelineConfig()
    assert cfg.t_base == (0.01, 0.01, 0.01, 0.02, 0.02, 0.02, 0.02)
    assert (cfg.beta, cfg.tau) == (0.5, 4)
    assert cfg.windows == (2, 4, 8)
    assert cfg.gripper_cutoff == 0.5
    assert cfg.slow_direction_check is True
    assert cfg.axis_convention == AxisConvention("forward", "left", "up", "up", "counterclockwise")


@pytest.mark.parametrize(
    "kwargs, code",
    [
        ({"t_base": (0.01,) * 6}, "t_base_len"),
        ({"t_base": (0.01,) * 6 + (0.0,)}, "t_base_positive"),
        ({"beta": -0.1}, "beta"),
        ({"beta": float("nan")}, "beta"),
        ({"tau": 0}, "tau"),
        ({"dt_fast": 0}, "dt_fast"),
        ({"dt_fast": 4}, "dt_order_fast_mid"),
        ({"dt_slow": 4}, "dt_order_mid_slow"),
        ({"gripper_cutoff": 1.0}, "gripper_cutoff"),
        ({"bins": 128}, "bins"),
        ({"anchor": "sideways"}, "anchor"),
        ({"window_fit": "wrap"}, "window_fit"),
        ({"axis_convention": AxisConvention(x="up")}, "axis_x"),
    ],
)
def test_each_violation_has_its_own_code(kwargs, code):
    with pytest.raises(ConfigError) as info:
        PipelineConfig(**kwargs)
    assert info.value.code == code


def test_violation_codes_are_distinct():
    # build an object that breaks everything at once, bypassing __post_init__
    cfg = object.__new__(PipelineConfig)
    for name, value in {
        "t_base": (1.0,), "beta": -1.0, "tau": 0, "dt_fast": 0, "dt_mid": 0, "dt_slow": 0,
        "slow_direction_check": True, "gripper_cutoff": 2.0, "bins": 3,
        "axis_convention": AxisConvention(yaw="left"), "anchor": "?", "window_fit": "?",
    }.items():
        object.__setattr__(cfg, name, value)
    codes = [e.code for e in config_violations(cfg)]
    assert len(codes) == len(set(codes))
    assert {"t_base_len", "beta", "tau", "gripper_cutoff", "bins", "anchor", "window_fit", "axis_yaw"} <= set(codes)


def test_from_mapping_parses_strings():
    cfg = PipelineConfig.from_mapping(
        {"beta": "0.25", "tau": "6", "slow_direction_check": "false", "axis_y": "right",
         "t_base": "0.02, 0.02, 0.02, 0.04, 0.04, 0.04, 0.04"}
    )
    assert cfg.beta == 0.25 and cfg.tau == 6 and cfg.slow_direction_check is False
    assert cfg.axis_convention.y == "right"
    assert cfg.t_base[0] == 0.02


@pytest.mark.parametrize(
    "values, code",
    [({"gamma": "1"}, "unknown_key"), ({"tau": "four"}, "tau"), ({"axis_z": "forward"}, "axis_z")],
)
def test_from_mapping_rejects(values, code):
    with pytest.raises(ConfigError) as info:
        PipelineConfig.from_mapping(values)
    assert info.value.code == code


def test_digest_tracks_content():
    assert PipelineConfig().digest() == PipelineConfig().digest()
    assert PipelineConfig().digest() != PipelineConfig(beta=0.6).digest()


def test_axis_words_follow_convention():
    assert axis_words(AxisConvention(), "y") == ("left", "right")
    assert axis_words(AxisConvention(y="right"), "y") == ("right", "left")


def test_validation_error_is_catchable_as_base():
    with pytest.raises(ValidationError):
        validate_trajectory(Trajectory("e", "go", []))
