"""Shared value types, pipeline configuration and trajectory validation."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Optional, Sequence

import numpy as np

ACTION_DIM = 7
NUM_BINS = 256
DIM_NAMES = ("dx", "dy", "dz", "droll", "dpitch", "dyaw", "gripper")


class MotionLinguaError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MotionLinguaError):
    """A trajectory violates one of its invariants."""

    def __init__(self, episode_id: str, step: Optional[int], message: str):
        self.episode_id = episode_id
        self.step = step
        self.message = message
        where = f"episode {episode_id!r}" if step is None else f"episode {episode_id!r}, step {step}"
        super().__init__(f"{where}: {message}")

    def __reduce__(self):
        return (type(self), (self.episode_id, self.step, self.message))


class NonFiniteValue(ValidationError):
    pass


class EmptyEpisode(ValidationError):
    pass


class MixedPositionPresence(ValidationError):
    pass


class EmptyInstruction(MotionLinguaError):
    pass


class ConfigError(MotionLinguaError):
    """A PipelineConfig constraint is violated.

    ``code`` identifies the violated constraint so callers can tell errors
    apart without parsing the message.
    """

    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}")

    def __reduce__(self):
        return (type(self), (self.code, self.message))


@dataclass(frozen=True, slots=True)
class ActionVector:
    dx: float
    dy: float
    dz: float
    droll: float
    dpitch: float
    dyaw: float
    gripper: float

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "ActionVector":
        if len(values) != ACTION_DIM:
            raise ValueError(f"action needs {ACTION_DIM} values, got {len(values)}")
        return cls(*(float(v) for v in values))

    def as_tuple(self) -> tuple[float, ...]:
        return (self.dx, self.dy, self.dz, self.droll, self.dpitch, self.dyaw, self.gripper)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)


@dataclass(frozen=True, slots=True)
class TrajectoryStep:
    action: ActionVector
    position: Optional[tuple[float, float, float]] = None
    frame_ref: Optional[str] = None


class Trajectory:
    """One episode: an instruction and its ordered steps.

    Built either from :class:`TrajectoryStep` objects or directly from arrays
    (``actions`` of shape ``(n, 7)``, optional ``positions`` of shape
    ``(n, 3)``); the other representation is derived on first access. The
    arrays are read-only. Instances are immutable by convention.
    """

    def __init__(
        self,
        id: str,
        instruction: str,
        steps: Optional[Sequence[TrajectoryStep]] = None,
        *,
        actions: Optional[np.ndarray] = None,
        positions: Optional[np.ndarray] = None,
        frame_refs: Optional[Sequence[Optional[str]]] = None,
    ):
        self.id = id
        self.instruction = instruction
        if steps is not None:
            if actions is not None:
                raise TypeError("pass either steps or arrays, not both")
            self._steps: Optional[tuple] = tuple(steps)
            self._actions = None
            self._positions = None
            self._frame_refs = None
            return
        if actions is None:
            raise TypeError("Trajectory needs steps or actions")
        self._steps = None
        self._actions = _frozen(np.asarray(actions, dtype=np.float64).reshape(-1, ACTION_DIM))
        self._positions = None if positions is None else _frozen(
            np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        )
        if self._positions is not None and len(self._positions) != len(self._actions):
            raise ValueError("positions and actions differ in length")
        self._frame_refs = None if frame_refs is None else tuple(frame_refs)
        if self._frame_refs is not None and len(self._frame_refs) != len(self._actions):
            raise ValueError("frame_refs and actions differ in length")

    def __len__(self) -> int:
        return len(self._steps) if self._steps is not None else len(self._actions)

    def __repr__(self) -> str:
        return f"Trajectory(id={self.id!r}, instruction={self.instruction!r}, steps={len(self)})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        if (self.id, self.instruction, len(self)) != (other.id, other.instruction, len(other)):
            return False
        return self.steps == other.steps

    __hash__ = None

    @property
    def steps(self) -> tuple[TrajectoryStep, ...]:
        if self._steps is None:
            rows = self._actions.tolist()
            pos = self._positions.tolist() if self._positions is not None else [None] * len(rows)
            refs = self._frame_refs if self._frame_refs is not None else [None] * len(rows)
            self._steps = tuple(
                TrajectoryStep(ActionVector(*a), None if q is None else tuple(q), r)
                for a, q, r in zip(rows, pos, refs)
            )
        return self._steps

    @property
    def actions(self) -> np.ndarray:
        if self._actions is None:
            arr = np.array([s.action.as_tuple() for s in self._steps], dtype=np.float64)
            self._actions = _frozen(arr.reshape(len(self._steps), ACTION_DIM))
        return self._actions

    @property
    def positions(self) -> Optional[np.ndarray]:
        """``(n, 3)`` positions, or None when the steps carry none."""
        if self._steps is None:
            return self._positions
        if self._positions is None:
            if not self._steps or self._steps[0].position is None:
                return None
            if any(s.position is None for s in self._steps):
                raise ValueError(f"episode {self.id!r}: positions missing on some steps")
            self._positions = _frozen(np.array([s.position for s in self._steps], dtype=np.float64))
        return self._positions

    @property
    def frame_refs(self) -> list[Optional[str]]:
        if self._steps is not None:
            return [s.frame_ref for s in self._steps]
        if self._frame_refs is None:
            return [None] * len(self)
        return list(self._frame_refs)

    @classmethod
    def from_arrays(cls, id, instruction, actions, positions=None, frame_refs=None) -> "Trajectory":
        return cls(id, instruction, actions=actions, positions=positions, frame_refs=frame_refs)

    def __reduce__(self):
        if self._steps is not None and self._actions is None:
            return (Trajectory, (self.id, self.instruction, self._steps))
        return (
            _from_state,
            (self.id, self.instruction, self.actions, self._positions, self._frame_refs),
        )


def _from_state(id, instruction, actions, positions, frame_refs):
    return Trajectory(id, instruction, actions=actions, positions=positions, frame_refs=frame_refs)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _first_bad_row(mask: np.ndarray) -> int:
    return int(np.argmax(~mask.all(axis=1)))


def validate_trajectory(traj: Trajectory) -> Trajectory:
    """Check the episode invariants and return ``traj`` unchanged.

    Raises:
        EmptyEpisode: the episode has no steps.
        EmptyInstruction: the instruction is empty or whitespace.
        NonFiniteValue: an action or position component is NaN or infinite.
        MixedPositionPresence: some but not all steps carry a position.
    """
    if len(traj) == 0:
        raise EmptyEpisode(traj.id, None, "episode has no steps")
    if not traj.instruction.strip():
        raise EmptyInstruction(f"episode {traj.id!r}: instruction is empty")
    if traj._steps is not None:
        has_position = traj._steps[0].position is not None
        for j, step in enumerate(traj._steps):
            if (step.position is not None) != has_position:
                raise MixedPositionPresence(
                    traj.id, j, "position present on some steps but not on others"
                )
            if step.position is not None and len(step.position) != 3:
                raise ValidationError(traj.id, j, "position must have 3 components")
    finite = np.isfinite(traj.actions)
    if not finite.all():
        j = _first_bad_row(finite)
        i = int(np.argmin(finite[j]))
        raise NonFiniteValue(traj.id, j, f"action {DIM_NAMES[i]} is {traj.actions[j, i]}")
    positions = traj.positions
    if positions is not None:
        finite = np.isfinite(positions)
        if not finite.all():
            j = _first_bad_row(finite)
            raise NonFiniteValue(traj.id, j, f"position is {tuple(positions[j])}")
    return traj


@dataclass(frozen=True)
class AxisConvention:
    """Direction word produced by a positive displacement on each axis."""

    x: str = "forward"
    y: str = "left"
    z: str = "up"
    pitch: str = "up"
    yaw: str = "counterclockwise"


AXIS_WORD_PAIRS = {
    "x": ("forward", "backward"),
    "y": ("left", "right"),
    "z": ("up", "down"),
    "pitch": ("up", "down"),
    "yaw": ("counterclockwise", "clockwise"),
}


def axis_words(conv: AxisConvention, axis: str) -> tuple[str, str]:
    """Return ``(word for +, word for -)`` on ``axis`` under ``conv``."""
    pos = getattr(conv, axis)
    a, b = AXIS_WORD_PAIRS[axis]
    return (pos, b if pos == a else a)


@dataclass(frozen=True)
class PipelineConfig:
    """Tunables for thresholds, windows and labelling.

    Threshold values are in normalized action units. Windows are in steps.
    ``anchor`` selects forward (label describes upcoming steps) or backward
    windows; ``window_fit`` selects how windows running past an episode edge
    are handled: ``shift`` slides them back inside the episode, ``shrink``
    truncates them.
    """

    t_base: tuple[float, ...] = (0.01, 0.01, 0.01, 0.02, 0.02, 0.02, 0.02)
    beta: float = 0.5
    tau: int = 4
    dt_fast: int = 2
    dt_mid: int = 4
    dt_slow: int = 8
    slow_direction_check: bool = True
    gripper_cutoff: float = 0.5
    bins: int = NUM_BINS
    axis_convention: AxisConvention = field(default_factory=AxisConvention)
    anchor: str = "forward"
    window_fit: str = "shift"

    def __post_init__(self):
        object.__setattr__(self, "t_base", tuple(float(v) for v in self.t_base))
        for err in config_violations(self):
            raise err

    @property
    def windows(self) -> tuple[int, int, int]:
        return (self.dt_fast, self.dt_mid, self.dt_slow)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t_base"] = list(self.t_base)
        return d

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    @classmethod
    def from_mapping(cls, values: dict) -> "PipelineConfig":
        """Build a config from flat string or typed values.

        Keys mirror the field names; axis words use ``axis_x`` .. ``axis_yaw``.
        Unknown keys are rejected.
        """
        known = {f.name for f in fields(cls)} - {"axis_convention"}
        kwargs: dict = {}
        axis: dict = {}
        for key, raw in values.items():
            if key.startswith("axis_") and key[5:] in AXIS_WORD_PAIRS:
                axis[key[5:]] = str(raw).strip()
                continue
            if key not in known:
                raise ConfigError("unknown_key", f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw)
        for name, word in axis.items():
            if word not in AXIS_WORD_PAIRS[name]:
                raise ConfigError(
                    f"axis_{name}", f"axis_{name} must be one of {AXIS_WORD_PAIRS[name]}, got {word!r}"
                )
        if axis:
            kwargs["axis_convention"] = AxisConvention(**axis)
        return cls(**kwargs)


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return tuple(raw) if key == "t_base" else raw
    text = raw.strip()
    try:
        if key == "t_base":
            return tuple(float(v) for v in text.replace(",", " ").split())
        if key in ("tau", "dt_fast", "dt_mid", "dt_slow", "bins"):
            return int(text)
        if key in ("beta", "gripper_cutoff"):
            return float(text)
        if key == "slow_direction_check":
            lowered = text.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {key} from {raw!r}") from None
    return text


def config_violations(cfg: PipelineConfig) -> Iterable[ConfigError]:
    """Yield one distinct error per violated constraint."""
    if len(cfg.t_base) != ACTION_DIM:
        yield ConfigError("t_base_len", f"t_base needs {ACTION_DIM} values, got {len(cfg.t_base)}")
    elif not all(math.isfinite(v) and v > 0 for v in cfg.t_base):
        yield ConfigError("t_base_positive", "every t_base entry must be finite and > 0")
    if not (math.isfinite(cfg.beta) and cfg.beta >= 0):
        yield ConfigError("beta", f"beta must be finite and >= 0, got {cfg.beta}")
    if not isinstance(cfg.tau, int) or cfg.tau < 1:
        yield ConfigError("tau", f"tau must be an integer >= 1, got {cfg.tau}")
    for name in ("dt_fast", "dt_mid", "dt_slow"):
        v = getattr(cfg, name)
        if not isinstance(v, int) or v < 1:
            yield ConfigError(name, f"{name} must be an integer >= 1, got {v}")
    if not cfg.dt_fast < cfg.dt_mid:
        yield ConfigError("dt_order_fast_mid", f"need dt_fast < dt_mid, got {cfg.dt_fast} >= {cfg.dt_mid}")
    if not cfg.dt_mid < cfg.dt_slow:
        yield ConfigError("dt_order_mid_slow", f"need dt_mid < dt_slow, got {cfg.dt_mid} >= {cfg.dt_slow}")
    if not 0 < cfg.gripper_cutoff < 1:
        yield ConfigError("gripper_cutoff", f"gripper_cutoff must lie in (0, 1), got {cfg.gripper_cutoff}")
    if cfg.bins != NUM_BINS:
        yield ConfigError("bins", f"bins is fixed at {NUM_BINS}, got {cfg.bins}")
    if cfg.anchor not in ("forward", "backward"):
        yield ConfigError("anchor", f"anchor must be forward or backward, got {cfg.anchor!r}")
    if cfg.window_fit not in ("shift", "shrink"):
        yield ConfigError("window_fit", f"window_fit must be shift or shrink, got {cfg.window_fit!r}")
    for name, (a, b) in AXIS_WORD_PAIRS.items():
        if getattr(cfg.axis_convention, name) not in (a, b):
            yield ConfigError(f"axis_{name}", f"axis_{name} must be {a} or {b}")
