"""Motion labels: rendering detector output into the closed motion vocabulary."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .core import AXIS_WORD_PAIRS, AxisConvention, MotionLinguaError, PipelineConfig, Trajectory, axis_words
from .detector import (
    DetectorVerdict,
    EpisodeLayout,
    _detect,
    _threshold_rows,
    position_threshold,
    positions_from_normalized,
    reconstruct_positions,
    segmented_cumsum,
)
from .tokenizer import DatasetStats, normalize_array

# component order of label codes: x, y, z, tilt (pitch), rotate (yaw), gripper
N_COMPONENTS = 6
GRIPPER_WORDS = ("open", "close")


class MalformedMotionString(MotionLinguaError):
    pass


@dataclass(frozen=True)
class MotionLabel:
    move_x: Optional[str] = None
    move_y: Optional[str] = None
    move_z: Optional[str] = None
    tilt: Optional[str] = None
    rotate: Optional[str] = None
    gripper: Optional[str] = None

    def __post_init__(self):
        allowed = {
            "move_x": AXIS_WORD_PAIRS["x"],
            "move_y": AXIS_WORD_PAIRS["y"],
            "move_z": AXIS_WORD_PAIRS["z"],
            "tilt": AXIS_WORD_PAIRS["pitch"],
            "rotate": AXIS_WORD_PAIRS["yaw"],
            "gripper": GRIPPER_WORDS,
        }
        for name, words in allowed.items():
            value = getattr(self, name)
            if value is not None and value not in words:
                raise ValueError(f"{name} must be one of {words} or None, got {value!r}")

    @property
    def is_stop(self) -> bool:
        return all(
            v is None
            for v in (self.move_x, self.move_y, self.move_z, self.tilt, self.rotate, self.gripper)
        )

    def __str__(self) -> str:
        return canonical_string(self)


STOP = MotionLabel()


def canonical_string(label: MotionLabel) -> str:
    if label.is_stop:
        return "stop"
    parts = []
    moves = [w for w in (label.move_x, label.move_y, label.move_z) if w]
    if moves:
        parts.append("move")
        parts.extend(moves)
    if label.tilt:
        parts += ["tilt", label.tilt]
    if label.rotate:
        parts += ["rotate", label.rotate]
    if label.gripper:
        parts += [label.gripper, "gripper"]
    return " ".join(parts)


def parse_label(s: str) -> MotionLabel:
    """Strict inverse of :func:`canonical_string`.

    Raises:
        MalformedMotionString: unknown word, wrong order, duplicates, or
            irregular whitespace.
    """
    if s == "stop":
        return STOP
    words = s.split(" ")
    if not s or "" in words:
        raise MalformedMotionString(f"malformed motion string {s!r}")
    fields: dict = {}
    i = 0

    def bad(why: str):
        return MalformedMotionString(f"{why} in motion string {s!r}")

    if i < len(words) and words[i] == "move":
        i += 1
        for name, axis in (("move_x", "x"), ("move_y", "y"), ("move_z", "z")):
            if i < len(words) and words[i] in AXIS_WORD_PAIRS[axis]:
                fields[name] = words[i]
                i += 1
        if len(fields) == 0:
            raise bad("'move' without a direction")
    if i < len(words) and words[i] == "tilt":
        if i + 1 >= len(words) or words[i + 1] not in AXIS_WORD_PAIRS["pitch"]:
            raise bad("'tilt' without up/down")
        fields["tilt"] = words[i + 1]
        i += 2
    if i < len(words) and words[i] == "rotate":
        if i + 1 >= len(words) or words[i + 1] not in AXIS_WORD_PAIRS["yaw"]:
            raise bad("'rotate' without a direction")
        fields["rotate"] = words[i + 1]
        i += 2
    if i < len(words) and words[i] in GRIPPER_WORDS:
        if i + 1 >= len(words) or words[i + 1] != "gripper":
            raise bad("gripper word without 'gripper'")
        fields["gripper"] = words[i]
        i += 2
    if i != len(words) or not fields:
        raise bad(f"unexpected word {words[i] if i < len(words) else ''!r}")
    return MotionLabel(**fields)


def label_from_codes(codes: Sequence[int], conv: AxisConvention) -> MotionLabel:
    """Build a label from signed components ``(x, y, z, pitch, yaw, gripper)``.

    Axis codes are signs of the displacement; the gripper code is +1 for
    open and -1 for close.
    """
    values = []
    for code, axis in zip(codes[:5], ("x", "y", "z", "pitch", "yaw")):
        pos, neg = axis_words(conv, axis)
        values.append(None if code == 0 else (pos if code > 0 else neg))
    g = codes[5]
    values.append(None if g == 0 else ("open" if g > 0 else "close"))
    return MotionLabel(*values)


def codes_from_label(label: MotionLabel, conv: AxisConvention) -> tuple[int, ...]:
    out = []
    for value, axis in zip(
        (label.move_x, label.move_y, label.move_z, label.tilt, label.rotate),
        ("x", "y", "z", "pitch", "yaw"),
    ):
        pos, _ = axis_words(conv, axis)
        out.append(0 if value is None else (1 if value == pos else -1))
    out.append(0 if label.gripper is None else (1 if label.gripper == "open" else -1))
    return tuple(out)


@lru_cache(maxsize=None)
def string_table(conv: AxisConvention) -> tuple[str, ...]:
    """Canonical strings for every code combination, indexed by :func:`code_index`."""
    table = []
    for idx in range(3**N_COMPONENTS):
        codes = [(idx // 3**k) % 3 - 1 for k in range(N_COMPONENTS)]
        table.append(canonical_string(label_from_codes(codes, conv)))
    return tuple(table)


_POWERS = 3 ** np.arange(N_COMPONENTS)


def code_index(codes: np.ndarray) -> np.ndarray:
    return ((np.asarray(codes) + 1) * _POWERS).sum(axis=-1)


def codes_to_strings(codes: np.ndarray, conv: AxisConvention) -> list[str]:
    table = string_table(conv)
    return [table[i] for i in code_index(codes).tolist()]


@dataclass(frozen=True)
class AxisActivation:
    """Accumulated normalized displacement over a window, per axis.

    ``acc`` and ``exceeds`` are ordered x, y, z, roll, pitch, yaw.
    Gripper states are binarized: True is open.
    """

    acc: tuple[float, ...]
    exceeds: tuple[bool, ...]
    gripper_before: bool
    gripper_after: bool

    @classmethod
    def from_thresholds(cls, acc, thresholds, gripper_before: bool, gripper_after: bool):
        acc = tuple(float(a) for a in acc)
        exceeds = tuple(bool(abs(a) > t) for a, t in zip(acc, thresholds))
        return cls(acc, exceeds, gripper_before, gripper_after)


def _codes(motion, acc, exceeds, g_before, g_after) -> np.ndarray:
    """Vectorized word selection; all inputs carry a leading step axis.

    ``acc``/``exceeds`` have six columns (x, y, z, roll, pitch, yaw).
    """
    n = len(motion)
    codes = np.zeros((n, N_COMPONENTS), dtype=np.int64)
    sign = np.sign(acc).astype(np.int64)
    trans_on = exceeds[:, :3] & motion[:, None]
    codes[:, :3] = np.where(trans_on, sign[:, :3], 0)
    # motion without any exceeding axis: keep the dominant translational axis
    fallback = motion & ~exceeds[:, :3].any(axis=1)
    if fallback.any():
        rows = np.nonzero(fallback)[0]
        dominant = np.abs(acc[rows, :3]).argmax(axis=1)
        codes[rows, dominant] = sign[rows, dominant]
    codes[:, 3] = np.where(exceeds[:, 4], sign[:, 4], 0)
    codes[:, 4] = np.where(exceeds[:, 5], sign[:, 5], 0)
    codes[:, 5] = np.where(g_after & ~g_before, 1, np.where(g_before & ~g_after, -1, 0))
    return codes


def render_label(verdict: DetectorVerdict, act: AxisActivation, cfg: PipelineConfig) -> MotionLabel:
    codes = _codes(
        np.array([verdict.motion]),
        np.array([act.acc], dtype=np.float64),
        np.array([act.exceeds], dtype=bool),
        np.array([act.gripper_before]),
        np.array([act.gripper_after]),
    )
    return label_from_codes(codes[0].tolist(), cfg.axis_convention)


@dataclass
class Annotation:
    """Per-step labels of one episode, as signed codes plus diagnostics."""

    codes: np.ndarray
    motion: np.ndarray
    fired: np.ndarray
    roll_exceedances: int

    def __len__(self) -> int:
        return len(self.codes)

    def strings(self, conv: AxisConvention) -> list[str]:
        return codes_to_strings(self.codes, conv)

    def labels(self, conv: AxisConvention) -> list[MotionLabel]:
        return [label_from_codes(c, conv) for c in self.codes.tolist()]


def _windowed_activation(p, norm, gripper_open, s, e, layout: EpisodeLayout):
    """Accumulated displacements and gripper states over position spans [s, e].

    ``s`` and ``e`` are local to each episode; the arrays are flat batches.
    """
    n = layout.n
    a0 = np.minimum(s, n - 1)
    a1 = np.minimum(np.maximum(e, a0 + 1), n)
    first_step = np.arange(layout.total) - layout.t
    rot_base = first_step + layout.episode
    rot_cum = segmented_cumsum(norm[:, 3:6], layout.lengths)
    acc = np.empty((layout.total, 6))
    acc[:, :3] = p[e + layout.pos_offset] - p[s + layout.pos_offset]
    acc[:, 3:] = rot_cum[rot_base + a1] - rot_cum[rot_base + a0]
    spans = np.empty((layout.total, 6))
    spans[:, :3] = (e - s)[:, None]
    spans[:, 3:] = (a1 - a0)[:, None]
    g_before = gripper_open[first_step + np.maximum(a0 - 1, 0)]
    g_after = gripper_open[first_step + a1 - 1]
    return acc, spans, g_before, g_after


def _annotate_flat(norm, gripper_raw, p, layout: EpisodeLayout, cfg: PipelineConfig, thresholds=None):
    if thresholds is None:
        thresholds = _threshold_rows(norm, layout.t, cfg)
    det = _detect(p, position_threshold(thresholds), layout, cfg)
    motion = det.motion
    fired = det.fired
    # gripper-only and rotation-only labels are read over the mid window
    choice = np.where(fired >= 0, fired, 1)
    s = np.choose(choice, [b[0] for b in det.bounds])
    e = np.choose(choice, [b[1] for b in det.bounds])
    gripper_open = np.asarray(gripper_raw) >= cfg.gripper_cutoff
    acc, spans, g_before, g_after = _windowed_activation(p, norm, gripper_open, s, e, layout)
    per_axis = np.concatenate([thresholds[:, :3], thresholds[:, 3:6]], axis=1)
    exceeds = np.abs(acc) > per_axis * (spans / cfg.dt_fast)
    codes = _codes(motion, acc, exceeds, g_before, g_after)
    return codes, motion, fired, exceeds[:, 3]


def annotate_arrays(
    norm: np.ndarray,
    gripper_raw: np.ndarray,
    p: np.ndarray,
    cfg: PipelineConfig,
    thresholds: Optional[np.ndarray] = None,
) -> Annotation:
    """Label every step of one episode from normalized actions and positions.

    ``thresholds`` overrides the adaptive ``(n, 7)`` threshold series.
    """
    norm = np.asarray(norm, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    layout = EpisodeLayout([len(norm)], [len(p)])
    if thresholds is not None:
        thresholds = np.asarray(thresholds, dtype=np.float64)
    codes, motion, fired, roll = _annotate_flat(norm, gripper_raw, p, layout, cfg, thresholds)
    return Annotation(codes, motion, fired, int(roll.sum()))


def annotate_episode(
    traj: Trajectory,
    stats: Optional[DatasetStats],
    cfg: PipelineConfig,
    thresholds: Optional[np.ndarray] = None,
) -> Annotation:
    """``stats=None`` means the trajectory's actions are already normalized."""
    norm = traj.actions if stats is None else normalize_array(traj.actions, stats)
    p = reconstruct_positions(traj, stats)
    return annotate_arrays(norm, traj.actions[:, 6], p, cfg, thresholds)


def stack_episodes(trajs: Sequence[Trajectory], stats: Optional[DatasetStats]):
    """Concatenate episodes for batched processing.

    Returns ``(layout, actions, norm, positions)`` where positions are the
    recorded ones when an episode has them, else integrated deltas.
    """
    lengths = [len(traj) for traj in trajs]
    actions = np.concatenate([traj.actions for traj in trajs])
    norm = actions if stats is None else normalize_array(actions, stats)
    given = [traj.positions for traj in trajs]
    if all(g is None for g in given):
        return EpisodeLayout(lengths), actions, norm, segmented_cumsum(norm[:, :3], lengths)
    counts = [n + 1 if g is None else len(g) for n, g in zip(lengths, given)]
    layout = EpisodeLayout(lengths, counts)
    pieces = []
    for k, g in enumerate(given):
        if g is None:
            g = positions_from_normalized(norm[layout.starts[k] : layout.starts[k + 1]])
        pieces.append(g)
    return layout, actions, norm, np.concatenate(pieces)


def annotate_episodes(
    trajs: Sequence[Trajectory], stats: Optional[DatasetStats], cfg: PipelineConfig
) -> list[Annotation]:
    """:func:`annotate_episode` over many episodes in one vectorized pass.

    Each result is identical to annotating that episode on its own.
    """
    if not trajs:
        return []
    layout, actions, norm, p = stack_episodes(trajs, stats)
    codes, motion, fired, roll = _annotate_flat(norm, actions[:, 6], p, layout, cfg)
    return [
        Annotation(c, m, f, int(r.sum()))
        for c, m, f, r in zip(
            layout.split(codes), layout.split(motion), layout.split(fired), layout.split(roll)
        )
    ]


def annotate_trajectory(
    traj: Trajectory, stats: Optional[DatasetStats], cfg: PipelineConfig
) -> list[MotionLabel]:
    return annotate_episode(traj, stats, cfg).labels(cfg.axis_convention)
