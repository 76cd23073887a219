"""Adaptive per-dimension thresholds and the fast/mid/slow window detectors.

Positions are indexed so that step ``j`` moves the gripper from ``p[j]`` to
``p[j + 1]``. A window for step ``j`` is a position span ``[s, e]`` whose
unit steps are ``p[k + 1] - p[k]`` for ``k`` in ``[s, e)``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ACTION_DIM, PipelineConfig, Trajectory
from .tokenizer import DatasetStats, normalize_array

WINDOW_NAMES = ("fast", "mid", "slow")


def positions_from_normalized(norm_actions: np.ndarray) -> np.ndarray:
    """Cumulative sum of normalized translation deltas, starting at the origin.

    Returns ``n + 1`` positions for ``n`` actions.
    """
    n = len(norm_actions)
    p = np.zeros((n + 1, 3))
    np.cumsum(norm_actions[:, :3], axis=0, out=p[1:])
    return p


def reconstruct_positions(traj: Trajectory, stats: Optional[DatasetStats]) -> np.ndarray:
    """Gripper positions for ``traj``: given ones verbatim, else integrated deltas.

    ``stats=None`` means the actions are already in normalized units.
    """
    if traj.positions is not None:
        return traj.positions
    norm = traj.actions if stats is None else normalize_array(traj.actions, stats)
    return positions_from_normalized(norm)


class AdaptiveThresholdState:
    """Rolling history of the last ``tau`` normalized displacement magnitudes."""

    def __init__(self, tau: int):
        self.tau = tau
        self.t = -1
        self._buffers = [deque(maxlen=tau) for _ in range(ACTION_DIM)]

    def push(self, norm_action) -> None:
        for buf, v in zip(self._buffers, norm_action):
            buf.append(abs(float(v)))
        self.t += 1

    def buffer(self, i: int) -> tuple[float, ...]:
        return tuple(self._buffers[i])

    def mean(self, i: int) -> float:
        buf = self._buffers[i]
        if not buf:
            raise ValueError("threshold state holds no history yet")
        return sum(buf) / len(buf)


def adaptive_threshold(state: AdaptiveThresholdState, i: int, cfg: PipelineConfig) -> float:
    """Base threshold of dimension ``i`` raised by the recent mean magnitude."""
    return cfg.t_base[i] + cfg.beta * state.mean(i)


class EpisodeLayout:
    """Index bookkeeping for several episodes concatenated along the step axis.

    Episode ``k`` owns steps ``starts[k] .. starts[k + 1]`` of the flat step
    arrays and ``position_counts[k]`` consecutive rows of the flat position
    array (``n + 1`` for integrated deltas, ``n`` for recorded positions).
    Every batched computation is elementwise or runs within one episode, so
    an episode's result does not depend on which episodes share its batch.
    """

    def __init__(self, lengths, position_counts=None):
        self.lengths = np.asarray(lengths, dtype=np.int64).reshape(-1)
        if (self.lengths < 0).any():
            raise ValueError("episode lengths must be non-negative")
        counts = self.lengths + 1 if position_counts is None else position_counts
        self.position_counts = np.asarray(counts, dtype=np.int64).reshape(-1)
        if len(self.position_counts) != len(self.lengths):
            raise ValueError("one position count per episode is required")
        self.starts = _offsets(self.lengths)
        self.position_starts = _offsets(self.position_counts)
        episode = np.repeat(np.arange(len(self.lengths)), self.lengths)
        self.t = np.arange(self.total) - self.starts[episode]
        self.n = self.lengths[episode]
        self.last = self.position_counts[episode] - 1
        self.pos_offset = self.position_starts[episode]
        self.episode = episode

    @property
    def total(self) -> int:
        return int(self.starts[-1])

    def split(self, flat: np.ndarray) -> list[np.ndarray]:
        return np.split(flat, self.starts[1:-1])


def _offsets(counts: np.ndarray) -> np.ndarray:
    out = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=out[1:])
    return out


def segmented_cumsum(values: np.ndarray, lengths) -> np.ndarray:
    """Running sums restarted per segment, each with a leading zero row.

    A segment of ``n`` rows yields ``n + 1`` rows, bit-identical to
    ``np.cumsum`` over that segment alone.
    """
    values = np.asarray(values, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    width = max(int(lengths.max(initial=0)), 0)
    padded = np.zeros((len(lengths), width + 1) + values.shape[1:])
    padded[:, 1:][np.arange(width)[None, :] < lengths[:, None]] = values
    np.cumsum(padded[:, 1:], axis=1, out=padded[:, 1:])
    return padded[np.arange(width + 1)[None, :] <= lengths[:, None]]


def _threshold_rows(norm_actions: np.ndarray, t: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    mags = np.abs(np.asarray(norm_actions, dtype=np.float64))
    rows = np.arange(len(mags))
    total = np.zeros_like(mags)
    # oldest first, so the additions happen in history order
    for lag in range(cfg.tau - 1, -1, -1):
        valid = (t >= lag)[:, None]
        total += np.where(valid, mags[np.maximum(rows - lag, 0)], 0.0)
    counts = np.minimum(t + 1, cfg.tau)[:, None]
    return np.asarray(cfg.t_base) + cfg.beta * (total / counts)


def threshold_series(norm_actions: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """``(n, 7)`` adaptive thresholds; step ``t`` averages steps ``t-tau+1 .. t``.

    Near the episode start the mean runs over the available prefix.
    """
    return _threshold_rows(norm_actions, np.arange(len(norm_actions)), cfg)


def position_threshold(thresholds: np.ndarray) -> np.ndarray:
    """Scalar threshold of the positional norm tests: mean over x, y, z."""
    return (thresholds[..., 0] + thresholds[..., 1] + thresholds[..., 2]) / 3


def _fit(s: int, e: int, dt: int, last: int, fit: str) -> tuple[int, int]:
    if fit == "shrink":
        return max(s, 0), min(e, last)
    span = min(dt, last)
    if e > last:
        return last - span, last
    if s < 0:
        return 0, span
    return s, e


def window_bounds(t: int, dt: int, n_positions: int, cfg: PipelineConfig) -> tuple[int, int]:
    """Position span ``(s, e)`` of the ``dt``-step window for step ``t``."""
    if cfg.anchor == "forward":
        s, e = t, t + dt
    else:
        s, e = t + 1 - dt, t + 1
    return _fit(s, e, dt, n_positions - 1, cfg.window_fit)


def _bounds(t: np.ndarray, last: np.ndarray, dt: int, cfg: PipelineConfig):
    if cfg.anchor == "forward":
        s, e = t, t + dt
    else:
        s, e = t + 1 - dt, t + 1
    if cfg.window_fit == "shrink":
        return np.maximum(s, 0), np.minimum(e, last)
    span = np.minimum(dt, last)
    over = e > last
    under = s < 0
    s = np.where(over, last - span, np.where(under, 0, s))
    e = np.where(over, last, np.where(under, span, e))
    return s, e


def window_bounds_array(n_steps: int, dt: int, n_positions: int, cfg: PipelineConfig):
    """:func:`window_bounds` for every step at once."""
    return _bounds(np.arange(n_steps), np.int64(n_positions - 1), dt, cfg)


def _window_stats(p: np.ndarray, s: int, e: int):
    net = p[e] - p[s]
    steps = np.diff(p[s : e + 1], axis=0)
    return net, steps


def detect_fast(p: np.ndarray, t: int, T: float, cfg: PipelineConfig) -> bool:
    s, e = window_bounds(t, cfg.dt_fast, len(p), cfg)
    net, _ = _window_stats(p, s, e)
    return bool(np.linalg.norm(net) > 2 * T)


def detect_mid(p: np.ndarray, t: int, T: float, cfg: PipelineConfig) -> bool:
    s, e = window_bounds(t, cfg.dt_mid, len(p), cfg)
    net, steps = _window_stats(p, s, e)
    if len(steps) == 0:
        return False
    return bool(np.linalg.norm(net) > T and np.linalg.norm(steps, axis=1).min() > 0)


def detect_slow(p: np.ndarray, t: int, T: float, cfg: PipelineConfig) -> bool:
    s, e = window_bounds(t, cfg.dt_slow, len(p), cfg)
    net, steps = _window_stats(p, s, e)
    if len(steps) == 0 or not np.linalg.norm(net) > T:
        return False
    if not np.linalg.norm(steps, axis=1).min() > T / (2 * cfg.dt_slow):
        return False
    if cfg.slow_direction_check and not np.all(steps @ net > 0):
        return False
    return True


@dataclass(frozen=True)
class DetectorVerdict:
    fast: bool
    mid: bool
    slow: bool

    @property
    def motion(self) -> bool:
        return self.fast or self.mid or self.slow

    @property
    def fired_window(self) -> str:
        for name, hit in zip(WINDOW_NAMES, (self.fast, self.mid, self.slow)):
            if hit:
                return name
        return "none"


def detect_motion(p: np.ndarray, t: int, T: float, cfg: PipelineConfig) -> DetectorVerdict:
    return DetectorVerdict(
        detect_fast(p, t, T, cfg), detect_mid(p, t, T, cfg), detect_slow(p, t, T, cfg)
    )


@dataclass
class EpisodeDetection:
    """Per-step detector outputs for one episode.

    ``bounds[k]`` holds the ``(s, e)`` arrays of window ``k`` (fast, mid, slow).
    """

    fast: np.ndarray
    mid: np.ndarray
    slow: np.ndarray
    bounds: tuple

    @property
    def motion(self) -> np.ndarray:
        return self.fast | self.mid | self.slow

    @property
    def fired(self) -> np.ndarray:
        """Index of the smallest firing window (0, 1, 2), or -1 for none."""
        return np.where(self.fast, 0, np.where(self.mid, 1, np.where(self.slow, 2, -1)))

    def verdict(self, t: int) -> DetectorVerdict:
        return DetectorVerdict(bool(self.fast[t]), bool(self.mid[t]), bool(self.slow[t]))


def _norm3(v: np.ndarray) -> np.ndarray:
    return np.sqrt(v[..., 0] * v[..., 0] + v[..., 1] * v[..., 1] + v[..., 2] * v[..., 2])


def _detect(p: np.ndarray, T: np.ndarray, layout: EpisodeLayout, cfg: PipelineConfig) -> EpisodeDetection:
    """Detectors over a batch; ``p`` holds the concatenated positions.

    The returned bounds are local to each episode.
    """
    unit = np.diff(p, axis=0)
    if len(unit) == 0:
        unit = np.zeros((1, 3))
    unit_norm = _norm3(unit)
    hits = []
    bounds = []
    for k, dt in enumerate(cfg.windows):
        s, e = _bounds(layout.t, layout.last, dt, cfg)
        bounds.append((s, e))
        gs = s + layout.pos_offset
        ge = e + layout.pos_offset
        net = p[ge] - p[gs]
        size = _norm3(net)
        if k == 0:
            hits.append(size > 2 * T)
            continue
        idx = gs[:, None] + np.arange(dt)
        valid = idx < ge[:, None]
        idx = np.minimum(idx, len(unit) - 1)
        smallest = np.where(valid, unit_norm[idx], np.inf).min(axis=1)
        ok = (e > s) & (size > T)
        if k == 1:
            hits.append(ok & (smallest > 0))
            continue
        ok &= smallest > T / (2 * cfg.dt_slow)
        if cfg.slow_direction_check:
            u = unit[idx]
            dots = u[..., 0] * net[:, None, 0] + u[..., 1] * net[:, None, 1] + u[..., 2] * net[:, None, 2]
            ok &= (~valid | (dots > 0)).all(axis=1)
        hits.append(ok)
    return EpisodeDetection(hits[0], hits[1], hits[2], tuple(bounds))


def detect_episode(p: np.ndarray, T: np.ndarray, cfg: PipelineConfig) -> EpisodeDetection:
    """Evaluate the three window detectors at every step.

    ``T`` holds one positional threshold per step; its length is the step count.
    """
    layout = EpisodeLayout([len(T)], [len(p)])
    return _detect(np.asarray(p, dtype=np.float64), np.asarray(T), layout, cfg)
