"""Dataset normalization statistics and 256-bin action tokens."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import ACTION_DIM, NUM_BINS, ActionVector, MotionLinguaError, Trajectory

DEGENERATE_EPS = 1e-8
TOKEN_RE = re.compile(r"<extra_(0|[1-9][0-9]*)>")


class EmptyDataset(MotionLinguaError):
    pass


class BinOutOfRange(MotionLinguaError):
    pass


class StatsFormatError(MotionLinguaError):
    pass


@dataclass(frozen=True)
class DatasetStats:
    """Per-dimension 1st/99th percentile bounds of the action distribution."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    count: int

    def __post_init__(self):
        if len(self.lo) != ACTION_DIM or len(self.hi) != ACTION_DIM:
            raise StatsFormatError(f"stats need {ACTION_DIM} dims")
        for i, (a, b) in enumerate(zip(self.lo, self.hi)):
            if not (np.isfinite(a) and np.isfinite(b)):
                raise StatsFormatError(f"dim {i}: non-finite bound")
            if not a < b:
                raise StatsFormatError(f"dim {i}: need lo < hi, got lo={a!r} hi={b!r}")

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo, dtype=np.float64)

    @property
    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=np.float64)

    def to_json(self) -> str:
        # '.16e' always gives 17 significant digits, which round-trips every double.
        dims = ", ".join(
            '{"lo": %s, "hi": %s}' % (format(a, ".16e"), format(b, ".16e"))
            for a, b in zip(self.lo, self.hi)
        )
        return '{"dims": [%s], "count": %d}\n' % (dims, self.count)

    @classmethod
    def from_json(cls, text: str) -> "DatasetStats":
        try:
            doc = json.loads(text)
            dims = doc["dims"]
            lo = tuple(float(d["lo"]) for d in dims)
            hi = tuple(float(d["hi"]) for d in dims)
            count = int(doc["count"])
        except (ValueError, KeyError, TypeError) as exc:
            raise StatsFormatError(f"malformed stats document: {exc}") from None
        return cls(lo, hi, count)


def nearest_rank_bounds(values: np.ndarray) -> tuple[float, float]:
    """1st and 99th nearest-rank percentiles of a 1-d sample, widened if equal."""
    n = len(values)
    ordered = np.sort(values, kind="stable")
    # ceil(n/100) and ceil(99n/100), 1-indexed, in exact integer arithmetic
    lo = float(ordered[(n + 99) // 100 - 1])
    hi = float(ordered[(99 * n + 99) // 100 - 1])
    if lo == hi:
        # nextafter keeps the widening effective for large magnitudes
        lo = min(lo - DEGENERATE_EPS, float(np.nextafter(lo, -np.inf)))
        hi = max(hi + DEGENERATE_EPS, float(np.nextafter(hi, np.inf)))
    return lo, hi


class StatsAccumulator:
    """Collects per-dimension action values; partitions merge by concatenation."""

    def __init__(self):
        self._chunks: list[np.ndarray] = []

    def add(self, traj: Trajectory) -> None:
        self.add_actions(traj.actions)

    def add_actions(self, actions: np.ndarray) -> None:
        actions = np.asarray(actions, dtype=np.float64).reshape(-1, ACTION_DIM)
        if len(actions):
            self._chunks.append(actions)

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        merged = StatsAccumulator()
        merged._chunks = self._chunks + other._chunks
        return merged

    @property
    def count(self) -> int:
        return sum(len(c) for c in self._chunks)

    def finalize(self) -> DatasetStats:
        if not self._chunks:
            raise EmptyDataset("no steps to compute statistics from")
        values = np.concatenate(self._chunks)
        bounds = [nearest_rank_bounds(values[:, i]) for i in range(ACTION_DIM)]
        return DatasetStats(
            tuple(b[0] for b in bounds), tuple(b[1] for b in bounds), len(values)
        )


def compute_dataset_stats(trajectories: Iterable[Trajectory]) -> DatasetStats:
    acc = StatsAccumulator()
    for traj in trajectories:
        acc.add(traj)
    return acc.finalize()


def normalize_array(actions: np.ndarray, stats: DatasetStats) -> np.ndarray:
    """Affine map of ``[lo, hi]`` onto ``[-1, 1]``, clamped, applied row-wise."""
    lo, hi = stats.lo_array, stats.hi_array
    out = 2.0 * (np.asarray(actions, dtype=np.float64) - lo) / (hi - lo) - 1.0
    return np.clip(out, -1.0, 1.0)


def normalize(a: ActionVector, stats: DatasetStats) -> np.ndarray:
    return normalize_array(a.as_array(), stats)


@dataclass(frozen=True)
class ActionTokens:
    bins: tuple[int, ...]

    def __post_init__(self):
        if len(self.bins) != ACTION_DIM:
            raise BinOutOfRange(f"need {ACTION_DIM} bins, got {len(self.bins)}")
        for b in self.bins:
            if not 0 <= b < NUM_BINS:
                raise BinOutOfRange(f"bin {b} outside [0, {NUM_BINS - 1}]")

    @property
    def rendered(self) -> tuple[str, ...]:
        return tuple(TOKEN_STRINGS[b] for b in self.bins)

    def text(self) -> str:
        return "".join(TOKEN_STRINGS[b] for b in self.bins)


TOKEN_STRINGS = tuple(f"<extra_{k}>" for k in range(NUM_BINS))


def tokenize_array(actions: np.ndarray, stats: DatasetStats) -> np.ndarray:
    """Bin indices for an ``(n, 7)`` action array; out-of-range values clamp."""
    lo, hi = stats.lo_array, stats.hi_array
    scaled = (np.asarray(actions, dtype=np.float64) - lo) / (hi - lo) * NUM_BINS
    return np.clip(np.floor(scaled), 0, NUM_BINS - 1).astype(np.int64)


def tokenize_action(a: ActionVector, stats: DatasetStats) -> ActionTokens:
    return ActionTokens(tuple(int(b) for b in tokenize_array(a.as_array(), stats)))


def detokenize(bins: Sequence[int], stats: DatasetStats) -> ActionVector:
    """Bin centers back in dataset units."""
    arr = np.asarray(bins)
    if arr.shape != (ACTION_DIM,):
        raise BinOutOfRange(f"need {ACTION_DIM} bins, got shape {arr.shape}")
    if np.any(arr < 0) or np.any(arr >= NUM_BINS):
        raise BinOutOfRange(f"bins {list(bins)} outside [0, {NUM_BINS - 1}]")
    return ActionVector(*detokenize_array(arr, stats).tolist())


def detokenize_array(bins: np.ndarray, stats: DatasetStats) -> np.ndarray:
    lo, hi = stats.lo_array, stats.hi_array
    return lo + (np.asarray(bins, dtype=np.float64) + 0.5) * (hi - lo) / NUM_BINS
