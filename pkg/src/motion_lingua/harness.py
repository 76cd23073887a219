"""Synthetic ground-truth trajectories and the adaptive vs. fixed-threshold benchmark."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import AxisConvention, MotionLinguaError, PipelineConfig, Trajectory
from .detector import _bounds
from .renderer import (
    STOP,
    Annotation,
    MotionLabel,
    _codes,
    _windowed_activation,
    annotate_episodes,
    canonical_string,
    codes_from_label,
    code_index,
    label_from_codes,
    stack_episodes,
    string_table,
)
from .tokenizer import DatasetStats

JITTER_KINDS = ("uniform", "gaussian-truncated")
JITTER_MODES = ("action", "pose")


class InvalidSpec(MotionLinguaError):
    pass


class LengthMismatch(MotionLinguaError):
    pass


@dataclass(frozen=True)
class Segment:
    """Constant-velocity stretch realizing ``label`` for ``duration`` steps.

    ``magnitude`` is the per-step displacement on each active translational
    axis, ``rot_magnitude`` on each active rotational axis (defaults to
    ``magnitude``). Both are in normalized units.
    """

    label: MotionLabel
    duration: int
    magnitude: float
    rot_magnitude: Optional[float] = None


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a reproducible synthetic dataset.

    With ``episodes`` given, each entry is the segment list of one episode
    (cycled if ``n_episodes`` is larger). Otherwise every episode is drawn at
    random: ``episode_length`` steps split into up to ``max_segments``
    segments with magnitudes drawn from ``magnitude_range`` (multiples of
    the base thresholds).

    ``jitter_mode="action"`` adds independent noise to every step's action;
    ``"pose"`` perturbs the pose instead, so each action receives the
    difference of consecutive pose errors and the path never drifts.
    """

    seed: int = 0
    n_episodes: int = 200
    episode_length: int = 64
    episodes: Optional[tuple[tuple[Segment, ...], ...]] = None
    max_segments: int = 1
    magnitude_range: tuple[float, float] = (2.0, 4.0)
    stop_fraction: float = 0.2
    jitter_amplitude: float = 0.0
    jitter_kind: str = "uniform"
    jitter_mode: str = "action"

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.episodes is not None:
            d["episodes"] = [
                [
                    {
                        "label": canonical_string(s.label),
                        "duration": s.duration,
                        "magnitude": s.magnitude,
                        "rot_magnitude": s.rot_magnitude,
                    }
                    for s in ep
                ]
                for ep in self.episodes
            ]
        return d


def _check_spec(spec: SyntheticSpec, cfg: PipelineConfig) -> None:
    if spec.n_episodes < 1:
        raise InvalidSpec("n_episodes must be >= 1")
    if not spec.jitter_amplitude >= 0:
        raise InvalidSpec("jitter_amplitude must be >= 0")
    if spec.jitter_kind not in JITTER_KINDS:
        raise InvalidSpec(f"jitter_kind must be one of {JITTER_KINDS}")
    if spec.jitter_mode not in JITTER_MODES:
        raise InvalidSpec(f"jitter_mode must be one of {JITTER_MODES}")
    if spec.episodes is not None:
        if not spec.episodes:
            raise InvalidSpec("episodes must be non-empty")
        for k, ep in enumerate(spec.episodes):
            if not ep:
                raise InvalidSpec(f"episode {k} has no segments")
            for seg in ep:
                if seg.duration < 1 or not seg.magnitude > 0:
                    raise InvalidSpec(f"episode {k}: segments need duration >= 1 and magnitude > 0")
                if seg.label.gripper is not None:
                    raise InvalidSpec("synthetic segments cannot carry gripper words")
            if max(s.duration for s in ep) < cfg.dt_slow:
                raise InvalidSpec(f"episode {k}: no segment lasts dt_slow={cfg.dt_slow} steps")
        return
    if spec.episode_length < cfg.dt_slow:
        raise InvalidSpec("episode_length must be >= dt_slow")
    if spec.max_segments < 1 or spec.episode_length // spec.max_segments < cfg.dt_slow:
        raise InvalidSpec("max_segments must leave every segment >= dt_slow steps")
    lo, hi = spec.magnitude_range
    if not 0 < lo <= hi:
        raise InvalidSpec("magnitude_range must satisfy 0 < lo <= hi")
    if not 0 <= spec.stop_fraction <= 1:
        raise InvalidSpec("stop_fraction must lie in [0, 1]")


def _random_label(rng: np.random.Generator) -> MotionLabel:
    while True:
        codes = rng.integers(-1, 2, size=5)
        # at most two active components keeps labels in the range real data shows
        if 1 <= np.count_nonzero(codes) <= 2:
            break
    return label_from_codes(list(codes) + [0], AxisConvention())


def _random_episode(spec: SyntheticSpec, cfg: PipelineConfig, rng) -> tuple[Segment, ...]:
    n_seg = int(rng.integers(1, spec.max_segments + 1))
    # split points keep every segment at least dt_slow long
    free = spec.episode_length - n_seg * cfg.dt_slow
    cuts = np.sort(rng.integers(0, free + 1, size=n_seg - 1))
    extra = np.diff(np.concatenate([[0], cuts, [free]]))
    segs = []
    for k in range(n_seg):
        if rng.random() < spec.stop_fraction:
            label = STOP
        else:
            label = _random_label(rng)
        scale = float(rng.uniform(*spec.magnitude_range))
        segs.append(
            Segment(label, int(cfg.dt_slow + extra[k]), scale * cfg.t_base[0], scale * cfg.t_base[3])
        )
    return tuple(segs)


def _clean_actions(segments: Sequence[Segment], cfg: PipelineConfig) -> tuple[np.ndarray, list[str]]:
    rows = []
    truth = []
    for seg in segments:
        codes = codes_from_label(seg.label, cfg.axis_convention)
        rot = seg.magnitude if seg.rot_magnitude is None else seg.rot_magnitude
        step = np.zeros(7)
        step[:3] = np.asarray(codes[:3]) * seg.magnitude
        step[4] = codes[3] * rot
        step[5] = codes[4] * rot
        step[6] = 1.0
        rows.extend([step] * seg.duration)
        truth.extend([canonical_string(seg.label)] * seg.duration)
    return np.array(rows), truth


def _jitter(rng, shape, a: float, kind: str) -> np.ndarray:
    if a == 0:
        return np.zeros(shape)
    if kind == "uniform":
        return rng.uniform(-a, a, size=shape)
    # normal with sigma a/2, redrawn outside [-a, a]
    out = rng.normal(0.0, a / 2, size=shape)
    bad = np.abs(out) > a
    while bad.any():
        out[bad] = rng.normal(0.0, a / 2, size=int(bad.sum()))
        bad = np.abs(out) > a
    return out


def _generate(spec: SyntheticSpec, cfg: PipelineConfig):
    _check_spec(spec, cfg)
    rng = np.random.default_rng(spec.seed)
    out = []
    for k in range(spec.n_episodes):
        if spec.episodes is not None:
            segments = spec.episodes[k % len(spec.episodes)]
        else:
            segments = _random_episode(spec, cfg, rng)
        actions, truth = _clean_actions(segments, cfg)
        n = len(actions)
        if spec.jitter_mode == "action":
            actions[:, :6] += _jitter(rng, (n, 6), spec.jitter_amplitude, spec.jitter_kind)
        else:
            pose_error = _jitter(rng, (n + 1, 6), spec.jitter_amplitude, spec.jitter_kind)
            actions[:, :6] += np.diff(pose_error, axis=0)
        traj = Trajectory.from_arrays(f"synthetic-{spec.seed}-{k:05d}", "follow the path", actions)
        out.append((traj, truth))
    return out


def generate_synthetic(
    spec: SyntheticSpec, cfg: PipelineConfig = PipelineConfig()
) -> list[tuple[Trajectory, list[str]]]:
    """Seeded episodes (in normalized action units) paired with per-step truth.

    Ground truth comes from the clean segment words; jitter of amplitude
    ``jitter_amplitude`` is added afterwards to the six continuous action
    components (see ``SyntheticSpec.jitter_mode``). The gripper stays open.
    """
    return _generate(spec, cfg)


def fixed_threshold_annotate(
    traj: Trajectory,
    stats: Optional[DatasetStats],
    fixed_T: float,
    window: int,
    cfg: PipelineConfig = PipelineConfig(),
) -> list[str]:
    """Single-window, non-adaptive baseline labels.

    Motion fires when the windowed position change exceeds ``fixed_T``; each
    axis gets a word when its windowed displacement exceeds ``fixed_T``
    scaled by that axis's share of the base thresholds.
    """
    return _FixedBaseline([traj], stats, window, cfg).annotate(fixed_T).strings(cfg.axis_convention)


class _FixedBaseline:
    """Threshold-independent window quantities, precomputed for a batch of episodes."""

    def __init__(self, trajs, stats, window: int, cfg: PipelineConfig):
        layout, actions, norm, p = stack_episodes(trajs, stats)
        s, e = _bounds(layout.t, layout.last, window, cfg)
        net = p[e + layout.pos_offset] - p[s + layout.pos_offset]
        self.net = np.sqrt((net * net).sum(axis=1))
        gripper_open = actions[:, 6] >= cfg.gripper_cutoff
        self.acc, _, self.before, self.after = _windowed_activation(p, norm, gripper_open, s, e, layout)
        self.abs_acc = np.abs(self.acc)
        self.scale = np.asarray(cfg.t_base[:6]) / np.mean(cfg.t_base[:3])

    def annotate(self, fixed_T: float) -> Annotation:
        if not fixed_T > 0:
            raise ValueError("fixed_T must be > 0")
        motion = self.net > fixed_T
        exceeds = self.abs_acc > fixed_T * self.scale
        codes = _codes(motion, self.acc, exceeds, self.before, self.after)
        return Annotation(codes, motion, np.where(motion, 0, -1), int(exceeds[:, 3].sum()))


@dataclass
class AccuracyReport:
    method: str
    episode_accuracy: list = field(default_factory=list)
    correct: int = 0
    steps: int = 0
    confusion: Counter = field(default_factory=Counter)

    @property
    def mean_accuracy(self) -> float:
        return self.correct / self.steps if self.steps else 0.0

    def merge(self, other: "AccuracyReport") -> "AccuracyReport":
        return AccuracyReport(
            self.method,
            self.episode_accuracy + other.episode_accuracy,
            self.correct + other.correct,
            self.steps + other.steps,
            self.confusion + other.confusion,
        )

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "mean_accuracy": self.mean_accuracy,
            "steps": self.steps,
            "correct": self.correct,
            "episode_accuracy": self.episode_accuracy,
            "confusion": [
                {"truth": t, "pred": p, "count": c} for (t, p), c in sorted(self.confusion.items())
            ],
        }


def score(pred: Sequence[str], truth: Sequence[str], method: str = "adaptive") -> AccuracyReport:
    """Per-step exact-match accuracy of one episode."""
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions for {len(truth)} truth labels")
    confusion = Counter(zip(truth, pred))
    correct = sum(p == t for p, t in zip(pred, truth))
    acc = correct / len(truth) if truth else 1.0
    return AccuracyReport(method, [acc], correct, len(truth), confusion)


DEFAULT_FIXED_GRID = tuple(round(0.005 * k, 3) for k in range(1, 21))


@dataclass
class BenchmarkResult:
    adaptive: AccuracyReport
    fixed: AccuracyReport
    fixed_T: float
    window: int
    fixed_sweep: dict
    spec: SyntheticSpec

    def to_dict(self) -> dict:
        fixed = self.fixed.to_dict()
        fixed["fixed_T"] = self.fixed_T
        fixed["window"] = self.window
        fixed["sweep"] = [{"fixed_T": t, "mean_accuracy": a} for t, a in self.fixed_sweep.items()]
        return {
            "adaptive": self.adaptive.to_dict(),
            "fixed": fixed,
            "spec": self.spec.to_dict(),
            "seed": self.spec.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _report(method, pred_idx, truth_idx, lengths, table) -> AccuracyReport:
    correct = pred_idx == truth_idx
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    per_episode = np.add.reduceat(correct.astype(np.int64), starts) / np.asarray(lengths)
    keys, counts = np.unique(truth_idx * len(table) + pred_idx, return_counts=True)
    confusion = Counter(
        {(table[k // len(table)], table[k % len(table)]): int(c) for k, c in zip(keys.tolist(), counts.tolist())}
    )
    return AccuracyReport(method, per_episode.tolist(), int(correct.sum()), len(correct), confusion)


def run_benchmark(
    spec: SyntheticSpec,
    cfg: PipelineConfig = PipelineConfig(),
    fixed_T: Optional[float] = None,
    window: Optional[int] = None,
    fixed_grid: Sequence[float] = DEFAULT_FIXED_GRID,
) -> BenchmarkResult:
    """Score both methods on the same generated episodes.

    With ``fixed_T=None`` the baseline threshold is swept over
    ``fixed_grid`` and its best score is reported (ties go to the smaller
    threshold).
    """
    window = cfg.dt_mid if window is None else window
    data = generate_synthetic(spec, cfg)
    trajs = [traj for traj, _ in data]
    lengths = [len(traj) for traj in trajs]
    table = string_table(cfg.axis_convention)
    index_of = {text: k for k, text in enumerate(table)}
    truth_idx = np.array([index_of[t] for _, truth in data for t in truth])

    pred = np.concatenate([ann.codes for ann in annotate_episodes(trajs, None, cfg)])
    adaptive = _report("adaptive", code_index(pred), truth_idx, lengths, table)

    baseline = _FixedBaseline(trajs, None, window, cfg)
    grid = [fixed_T] if fixed_T is not None else list(fixed_grid)
    best = None
    sweep = {}
    for T in grid:
        report = _report("fixed", code_index(baseline.annotate(T).codes), truth_idx, lengths, table)
        sweep[T] = report.mean_accuracy
        if best is None or report.correct > best[1].correct:
            best = (T, report)
    return BenchmarkResult(adaptive, best[1], best[0], window, sweep, spec)


def jitter_sweep(
    spec: SyntheticSpec,
    cfg: PipelineConfig = PipelineConfig(),
    multiples: Sequence[float] = (0.0, 0.5, 1.0, 1.5, 2.0),
    seeds: Sequence[int] = (0,),
    window: Optional[int] = None,
) -> list[dict]:
    """Mean accuracy of both methods per jitter amplitude, averaged over seeds.

    Amplitudes are ``multiples`` of the translational base threshold.
    """
    rows = []
    for m in multiples:
        a = m * cfg.t_base[0]
        adaptive, fixed = [], []
        for seed in seeds:
            s = SyntheticSpec(**{**_spec_kwargs(spec), "seed": seed, "jitter_amplitude": a})
            res = run_benchmark(s, cfg, window=window)
            adaptive.append(res.adaptive.mean_accuracy)
            fixed.append(res.fixed.mean_accuracy)
        rows.append(
            {
                "jitter_multiple": m,
                "jitter_amplitude": a,
                "adaptive": float(np.mean(adaptive)),
                "fixed": float(np.mean(fixed)),
            }
        )
    return rows


def _spec_kwargs(spec: SyntheticSpec) -> dict:
    return {f: getattr(spec, f) for f in spec.__dataclass_fields__}


def sweep_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(
        buf, fieldnames=["jitter_multiple", "jitter_amplitude", "adaptive", "fixed"], lineterminator="\n"
    )
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()
