"""Equivalence check of the vectorized detector against the naive reference."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import reference
from .core import PipelineConfig
from .detector import detect_episode, position_threshold, positions_from_normalized, threshold_series
from .renderer import annotate_arrays


def random_walk(rng: np.random.Generator, length: int, cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """Normalized actions mixing zero, sub-threshold and super-threshold steps.

    Returns ``(norm_actions, gripper)``.
    """
    base = np.asarray(cfg.t_base[:6])
    kind = rng.integers(0, 3, size=(length, 6))
    scale = np.choose(kind, [np.zeros((length, 6)), rng.uniform(0.1, 0.9, (length, 6)), rng.uniform(1.5, 4.0, (length, 6))])
    sign = rng.choice([-1.0, 1.0], size=(length, 6))
    # runs of repeated steps so the mid and slow windows see steady motion
    hold = rng.random(length) < 0.6
    for j in range(1, length):
        if hold[j]:
            scale[j], sign[j] = scale[j - 1], sign[j - 1]
    actions = np.zeros((length, 7))
    actions[:, :6] = sign * scale * base
    flips = rng.random(length) < 0.1
    actions[:, 6] = np.cumsum(flips) % 2
    return actions, actions[:, 6].copy()


@dataclass
class OracleReport:
    episodes: int = 0
    steps: int = 0
    verdict_mismatches: int = 0
    label_mismatches: int = 0
    examples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict_mismatches == 0 and self.label_mismatches == 0


def oracle_check(
    n_episodes: int = 1000, seed: int = 0, max_length: int = 32, cfg: PipelineConfig = PipelineConfig()
) -> OracleReport:
    """Compare verdicts, fired windows and labels step by step."""
    rng = np.random.default_rng(seed)
    report = OracleReport()
    for k in range(n_episodes):
        n = int(rng.integers(1, max_length + 1))
        norm, gripper = random_walk(rng, n, cfg)
        p = positions_from_normalized(norm)
        thr = threshold_series(norm, cfg)
        det = detect_episode(p, position_threshold(thr), cfg)
        ref_thr = reference.thresholds(norm.tolist(), cfg.t_base, cfg.beta, cfg.tau)
        ref_p = reference.positions(norm.tolist())
        for t in range(n):
            T = (ref_thr[t][0] + ref_thr[t][1] + ref_thr[t][2]) / 3
            want = reference.verdict(ref_p, t, T, cfg.windows, cfg.anchor, cfg.window_fit, cfg.slow_direction_check)
            got = (bool(det.fast[t]), bool(det.mid[t]), bool(det.slow[t]))
            if got != want:
                report.verdict_mismatches += 1
                if len(report.examples) < 5:
                    report.examples.append({"episode": k, "step": t, "got": got, "want": want})
        labels = annotate_arrays(norm, gripper, p, cfg).strings(cfg.axis_convention)
        want_labels = reference.annotate(norm, gripper, None, cfg)
        report.label_mismatches += sum(a != b for a, b in zip(labels, want_labels))
        report.episodes += 1
        report.steps += n
    return report
