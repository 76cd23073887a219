"""Chat-format training records for motion pretraining and action fine-tuning."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import islice
from typing import Iterable, Iterator, Optional

import numpy as np

from .core import (
    ACTION_DIM,
    EmptyInstruction,
    MotionLinguaError,
    PipelineConfig,
    Trajectory,
    ValidationError,
    validate_trajectory,
)
from .renderer import MotionLabel, annotate_episodes, canonical_string
from .tokenizer import TOKEN_STRINGS, ActionTokens, DatasetStats, tokenize_array

log = logging.getLogger(__name__)

STAGES = ("pretrain", "finetune")


class MissingAction(MotionLinguaError):
    pass


@dataclass(frozen=True)
class EmitterTemplate:
    system_text: str = "You are Qwen, created by Alibaba Cloud. You are a helpful assistant."
    start_marker: str = "<|im_start|>"
    stop_marker: str = "<|im_end|>"
    question_format: str = "What action should the robot take to {instruction}?"

    def __post_init__(self):
        if not self.start_marker or not self.stop_marker:
            raise ValueError("template markers must be non-empty")
        if self.start_marker == self.stop_marker:
            raise ValueError("start and stop markers must differ")
        if "{instruction}" not in self.question_format:
            raise ValueError("question_format must contain '{instruction}'")

    @classmethod
    def from_json(cls, text: str) -> "EmitterTemplate":
        doc = json.loads(text)
        unknown = set(doc) - {"system_text", "start_marker", "stop_marker", "question_format"}
        if unknown:
            raise ValueError(f"unknown template keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class TrainingSample:
    frame_ref: Optional[str]
    instruction: str
    motion: MotionLabel
    action: Optional[ActionTokens] = None
    stage: str = "pretrain"

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.stage == "pretrain" and self.action is not None:
            raise ValueError("pretrain samples carry no action")


@dataclass(frozen=True)
class EmittedRecord:
    """Record text plus the ``[start, end)`` UTF-8 byte spans that carry loss."""

    text: str
    loss_spans: tuple[tuple[int, int], ...]


class _Builder:
    def __init__(self):
        self._parts: list[str] = []
        self._offset = 0
        self.spans: list[tuple[int, int]] = []

    def add(self, piece: str, loss: bool = False) -> None:
        size = len(piece.encode("utf-8"))
        if loss:
            self.spans.append((self._offset, self._offset + size))
        self._parts.append(piece)
        self._offset += size

    def record(self) -> EmittedRecord:
        return EmittedRecord("".join(self._parts), tuple(self.spans))


def _prompt_head(b: _Builder, instruction: str, tpl: EmitterTemplate) -> None:
    if not instruction.strip():
        raise EmptyInstruction("instruction is empty")
    start, stop = tpl.start_marker, tpl.stop_marker
    b.add(start + "system\n" + tpl.system_text)
    b.add(stop, loss=True)
    b.add("\n" + start + "user\n" + tpl.question_format.format(instruction=instruction))
    b.add(stop, loss=True)
    b.add("\n" + start + "motion\n")


def _prompt(b: _Builder, instruction: str, motion: str, tpl: EmitterTemplate) -> None:
    _prompt_head(b, instruction, tpl)
    b.add(motion, loss=True)
    b.add(tpl.stop_marker, loss=True)
    b.add("\n")


def emit_pretrain(sample: TrainingSample, tpl: EmitterTemplate = EmitterTemplate()) -> EmittedRecord:
    if sample.stage != "pretrain":
        raise ValueError("emit_pretrain needs a pretrain sample")
    b = _Builder()
    _prompt(b, sample.instruction, canonical_string(sample.motion), tpl)
    return b.record()


def emit_finetune(sample: TrainingSample, tpl: EmitterTemplate = EmitterTemplate()) -> EmittedRecord:
    """Pretrain layout plus an assistant turn holding the seven action tokens."""
    if sample.stage != "finetune":
        raise ValueError("emit_finetune needs a finetune sample")
    if sample.action is None:
        raise MissingAction("finetune sample has no action tokens")
    return _finetune_text(sample.instruction, canonical_string(sample.motion), sample.action.bins, tpl)


def _finetune_text(instruction, motion, bins, tpl) -> EmittedRecord:
    b = _Builder()
    _prompt(b, instruction, motion, tpl)
    b.add(tpl.start_marker + "assistant\n")
    for k in bins:
        b.add(TOKEN_STRINGS[k], loss=True)
    b.add(tpl.stop_marker, loss=True)
    b.add("\n")
    return b.record()


def _pretrain_text(instruction, motion, tpl) -> EmittedRecord:
    b = _Builder()
    _prompt(b, instruction, motion, tpl)
    return b.record()


def record_json(
    episode_id: str,
    step: int,
    frame_ref: Optional[str],
    rec: EmittedRecord,
    stage: str,
    motion: str,
    bins: Optional[list[int]],
) -> str:
    return json.dumps(
        {
            "episode_id": episode_id,
            "step": step,
            "frame_ref": frame_ref,
            "text": rec.text,
            "loss_spans": [list(s) for s in rec.loss_spans],
            "stage": stage,
            "motion": motion,
            "action_bins": bins,
        },
        ensure_ascii=False,
    )


@dataclass
class EmitReport:
    episodes: int = 0
    steps: int = 0
    records: int = 0
    skipped: list = field(default_factory=list)

    @property
    def skipped_steps(self) -> int:
        return sum(n for _, n, _ in self.skipped)


_TOKEN_BYTES = np.array([len(t) for t in TOKEN_STRINGS], dtype=np.int64)


@lru_cache(maxsize=4096)
def _motion_parts(motion: str) -> tuple[str, int, str]:
    return _esc(motion), _nbytes(motion), _dumps(motion)


def _pct(text: str) -> str:
    return text.replace("%", "%%")


class _EpisodeLines:
    """Builds the JSONL lines of one episode from pre-escaped pieces.

    Produces the same bytes as :func:`record_json` over :func:`_pretrain_text`
    or :func:`_finetune_text`. Only the motion string and the bins change
    from step to step, so everything else is escaped and measured once and
    each line is a single ``%`` format.
    """

    def __init__(self, episode_id: str, instruction: str, tpl: EmitterTemplate, stage: str):
        b = _Builder()
        _prompt_head(b, instruction, tpl)
        head = b.record()
        self.head_len = b._offset
        self.stop_len = _nbytes(tpl.stop_marker)
        self.finetune = stage == "finetune"
        head_spans = "".join(f"[{a}, {z}], " for a, z in head.loss_spans)
        fmt = '{"episode_id": ' + _pct(_dumps(episode_id)) + ', "step": %d, "frame_ref": %s, "text": "'
        fmt += _pct(_esc(head.text)) + "%s"
        if self.finetune:
            opener = tpl.start_marker + "assistant\n"
            self.gap = 1 + _nbytes(opener)
            fmt += _pct(_esc(tpl.stop_marker + "\n" + opener))
            fmt += "<extra_%d>" * ACTION_DIM + _pct(_esc(tpl.stop_marker + "\n"))
            n_spans = 3 + ACTION_DIM
        else:
            fmt += _pct(_esc(tpl.stop_marker + "\n"))
            n_spans = 2
        fmt += '", "loss_spans": [' + _pct(head_spans) + ", ".join(["[%d, %d]"] * n_spans) + "]"
        fmt += ', "stage": ' + _pct(_dumps(stage)) + ', "motion": %s, "action_bins": '
        fmt += "[" + ", ".join(["%d"] * ACTION_DIM) + "]}" if self.finetune else "null}"
        self.fmt = fmt

    def lines(self, motions: list[str], refs: list, bins: Optional[np.ndarray] = None) -> list[str]:
        parts = [_motion_parts(m) for m in motions]
        m_len = np.fromiter((p[1] for p in parts), dtype=np.int64, count=len(parts))
        a = self.head_len + m_len
        cols = [self.head_len + 0 * m_len, a, a, a + self.stop_len]
        if self.finetune:
            bounds = a[:, None] + self.stop_len + self.gap + np.concatenate(
                [np.zeros((len(a), 1), np.int64), np.cumsum(_TOKEN_BYTES[bins], axis=1)], axis=1
            )
            for k in range(ACTION_DIM):
                cols += [bounds[:, k], bounds[:, k + 1]]
            end = bounds[:, ACTION_DIM]
            cols += [end, end + self.stop_len]
            rows = np.column_stack(cols).tolist()
            bin_rows = np.asarray(bins).tolist()
            fmt = self.fmt
            return [
                fmt % (j, "null" if r is None else _dumps(r), p[0], *b, *sp, p[2], *b)
                for j, (p, r, sp, b) in enumerate(zip(parts, refs, rows, bin_rows))
            ]
        rows = np.column_stack(cols).tolist()
        fmt = self.fmt
        return [
            fmt % (j, "null" if r is None else _dumps(r), p[0], *sp, p[2])
            for j, (p, r, sp) in enumerate(zip(parts, refs, rows))
        ]


def _dumps(value) -> str:
    return json.dumps(value, ensure_ascii=False)


def _esc(text: str) -> str:
    return _dumps(text)[1:-1]


def _nbytes(text: str) -> int:
    return len(text.encode("utf-8"))


def batch_records(
    trajs: list[Trajectory],
    stats: DatasetStats,
    cfg: PipelineConfig,
    tpl: EmitterTemplate,
    stage: str,
) -> list[list[str]]:
    """JSONL lines of several already validated episodes, one list each.

    Annotation and tokenization run once over the whole batch.
    """
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}, got {stage!r}")
    conv = cfg.axis_convention
    anns = annotate_episodes(trajs, stats, cfg)
    out = []
    for traj, ann in zip(trajs, anns):
        lines = _EpisodeLines(traj.id, traj.instruction, tpl, stage)
        bins = tokenize_array(traj.actions, stats) if stage == "finetune" else None
        out.append(lines.lines(ann.strings(conv), traj.frame_refs, bins))
    return out


def episode_records(
    traj: Trajectory,
    stats: DatasetStats,
    cfg: PipelineConfig,
    tpl: EmitterTemplate,
    stage: str,
) -> list[str]:
    """All JSONL lines of one episode, steps ascending; validates first."""
    validate_trajectory(traj)
    return batch_records([traj], stats, cfg, tpl, stage)[0]


def emit_dataset(
    trajs: Iterable[Trajectory],
    stats: DatasetStats,
    cfg: PipelineConfig,
    tpl: EmitterTemplate,
    stage: str,
    report: Optional[EmitReport] = None,
    strict: bool = False,
    batch_size: int = 128,
) -> Iterator[str]:
    """Yield one JSON line per (episode, step), grouped by episode in input order.

    Episodes that fail validation are skipped and recorded in ``report``
    (or re-raised when ``strict``).
    """
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}, got {stage!r}")
    report = report if report is not None else EmitReport()
    it = iter(trajs)
    while True:
        chunk = list(islice(it, batch_size))
        if not chunk:
            return
        valid = []
        for traj in chunk:
            report.episodes += 1
            report.steps += len(traj)
            try:
                valid.append(validate_trajectory(traj))
            except (ValidationError, EmptyInstruction) as exc:
                if strict:
                    raise
                log.warning("skipping episode %r: %s", traj.id, exc)
                report.skipped.append((traj.id, len(traj), str(exc)))
        for lines in batch_records(valid, stats, cfg, tpl, stage):
            report.records += len(lines)
            yield from lines
