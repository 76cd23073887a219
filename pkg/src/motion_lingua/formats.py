"""Trajectory, config and label file formats."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .core import (
    ACTION_DIM,
    ActionVector,
    MotionLinguaError,
    PipelineConfig,
    Trajectory,
    TrajectoryStep,
)

CSV_ACTION_COLUMNS = ("dx", "dy", "dz", "droll", "dpitch", "dyaw", "gripper")
CSV_POSITION_COLUMNS = ("px", "py", "pz")


class InputError(MotionLinguaError):
    """Unreadable or malformed input; carries the file and line when known."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        self.message = message
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)

    def __reduce__(self):
        return (type(self), (self.message, self.path, self.line))


def _float_list(values, n: int, what: str) -> tuple[float, ...]:
    if not isinstance(values, list) or len(values) != n:
        raise ValueError(f"{what} must be a list of {n} numbers")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"{what} must contain numbers, got {v!r}")
        out.append(float(v))
    return tuple(out)


def _number_rows(rows: list, width: int) -> Optional[np.ndarray]:
    """Stack equal-length numeric lists, or return None so the caller can
    fall back to the per-step path for a precise error."""
    try:
        arr = np.array(rows)
    except ValueError:
        return None
    if arr.dtype.kind not in "if" or arr.shape != (len(rows), width):
        return None
    return arr.astype(np.float64, copy=False)


def _steps_slow(raw_steps: list) -> tuple[TrajectoryStep, ...]:
    steps = []
    for j, raw in enumerate(raw_steps):
        if not isinstance(raw, dict) or "action" not in raw:
            raise ValueError(f"step {j}: needs an 'action' field")
        action = ActionVector(*_float_list(raw["action"], ACTION_DIM, f"step {j} action"))
        position = raw.get("position")
        if position is not None:
            position = _float_list(position, 3, f"step {j} position")
        frame_ref = raw.get("frame_ref")
        if frame_ref is not None and not isinstance(frame_ref, str):
            raise ValueError(f"step {j}: frame_ref must be a string")
        steps.append(TrajectoryStep(action, position, frame_ref))
    return tuple(steps)


def trajectory_from_dict(doc: dict, maybe_bools: bool = True) -> Trajectory:
    """Build a trajectory from one decoded JSONL record (no invariant checks).

    ``maybe_bools=False`` promises that no JSON booleans occur in the
    record, which lets numeric rows skip the per-value type check.
    """
    if not isinstance(doc, dict):
        raise ValueError("episode record must be a JSON object")
    try:
        ep_id = doc["id"]
        instruction = doc["instruction"]
        raw_steps = doc["steps"]
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r}") from None
    if not isinstance(ep_id, str) or not isinstance(instruction, str):
        raise ValueError("'id' and 'instruction' must be strings")
    if not isinstance(raw_steps, list):
        raise ValueError("'steps' must be a list")
    try:
        actions = [s["action"] for s in raw_steps]
        positions = [s.get("position") for s in raw_steps]
        refs = [s.get("frame_ref") for s in raw_steps]
    except (TypeError, KeyError, AttributeError):
        return Trajectory(ep_id, instruction, _steps_slow(raw_steps))
    if maybe_bools:
        # numpy would silently read true/false as 1/0
        return Trajectory(ep_id, instruction, _steps_slow(raw_steps))
    act = _number_rows(actions, ACTION_DIM)
    if act is None:
        return Trajectory(ep_id, instruction, _steps_slow(raw_steps))
    pos = None
    n_pos = len(positions) - positions.count(None)
    if n_pos:
        pos = _number_rows(positions, 3) if n_pos == len(positions) else None
        if pos is None:
            # mixed presence or malformed positions: keep the step form so
            # validation can report the exact step
            return Trajectory(ep_id, instruction, _steps_slow(raw_steps))
    if refs.count(None) == len(refs):
        refs = None
    elif not all(r is None or isinstance(r, str) for r in refs):
        return Trajectory(ep_id, instruction, _steps_slow(raw_steps))
    return Trajectory(ep_id, instruction, actions=act, positions=pos, frame_refs=refs)


def trajectory_to_dict(traj: Trajectory) -> dict:
    steps = []
    for step in traj.steps:
        d: dict = {"action": list(step.action.as_tuple())}
        if step.position is not None:
            d["position"] = list(step.position)
        if step.frame_ref is not None:
            d["frame_ref"] = step.frame_ref
        steps.append(d)
    return {"id": traj.id, "instruction": traj.instruction, "steps": steps}


def dump_trajectory(traj: Trajectory) -> str:
    return json.dumps(trajectory_to_dict(traj), ensure_ascii=False)


def write_trajectories(path, trajs: Iterable[Trajectory]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for traj in trajs:
            fh.write(dump_trajectory(traj) + "\n")
            n += 1
    return n


def parse_jsonl_line(text: str, path: Optional[str] = None, lineno: Optional[int] = None) -> Trajectory:
    """Decode one JSONL episode line, reporting failures with their location."""
    try:
        return trajectory_from_dict(json.loads(text), "true" in text or "false" in text)
    except ValueError as exc:
        raise InputError(str(exc), path, lineno) from None


def _jsonl_lines(path: str) -> Iterator[tuple[str, str, int]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield line, path, lineno


def _read_jsonl(path: str) -> Iterator[Trajectory]:
    for item in _jsonl_lines(path):
        yield parse_jsonl_line(*item)


def _read_csv(path: str) -> Iterator[Trajectory]:
    """One step per row, consecutive rows sharing ``episode_id`` form an episode."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"episode_id", "instruction", *CSV_ACTION_COLUMNS}
        missing = needed - set(reader.fieldnames or ())
        if missing:
            raise InputError(f"missing CSV columns {sorted(missing)}", path, 1)
        current: Optional[str] = None
        instruction = ""
        steps: list[TrajectoryStep] = []
        for row in reader:
            lineno = reader.line_num
            try:
                action = ActionVector(*(float(row[c]) for c in CSV_ACTION_COLUMNS))
                pos_raw = [row.get(c) or "" for c in CSV_POSITION_COLUMNS]
                if any(pos_raw):
                    position = tuple(float(v) for v in pos_raw)
                else:
                    position = None
            except (TypeError, ValueError) as exc:
                raise InputError(f"bad number: {exc}", path, lineno) from None
            frame_ref = row.get("frame_ref") or None
            if row["episode_id"] != current:
                if current is not None:
                    yield Trajectory(current, instruction, tuple(steps))
                current, instruction, steps = row["episode_id"], row["instruction"], []
            steps.append(TrajectoryStep(action, position, frame_ref))
        if current is not None:
            yield Trajectory(current, instruction, tuple(steps))


def _check_path(path) -> str:
    if not Path(path).is_file():
        raise InputError("no such file", str(path))
    return str(path)


def _is_csv(path: str) -> bool:
    return path.lower().endswith(".csv")


def read_trajectories(paths: Sequence[str]) -> Iterator[Trajectory]:
    """Stream episodes from JSONL (default) or ``.csv`` files, in order."""
    for path in map(_check_path, paths):
        yield from (_read_csv if _is_csv(path) else _read_jsonl)(path)


def episode_sources(paths: Sequence[str]) -> Iterator:
    """Like :func:`read_trajectories`, but JSONL episodes come out undecoded
    as ``(line, path, lineno)`` so the decoding can happen in a worker; see
    :func:`load_source`."""
    for path in map(_check_path, paths):
        yield from (_read_csv if _is_csv(path) else _jsonl_lines)(path)


def load_source(item) -> Trajectory:
    return item if isinstance(item, Trajectory) else parse_jsonl_line(*item)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    from .core import ConfigError

    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("syntax", f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError("duplicate_key", f"line {lineno}: {key!r} given twice")
        values[key] = value
    return values


def load_config(path: Optional[str], overrides: Optional[dict] = None) -> PipelineConfig:
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    values.update(overrides or {})
    return PipelineConfig.from_mapping(values)


def config_text(cfg: PipelineConfig) -> str:
    """Render ``cfg`` in the flat config-file format."""
    lines = []
    for key, value in cfg.to_dict().items():
        if key == "axis_convention":
            for axis, word in value.items():
                lines.append(f"axis_{axis} = {word}")
        elif key == "t_base":
            lines.append("t_base = " + ", ".join(repr(v) for v in value))
        else:
            lines.append(f"{key} = {str(value).lower() if isinstance(value, bool) else value}")
    return "\n".join(lines) + "\n"


def label_lines(episode_id: str, motions: Sequence[str]) -> list[str]:
    """One ``{"episode_id", "step", "motion"}`` JSON object per step.

    Same bytes as ``json.dumps(..., ensure_ascii=False)``; built from escaped
    pieces because this runs once per step on large inputs.
    """
    head = '{"episode_id": ' + json.dumps(episode_id, ensure_ascii=False) + ', "step": '
    escaped: dict = {}
    out = []
    for j, m in enumerate(motions):
        e = escaped.get(m)
        if e is None:
            e = escaped[m] = json.dumps(m, ensure_ascii=False)
        out.append(f'{head}{j}, "motion": {e}}}')
    return out
