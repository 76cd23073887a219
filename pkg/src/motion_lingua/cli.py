"""Command-line entry point: ``motion-lingua {stats,annotate,emit,benchmark,oracle-check}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from itertools import islice
from multiprocessing import Pool
from pathlib import Path
from typing import Callable, Iterable, Optional

from .core import ConfigError, EmptyInstruction, PipelineConfig, ValidationError, validate_trajectory
from .emitter import STAGES, EmitterTemplate, batch_records
from .formats import InputError, episode_sources, label_lines, load_config, load_source, read_trajectories
from .harness import InvalidSpec, Segment, SyntheticSpec, jitter_sweep, run_benchmark, sweep_csv
from .renderer import MalformedMotionString, annotate_episodes, parse_label
from .tokenizer import DatasetStats, EmptyDataset, StatsAccumulator, StatsFormatError

log = logging.getLogger("motion_lingua")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


class InvariantViolation(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    inputs: list
    config_digest: Optional[str]
    stats_path: Optional[str]
    output_path: Optional[str]
    counts: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def check(self) -> None:
        c = self.counts
        if "records" in c and c["records"] != c["steps"] - c["skipped_steps"]:
            raise InvariantViolation(
                f"record count {c['records']} != steps {c['steps']} - skipped {c['skipped_steps']}"
            )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _resolve_config(args) -> PipelineConfig:
    overrides = {}
    if getattr(args, "anchor", None):
        overrides["anchor"] = args.anchor
    return load_config(args.config, overrides)


def _load_stats(path: str) -> DatasetStats:
    try:
        return DatasetStats.from_json(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read stats: {exc.strerror}", path) from None
    except StatsFormatError as exc:
        raise InputError(str(exc), path) from None


CHUNK_EPISODES = 128


class _ChunkJob:
    """Picklable work item: decode, validate and process a chunk of episodes.

    ``fn`` maps a list of valid trajectories to one list of lines each.
    """

    def __init__(self, fn: Callable, *extra):
        self.fn = fn
        self.extra = extra

    def __call__(self, items):
        trajs = [load_source(item) for item in items]
        errors = {}
        valid = []
        for k, traj in enumerate(trajs):
            try:
                valid.append(validate_trajectory(traj))
            except (ValidationError, EmptyInstruction) as exc:
                errors[k] = exc
        outputs = iter(self.fn(valid, *self.extra))
        results = []
        for k, traj in enumerate(trajs):
            if k in errors:
                results.append((traj.id, len(traj), 0, None, errors[k]))
                continue
            lines = next(outputs)
            results.append((traj.id, len(traj), len(lines), "".join(line + "\n" for line in lines), None))
        return results


def _chunks(items: Iterable, size: int):
    it = iter(items)
    while chunk := list(islice(it, size)):
        yield chunk


def _run_episodes(job: _ChunkJob, sources: Iterable, workers: int):
    """Yield per-episode results in input order, optionally from a process pool."""
    chunks = _chunks(sources, CHUNK_EPISODES)
    if workers <= 1:
        for chunk in chunks:
            yield from job(chunk)
        return
    with Pool(workers) as pool:
        # imap preserves input order, acting as the reorder buffer
        for results in pool.imap(job, chunks):
            yield from results


def _annotate_lines(trajs, stats, cfg):
    conv = cfg.axis_convention
    return [
        label_lines(traj.id, ann.strings(conv))
        for traj, ann in zip(trajs, annotate_episodes(trajs, stats, cfg))
    ]


def _write_episodes(args, manifest: RunManifest, job: _ChunkJob) -> None:
    counts = {"episodes": 0, "steps": 0, "skipped": 0, "skipped_steps": 0, "records": 0}
    out_path = Path(args.out)
    tmp = out_path.with_name(out_path.name + ".partial")
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            sources = episode_sources(args.inputs)
            for ep_id, n_steps, n_lines, text, err in _run_episodes(job, sources, args.workers):
                counts["episodes"] += 1
                counts["steps"] += n_steps
                if err is not None:
                    if args.strict:
                        raise err
                    log.warning("skipping episode %r: %s", ep_id, err)
                    counts["skipped"] += 1
                    counts["skipped_steps"] += n_steps
                    continue
                counts["records"] += n_lines
                fh.write(text)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    os.replace(tmp, out_path)
    manifest.counts = counts


def cmd_stats(args) -> RunManifest:
    acc = StatsAccumulator()
    episodes = 0
    for traj in read_trajectories(args.inputs):
        acc.add(traj)
        episodes += 1
    stats = acc.finalize()
    Path(args.out).write_text(stats.to_json(), encoding="utf-8")
    return RunManifest(
        "stats", list(args.inputs), None, args.out, args.out,
        {"episodes": episodes, "steps": stats.count},
    )


def cmd_annotate(args) -> RunManifest:
    cfg = _resolve_config(args)
    stats = _load_stats(args.stats)
    manifest = RunManifest("annotate", list(args.inputs), cfg.digest(), args.stats, args.out)
    _write_episodes(args, manifest, _ChunkJob(_annotate_lines, stats, cfg))
    return manifest


def cmd_emit(args) -> RunManifest:
    cfg = _resolve_config(args)
    stats = _load_stats(args.stats)
    tpl = EmitterTemplate()
    if args.template:
        try:
            tpl = EmitterTemplate.from_json(Path(args.template).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read template: {exc.strerror}", args.template) from None
        except (ValueError, TypeError) as exc:
            raise ConfigError("template", str(exc)) from None
    manifest = RunManifest("emit", list(args.inputs), cfg.digest(), args.stats, args.out)
    _write_episodes(args, manifest, _ChunkJob(batch_records, stats, cfg, tpl, args.stage))
    return manifest


def load_spec(path: Optional[str], seed: Optional[int], jitter: Optional[float]) -> SyntheticSpec:
    """Benchmark spec from a JSON document of SyntheticSpec fields.

    Explicit episodes are lists of ``{"label", "duration", "magnitude"}``
    objects, labels written as motion strings.
    """
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read spec: {exc.strerror}", path) from None
        except ValueError as exc:
            raise InvalidSpec(f"{path}: {exc}") from None
        if not isinstance(doc, dict):
            raise InvalidSpec(f"{path}: spec must be a JSON object")
    known = set(SyntheticSpec.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise InvalidSpec(f"unknown spec keys {sorted(unknown)}")
    if seed is not None:
        doc["seed"] = seed
    if jitter is not None:
        doc["jitter_amplitude"] = jitter
    if doc.get("episodes") is not None:
        try:
            doc["episodes"] = tuple(
                tuple(
                    Segment(parse_label(s["label"]), int(s["duration"]), float(s["magnitude"]), s.get("rot_magnitude"))
                    for s in ep
                )
                for ep in doc["episodes"]
            )
        except (KeyError, TypeError, ValueError, MalformedMotionString) as exc:
            raise InvalidSpec(f"malformed episodes: {exc}") from None
    if "magnitude_range" in doc:
        doc["magnitude_range"] = tuple(doc["magnitude_range"])
    try:
        return SyntheticSpec(**doc)
    except TypeError as exc:
        raise InvalidSpec(str(exc)) from None


def cmd_benchmark(args) -> RunManifest:
    cfg = load_config(args.config)
    spec = load_spec(args.spec, args.seed, args.jitter)
    result = run_benchmark(spec, cfg, fixed_T=args.fixed_t, window=args.window)
    Path(args.out).write_text(result.to_json(), encoding="utf-8")
    counts = {
        "episodes": spec.n_episodes,
        "steps": result.adaptive.steps,
        "adaptive_accuracy": result.adaptive.mean_accuracy,
        "fixed_accuracy": result.fixed.mean_accuracy,
    }
    if args.sweep_csv or args.figures:
        seeds = range(spec.seed, spec.seed + args.sweep_seeds)
        rows = jitter_sweep(spec, cfg, seeds=seeds, window=args.window)
        if args.sweep_csv:
            Path(args.sweep_csv).write_text(sweep_csv(rows), encoding="utf-8")
        if args.figures:
            from .plotting import plot_fixed_sweep, plot_jitter_sweep

            fig_dir = Path(args.figures)
            fig_dir.mkdir(parents=True, exist_ok=True)
            plot_jitter_sweep(rows, fig_dir / "jitter_sweep.png")
            plot_fixed_sweep(result, fig_dir / "fixed_threshold_sweep.png")
    return RunManifest("benchmark", [args.spec] if args.spec else [], cfg.digest(), None, args.out, counts)


def cmd_oracle_check(args) -> RunManifest:
    from .oracle import oracle_check

    cfg = _resolve_config(args)
    report = oracle_check(args.episodes, args.seed if args.seed is not None else 0, args.max_length, cfg)
    counts = {
        "episodes": report.episodes,
        "steps": report.steps,
        "verdict_mismatches": report.verdict_mismatches,
        "label_mismatches": report.label_mismatches,
    }
    manifest = RunManifest("oracle-check", [], cfg.digest(), None, None, counts)
    if not report.ok:
        print(manifest.to_json())
        raise InvariantViolation(f"detector disagrees with the reference: {report.examples}")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motion-lingua", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, inputs=True, stats=True):
        if inputs:
            p.add_argument("inputs", nargs="+", help="trajectory files (.jsonl, or .csv)")
        if stats:
            p.add_argument("--stats", required=True, help="stats JSON from 'stats'")
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--anchor", choices=("forward", "backward"))
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--strict", action="store_true", help="fail on the first invalid episode")

    p = sub.add_parser("stats", help="compute 1st/99th percentile normalization bounds")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("annotate", help="write one motion label per step")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("emit", help="write chat-format training records")
    common(p)
    p.add_argument("--stage", choices=STAGES, required=True)
    p.add_argument("--template", help="JSON with system_text/start_marker/stop_marker/question_format")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("benchmark", help="adaptive vs fixed-threshold accuracy on synthetic data")
    p.add_argument("--spec", help="JSON of SyntheticSpec fields")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--jitter", type=float, help="jitter amplitude (normalized units)")
    p.add_argument("--fixed-t", type=float, help="baseline threshold; default sweeps a grid")
    p.add_argument("--window", type=int, help="baseline window (default dt_mid)")
    p.add_argument("--sweep-csv", help="also write the jitter sweep as CSV")
    p.add_argument("--sweep-seeds", type=int, default=20)
    p.add_argument("--figures", help="directory for sweep figures (PNG)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("oracle-check", help="compare the detector with the naive reference")
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--max-length", type=int, default=32)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--anchor", choices=("forward", "backward"))
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("MOTION_LINGUA_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        manifest = args.func(args)
        manifest.wall_time = round(time.perf_counter() - start, 3)
        manifest.check()
    except (ConfigError, InvalidSpec) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, EmptyDataset, ValidationError, EmptyInstruction) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    print(manifest.to_json())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
