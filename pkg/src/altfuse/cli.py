"""Command-line entry point.

Subcommands: ``generate``, ``train``, ``eval``, ``sweep``, ``ablate``,
``export-plot``. Runs are described by a JSON config file (version
``mla-config/1``); ``--set key=value`` overrides individual fields using
dotted paths. Outputs are deterministic byte-for-byte: metric records carry
a logical timestamp (record index within the run) and a run id derived from
the config hash, never wall-clock time.

Exit codes: 0 success, 2 usage/config error, 3 I/O error, 4 numeric failure.
Log verbosity comes from the ``MLA_LOG`` environment variable
(error | info | debug).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import altopt, evaluation
from . import model as mdl
from .baselines import load_model, save_concat_checkpoint, save_late_checkpoint
from .data import (
    ModalityGen,
    MultimodalDataset,
    SplitSpec,
    SyntheticSpec,
    apply_missing_mask,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split,
)
from .errors import ContractViolation, FormatError, NumericError, SchemaError
from .numkernel import mix_seed

CONFIG_VERSION = "mla-config/1"

log = logging.getLogger("altfuse")


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("MLA_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s: %(message)s")


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    output_dir: Path
    synthetic: SyntheticSpec | None
    dataset_path: Path | None
    split: SplitSpec
    mask_eta: float
    mask_seed: int
    train: altopt.TrainConfig
    model_kind: str
    eval_dynamic_fusion: bool
    eval_gap: bool
    sweep_etas: tuple[float, ...]
    sweep_seeds: tuple[int, ...]
    sweep_kind: str
    run_id: str


def _apply_override(raw: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ContractViolation(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    node = raw
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ContractViolation(f"--set path {key!r} crosses a non-object field")
    node[parts[-1]] = parsed


def _pick(section: dict, cls, **extra):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ContractViolation(f"unknown config fields {sorted(unknown)} for {cls.__name__}")
    kwargs = dict(section)
    kwargs.update(extra)
    for f in fields(cls):
        if f.name in kwargs and isinstance(kwargs[f.name], list):
            kwargs[f.name] = tuple(kwargs[f.name])
    return cls(**kwargs)


def load_config(path: str | Path, overrides: list[str] | None = None) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ContractViolation(f"config parse error at byte {e.pos}: {e.msg}") from e
    for assignment in overrides or []:
        _apply_override(raw, assignment)
    if raw.get("version") != CONFIG_VERSION:
        raise ContractViolation(f"unsupported config version {raw.get('version')!r}")
    if "output_dir" not in raw:
        raise ContractViolation("config needs output_dir")

    dataset = raw.get("dataset", {})
    if ("synthetic" in dataset) == ("path" in dataset):
        raise ContractViolation("config dataset must have exactly one of synthetic/path")
    synthetic = None
    if "synthetic" in dataset:
        section = dict(dataset["synthetic"])
        mods = tuple(_pick(m, ModalityGen) for m in section.pop("modalities", []))
        synthetic = _pick(section, SyntheticSpec, modalities=mods)

    mask = raw.get("mask", {})
    eval_section = raw.get("eval", {})
    sweep = raw.get("sweep", {})
    model_kind = raw.get("model_kind", "mla")
    if model_kind not in ("mla", "concat", "late"):
        raise ContractViolation(f"unknown model_kind {model_kind!r}")

    try:
        config = ExperimentConfig(
            output_dir=Path(raw["output_dir"]),
            synthetic=synthetic,
            dataset_path=Path(dataset["path"]) if "path" in dataset else None,
            split=_pick(raw.get("split", {}), SplitSpec),
            mask_eta=float(mask.get("eta", 0.0)),
            mask_seed=int(mask.get("seed", 0)),
            train=_pick(raw.get("train", {}), altopt.TrainConfig),
            model_kind=model_kind,
            eval_dynamic_fusion=bool(eval_section.get("dynamic_fusion", True)),
            eval_gap=bool(eval_section.get("gap", False)),
            sweep_etas=tuple(float(e) for e in sweep.get("etas", [])),
            sweep_seeds=tuple(int(s) for s in sweep.get("seeds", [])),
            sweep_kind=sweep.get("kind", "mla"),
            # the run id names the experiment definition, not where it lands
            run_id=hashlib.sha256(
                json.dumps(
                    {k: v for k, v in raw.items() if k != "output_dir"},
                    sort_keys=True,
                    separators=(",", ":"),
                ).encode()
            ).hexdigest()[:12],
        )
    except TypeError as e:
        raise ContractViolation(f"config: {e}") from e
    if not 0.0 <= config.mask_eta < 1.0:
        raise ContractViolation("mask.eta must lie in [0, 1)")
    return config


def resolve_dataset(config: ExperimentConfig) -> MultimodalDataset:
    if config.synthetic is not None:
        return generate_synthetic(config.synthetic)
    return load_dataset(config.dataset_path)


def resolve_splits(config: ExperimentConfig):
    """Split, then mask each split with a split-specific sub-seed of mask.seed."""
    parts = split(resolve_dataset(config), config.split)
    if config.mask_eta == 0.0:
        return parts
    return tuple(
        apply_missing_mask(part, config.mask_eta, mix_seed(config.mask_seed, i))
        for i, part in enumerate(parts)
    )


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


class MetricsWriter:
    """Appends one JSON object per line; logical timestamps keep runs reproducible."""

    def __init__(self, path: Path, run_id: str):
        path.parent.mkdir(parents=True, exist_ok=True)
        self._f = open(path, "w")
        self._run = run_id
        self._ts = 0

    def write(self, phase: str, **metrics) -> None:
        for key, value in metrics.items():
            if isinstance(value, float) and not np.isfinite(value):
                raise NumericError(f"non-finite metric {key} in phase {phase}")
        record = {"ts": self._ts, "run": self._run, "phase": phase, **metrics}
        self._f.write(json.dumps(record, sort_keys=True) + "\n")
        self._f.flush()
        self._ts += 1

    def close(self) -> None:
        self._f.close()


def _report_dict(report: evaluation.EvalReport) -> dict:
    return {
        "probe_accuracies": report.probe_accuracies,
        "multi_accuracy": report.multi_accuracy,
        "confusion": report.confusion.tolist(),
        "sample_count": report.sample_count,
    }


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_generate(config: ExperimentConfig) -> int:
    if config.synthetic is None:
        raise ContractViolation("generate needs a synthetic dataset spec")
    ds = generate_synthetic(config.synthetic)
    out = config.output_dir / "dataset"
    save_dataset(ds, out)
    summary = {
        "path": str(out),
        "M": ds.modality_count,
        "N": ds.sample_count,
        "C": ds.class_count,
        "modality_dims": list(ds.modality_dims),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_train(config: ExperimentConfig) -> int:
    train_ds, _, _ = resolve_splits(config)
    ckpt = config.output_dir / "checkpoint"
    writer = MetricsWriter(config.output_dir / "train_metrics.jsonl", config.run_id)
    try:
        if config.model_kind == "mla":
            params, history = altopt.train(config.train, train_ds)
            mdl.save_checkpoint(params, ckpt, step=config.train.total_steps)
            for rec in history:
                writer.write(
                    "train", step=rec.step, modality=rec.modality, loss=rec.loss, lr=rec.lr
                )
        elif config.model_kind == "concat":
            save_concat_checkpoint(
                evaluation.train_kind("concat", config.train, train_ds),
                ckpt,
                step=config.train.total_steps,
            )
        else:
            save_late_checkpoint(
                evaluation.train_kind("late", config.train, train_ds),
                ckpt,
                step=config.train.total_steps,
            )
    finally:
        writer.close()
    log.info("checkpoint written to %s", ckpt)
    return 0


def cmd_eval(config: ExperimentConfig, checkpoint: str | None) -> int:
    try:
        model, _ = load_model(Path(checkpoint) if checkpoint else config.output_dir / "checkpoint")
    except FormatError as e:
        # a corrupted checkpoint argument is a usage error for eval (exit 2)
        raise SchemaError(str(e)) from e
    _, _, test_ds = resolve_splits(config)
    report = evaluation.evaluate(model, test_ds, dynamic_fusion=config.eval_dynamic_fusion)
    payload = _report_dict(report)
    if config.eval_gap:
        if not isinstance(model, mdl.ModelParams):
            raise ContractViolation("gap diagnostic applies to the alternating model only")
        gap = evaluation.modality_gap(model, test_ds)
        payload["gap_distances"] = gap.distances.tolist()
        writer = MetricsWriter(config.output_dir / "eval_metrics.jsonl", config.run_id)
        try:
            for a in range(gap.distances.shape[0]):
                for b in range(a + 1, gap.distances.shape[0]):
                    writer.write(
                        "gap", modality_a=a, modality_b=b, distance=float(gap.distances[a, b])
                    )
        finally:
            writer.close()
    config.output_dir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True)
    (config.output_dir / "eval.json").write_text(text + "\n")
    print(text)
    return 0


def _sweep_run(args) -> dict:
    train_config, base, split_spec, kind, eta, seed = args
    train_ds, _, test_ds = evaluation.masked_splits(base, split_spec, eta, seed)
    model = evaluation.train_kind(kind, replace(train_config, seed=seed), train_ds)
    report = evaluation.evaluate(model, test_ds)
    return {
        "eta": eta,
        "seed": seed,
        "multi_accuracy": report.multi_accuracy,
        "probe_accuracies": report.probe_accuracies,
        "sample_count": report.sample_count,
    }


def cmd_sweep(config: ExperimentConfig, jobs: int) -> int:
    if not config.sweep_etas or not config.sweep_seeds:
        raise ContractViolation("sweep needs sweep.etas and sweep.seeds in the config")
    etas = sorted(config.sweep_etas)
    base = resolve_dataset(config)
    tasks = [
        (config.train, base, config.split, config.sweep_kind, eta, seed)
        for eta in etas
        for seed in config.sweep_seeds
    ]
    writer = MetricsWriter(config.output_dir / "sweep_metrics.jsonl", config.run_id)
    try:
        if jobs > 1:
            # independent runs; map preserves task order so output stays sorted by eta
            with Pool(jobs) as pool:
                results = pool.map(_sweep_run, tasks)
            for res in results:
                writer.write("sweep", **res)
        else:
            results = []
            for task in tasks:
                res = _sweep_run(task)
                writer.write("sweep", **res)  # flushed per record
                results.append(res)
    finally:
        writer.close()
    print(json.dumps({"rows": results}, sort_keys=True))
    return 0


def cmd_ablate(config: ExperimentConfig) -> int:
    train_ds, _, test_ds = resolve_splits(config)
    grid = evaluation.ablate(config.train, train_ds, test_ds)
    writer = MetricsWriter(config.output_dir / "ablate_metrics.jsonl", config.run_id)
    cells = []
    try:
        for (hgm, df), report in sorted(grid.items(), reverse=True):
            cell = {
                "hgm": hgm,
                "df": df,
                "multi_accuracy": report.multi_accuracy,
                "probe_accuracies": report.probe_accuracies,
            }
            writer.write("ablate", **cell)
            cells.append(cell)
    finally:
        writer.close()
    print(json.dumps({"cells": cells}, sort_keys=True))
    return 0


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"  # 17 significant digits: lossless float64 round trip
    return str(value)


def cmd_export_plot(metrics_path: str, out_dir: str) -> int:
    records = []
    with open(metrics_path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise FormatError(f"{metrics_path}: bad JSONL at line {lineno}: {e.msg}") from e
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = {
        "loss_vs_step.csv": (
            ("step", "modality", "loss", "lr"),
            [r for r in records if r.get("phase") == "train"],
        ),
        "accuracy_vs_eta.csv": (
            ("eta", "seed", "multi_accuracy"),
            [r for r in records if r.get("phase") == "sweep"],
        ),
        "gap_distances.csv": (
            ("modality_a", "modality_b", "distance"),
            [r for r in records if r.get("phase") == "gap"],
        ),
    }
    for name, (header, rows) in tables.items():
        with open(out / name, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(r.get(col)) for col in header])
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="altfuse")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("config", help="path to a mla-config/1 JSON file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (dotted path, JSON value)")
        return p

    with_config(sub.add_parser("generate", help="write a synthetic dataset directory"))
    with_config(sub.add_parser("train", help="train and write a checkpoint + metrics"))
    p_eval = with_config(sub.add_parser("eval", help="evaluate a checkpoint on the test split"))
    p_eval.add_argument("--checkpoint", help="checkpoint dir (default <output_dir>/checkpoint)")
    p_sweep = with_config(sub.add_parser("sweep", help="missing-rate sweep"))
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel (eta, seed) runs")
    with_config(sub.add_parser("ablate", help="2x2 gradient-modification/fusion ablation"))
    p_export = sub.add_parser("export-plot", help="convert metrics JSONL to CSV tables")
    p_export.add_argument("metrics", help="path to a metrics .jsonl file")
    p_export.add_argument("--out-dir", default=".", help="directory for the CSV files")
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "export-plot":
            return cmd_export_plot(args.metrics, args.out_dir)
        config = load_config(args.config, args.set)
        config.output_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "generate":
            return cmd_generate(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "eval":
            return cmd_eval(config, args.checkpoint)
        if args.command == "sweep":
            return cmd_sweep(config, args.jobs)
        if args.command == "ablate":
            return cmd_ablate(config)
        raise ContractViolation(f"unknown command {args.command!r}")
    except (ContractViolation, SchemaError) as e:
        log.error("%s", e)
        return 2
    except FormatError as e:
        log.error("%s", e)
        return 3
    except OSError as e:
        log.error("%s", e)
        return 3
    except NumericError as e:
        log.error("%s", e)
        return 4


if __name__ == "__main__":
    sys.exit(main())
