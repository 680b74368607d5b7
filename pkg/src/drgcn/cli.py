"""Experiment command line: training runs, sweeps, ablations, alpha exports.

Config files are flat ``key = value`` text; ``[section]`` headers are allowed
for readability and ignored, ``#``/``;`` start comments. Unknown keys are
hard errors. All artifacts land under the output directory next to a
manifest.json naming them and the hash of the resolved configuration.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import derive_seed
from .data import (DataError, SplitSpec, gen_synthetic, make_split,
                   read_container, row_normalize_features, write_container)
from .model import ConfigError, ModelConfig
from .params_io import load_params, save_params
from .training import (DivergenceError, TrainConfig, TrainingError, evaluate,
                       train_full_batch, train_mini_batch)

__all__ = ["main", "RunConfig", "load_run_config", "parse_config_text"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

_MODEL_KEYS = {
    "variant": str, "layers": int, "hidden": int, "combine": str,
    "cell": str, "fixed_alpha": float, "input_dropout": float,
    "dynamic_shared": bool, "bypass_evolving": bool, "constant_alpha": float,
}
_TRAIN_KEYS = {
    "lr": float, "patience": int, "max_epochs": int, "l2_conv": float,
    "l2_fc": float, "l2_evolving": float, "s_augment": int,
    "drop_rate": float, "temperature": float, "lambda": float,
    "trace_stride": int,
}
_RUN_KEYS = {
    "dataset": str, "out": str, "seed": int, "repeats": int,
    "row_normalize": bool,
    "train_size": int, "valid_size": int, "test_size": int,
    "split_mode": str, "split_seed": int,
    "batch_size": int, "fanouts": str,
    "layers_axis": str, "train_size_axis": str, "fixed_alpha_axis": str,
}
KNOWN_KEYS = {**_MODEL_KEYS, **_TRAIN_KEYS, **_RUN_KEYS}


class CliConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str | None = None
    out: str = "runs"
    seed: int = 0
    repeats: int = 5
    row_normalize: bool = True
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    batch_size: int | None = None
    fanouts: list[int] | None = None
    axes: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        # identifies the experiment; the output location is deliberately
        # excluded so relocated reruns hash identically
        return {
            "dataset": self.dataset, "seed": self.seed,
            "repeats": self.repeats, "row_normalize": self.row_normalize,
            "model": dict(sorted(self.model.items())),
            "train": dict(sorted(self.train.items())),
            "split": dict(sorted(self.split.items())),
            "batch_size": self.batch_size, "fanouts": self.fanouts,
            "axes": dict(sorted(self.axes.items())),
        }

    def config_hash(self) -> str:
        canon = json.dumps(self.resolved(), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def model_config(self, classes: int) -> ModelConfig:
        # experiment configs state their depth explicitly
        if "layers" not in self.model:
            raise CliConfigError("missing config key 'layers'")
        return ModelConfig(classes=classes, **self.model)

    def train_config(self, seed: int | None = None) -> TrainConfig:
        kwargs = dict(self.train)
        if "lambda" in kwargs:
            kwargs["lam"] = kwargs.pop("lambda")
        tcfg = TrainConfig(seed=self.seed if seed is None else seed, **kwargs)
        tcfg.validate()
        return tcfg


def parse_config_text(text: str) -> dict[str, str]:
    """Flat key-value pairs; section headers organize, they do not namespace."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            continue
        if "=" not in line:
            raise CliConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].split(";", 1)[0].strip()
        if key in out:
            raise CliConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _convert(key: str, value: str):
    kind = KNOWN_KEYS[key]
    if value.lower() == "none":
        return None
    if kind is bool:
        if value.lower() in ("true", "1", "yes", "on"):
            return True
        if value.lower() in ("false", "0", "no", "off"):
            return False
        raise CliConfigError(f"key {key!r}: expected a boolean, got {value!r}")
    try:
        return kind(value)
    except ValueError as err:
        raise CliConfigError(f"key {key!r}: {err}") from err


def _int_list(text: str, key: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as err:
        raise CliConfigError(f"key {key!r}: {err}") from err


def _float_list(text: str, key: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as err:
        raise CliConfigError(f"key {key!r}: {err}") from err


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise CliConfigError(f"config file not found: {path}")
    raw = parse_config_text(path.read_text(encoding="utf-8"))
    unknown = sorted(set(raw) - set(KNOWN_KEYS))
    if unknown:
        raise CliConfigError(f"unknown config keys: {', '.join(unknown)}")

    cfg = RunConfig()
    for key, text in raw.items():
        value = _convert(key, text)
        if key in _MODEL_KEYS:
            cfg.model[key] = value
        elif key in _TRAIN_KEYS:
            cfg.train[key] = value
        elif key == "dataset":
            cfg.dataset = value
        elif key == "out":
            cfg.out = value
        elif key == "seed":
            cfg.seed = value
        elif key == "repeats":
            cfg.repeats = value
        elif key == "row_normalize":
            cfg.row_normalize = value
        elif key in ("train_size", "valid_size", "test_size", "split_mode",
                     "split_seed"):
            cfg.split[key] = value
        elif key == "batch_size":
            cfg.batch_size = value
        elif key == "fanouts":
            cfg.fanouts = _int_list(text, key)
        elif key == "layers_axis":
            cfg.axes["layers"] = _int_list(text, key)
        elif key == "train_size_axis":
            cfg.axes["train_size"] = _int_list(text, key)
        elif key == "fixed_alpha_axis":
            cfg.axes["fixed_alpha"] = _float_list(text, key)
    return cfg


# ---------------------------------------------------------------------------
# shared run helpers

def _load_dataset(cfg: RunConfig):
    if not cfg.dataset:
        raise CliConfigError("missing config key 'dataset'")
    ds = read_container(cfg.dataset)
    if cfg.row_normalize:
        ds = row_normalize_features(ds)
    if cfg.split:
        spec = SplitSpec(
            train_size=cfg.split.get("train_size", ds.masks["train"].size),
            valid_size=cfg.split.get("valid_size", ds.masks["valid"].size),
            test_size=cfg.split.get("test_size", ds.masks["test"].size),
            mode=cfg.split.get("split_mode", "fixed_public"),
            seed=cfg.split.get("split_seed", 0))
        ds = make_split(ds, spec)
    return ds


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)


def _write_csv(path: Path, columns: list[str], rows) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                    encoding="utf-8")


def _write_manifest(out: Path, command: str, cfg_hash: str, seed,
                    artifacts: list[str]) -> None:
    _write_json(out / "manifest.json", {
        "command": command, "config_sha256": cfg_hash, "seed": seed,
        "artifacts": sorted(artifacts),
    })


def _train_once(ds, cfg: RunConfig, seed: int):
    mcfg = cfg.model_config(ds.num_classes)
    tcfg = cfg.train_config(seed=seed)
    if cfg.batch_size is not None:
        fanouts = cfg.fanouts or [10] * mcfg.layers
        return mcfg, *train_mini_batch(ds, mcfg, tcfg, fanouts, cfg.batch_size)
    return mcfg, *train_full_batch(ds, mcfg, tcfg)


# ---------------------------------------------------------------------------
# commands

def cmd_train(cfg: RunConfig, out: Path) -> int:
    ds = _load_dataset(cfg)
    mcfg, params, history = _train_once(ds, cfg, cfg.seed)
    metrics = evaluate(ds, mcfg, params)

    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "history.csv",
               ["epoch", "train_loss", "train_acc", "valid_acc"],
               zip(history.epochs, history.train_loss, history.train_acc,
                   history.valid_acc))
    _write_json(out / "metrics.json", {
        "train_accuracy": metrics["accuracy"]["train"],
        "valid_accuracy": metrics["accuracy"]["valid"],
        "test_accuracy": metrics["accuracy"]["test"],
        "best_epoch": history.best_epoch,
        "epochs_run": len(history.epochs),
        "seed": cfg.seed,
        "config_sha256": cfg.config_hash(),
    })
    save_params(out / "params.bin", mcfg, params, history.alpha,
                extra={"dataset": str(cfg.dataset), "seed": cfg.seed})
    _write_manifest(out, "train", cfg.config_hash(), cfg.seed,
                    ["history.csv", "metrics.json", "params.bin"])
    print(f"train: test_accuracy={metrics['accuracy']['test']:.4f} "
          f"best_epoch={history.best_epoch} -> {out}")
    return EXIT_OK


def cmd_eval(params_path: str, data_path: str, out: Path | None) -> int:
    mcfg, params, _, _ = load_params(params_path)
    ds = read_container(data_path)
    if ds.num_classes != mcfg.classes:
        raise DataError(f"params expect {mcfg.classes} classes, container "
                        f"has {ds.num_classes}")
    metrics = evaluate(ds, mcfg, params)
    payload = {"accuracy": metrics["accuracy"],
               "smoothness_mad": metrics["smoothness_mad"]}
    text = json.dumps(payload, sort_keys=True, indent=1)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def _sweep_cell(cfg: RunConfig, axis: str, value) -> RunConfig:
    cell = replace(cfg)
    cell.model = dict(cfg.model)
    cell.split = dict(cfg.split)
    if axis == "layers":
        cell.model["layers"] = int(value)
    elif axis == "fixed_alpha":
        cell.model["fixed_alpha"] = float(value)
    elif axis == "train_size":
        cell.split["train_size"] = int(value)
        cell.split.setdefault("split_mode", "seeded_random")
    return cell


def cmd_sweep(cfg: RunConfig, axis: str, repeats: int, out: Path) -> int:
    if axis not in ("layers", "train_size", "fixed_alpha"):
        raise CliConfigError(f"unknown sweep axis {axis!r}")
    values = cfg.axes.get(axis)
    if not values:
        raise CliConfigError(f"config key '{axis}_axis' is missing or empty")
    if repeats < 1:
        raise CliConfigError("repeats must be >= 1")

    rows = []
    detail = []
    for value in values:
        cell_cfg = _sweep_cell(cfg, axis, value)
        ds = _load_dataset(cell_cfg)
        accs, failures = [], []
        for rep in range(repeats):
            seed = derive_seed(cfg.seed, axis, value, rep)
            try:
                mcfg, params, history = _train_once(ds, cell_cfg, seed)
                acc = evaluate(ds, mcfg, params)["accuracy"]["test"]
                accs.append(acc)
            except DivergenceError as err:
                failures.append({"repeat": rep, "error": str(err)})
        mean = float(np.mean(accs)) if accs else float("nan")
        std = float(np.std(accs)) if accs else float("nan")
        rows.append([value, mean, std, len(accs), len(failures)])
        detail.append({"value": value, "accuracies": accs, "mean": mean,
                       "std": std, "failures": failures})
        print(f"sweep {axis}={value}: mean={mean:.4f} std={std:.4f} "
              f"n={len(accs)} failed={len(failures)}")

    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "sweep.csv",
               [axis, "mean_acc", "std_acc", "n_runs", "n_failed"], rows)
    _write_json(out / "sweep.json", {
        "axis": axis, "seed": cfg.seed, "repeats": repeats, "cells": detail,
        "config_sha256": cfg.config_hash(),
    })
    _write_manifest(out, "sweep", cfg.config_hash(), cfg.seed,
                    ["sweep.csv", "sweep.json"])
    return EXIT_OK


ABLATION_MODES = ("base_fixed_alpha", "+dyn", "+dyn_evo", "+dyn_evo_aug")


def _ablation_config(cfg: RunConfig, mode: str) -> RunConfig:
    cell = replace(cfg)
    cell.model = dict(cfg.model)
    cell.train = dict(cfg.train)
    if mode == "base_fixed_alpha":
        cell.model["variant"] = "fixed_initial_residual"
        cell.train["lambda"] = 0.0
    elif mode == "+dyn":
        cell.model["variant"] = "drgcn"
        cell.model["bypass_evolving"] = True
        cell.train["lambda"] = 0.0
    elif mode == "+dyn_evo":
        cell.model["variant"] = "drgcn"
        cell.train["lambda"] = 0.0
    elif mode == "+dyn_evo_aug":
        cell.model["variant"] = "drgcn"
        cell.train.setdefault("s_augment", 2)
        cell.train.setdefault("drop_rate", 0.5)
        cell.train.setdefault("temperature", 0.5)
        cell.train.setdefault("lambda", 1.0)
    return cell


def cmd_ablate(cfg: RunConfig, repeats: int, out: Path) -> int:
    ds = _load_dataset(cfg)
    rows = []
    for mode in ABLATION_MODES:
        cell = _ablation_config(cfg, mode)
        accs, failures = [], []
        for rep in range(repeats):
            seed = derive_seed(cfg.seed, "ablate", rep)  # shared across modes
            try:
                mcfg, params, history = _train_once(ds, cell, seed)
                accs.append(evaluate(ds, mcfg, params)["accuracy"]["test"])
            except DivergenceError as err:
                failures.append(str(err))
        mean = float(np.mean(accs)) if accs else float("nan")
        std = float(np.std(accs)) if accs else float("nan")
        rows.append([mode, mean, std, len(accs), len(failures)])
        print(f"ablate {mode}: mean={mean:.4f} std={std:.4f} n={len(accs)}")
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "ablate.csv",
               ["mode", "mean_acc", "std_acc", "n_runs", "n_failed"], rows)
    _write_manifest(out, "ablate", cfg.config_hash(), cfg.seed, ["ablate.csv"])
    return EXIT_OK


def _export_alpha_csvs(traces, out: Path) -> list[str]:
    """Figure-style data files from one or more runs' alpha traces."""
    finals = np.stack([t.best_alpha.mean(axis=1) for t in traces])
    layers = finals.shape[1]
    mean_rows = []
    for layer in range(layers):
        col = finals[:, layer]
        mean, std = float(col.mean()), float(col.std())
        half = 1.96 * std / np.sqrt(col.size) if col.size > 1 else 0.0
        mean_rows.append([layer + 1, mean, mean - half, mean + half])
    _write_csv(out / "alpha_mean.csv", ["layer", "mean", "ci_lo", "ci_hi"],
               mean_rows)

    best = traces[0].best_alpha
    quart_rows = []
    for layer in range(best.shape[0]):
        q = np.percentile(best[layer], [0, 25, 50, 75, 100])
        quart_rows.append([layer + 1] + [float(v) for v in q])
    _write_csv(out / "alpha_quartiles.csv",
               ["layer", "min", "q1", "median", "q3", "max"], quart_rows)

    epoch_rows = []
    t0 = traces[0]
    for epoch, means in zip(t0.epochs, t0.layer_means):
        for layer in range(means.size):
            epoch_rows.append([epoch, layer + 1, float(means[layer])])
    _write_csv(out / "alpha_epochs.csv", ["epoch", "layer", "mean"], epoch_rows)
    return ["alpha_mean.csv", "alpha_quartiles.csv", "alpha_epochs.csv"]


def cmd_export_alpha(cfg: RunConfig, params_path: str | None, repeats: int,
                     out: Path) -> int:
    traces = []
    if params_path is not None:
        _, _, trace, _ = load_params(params_path)
        if trace is None or trace.best_alpha is None:
            raise DataError(f"{params_path} holds no recorded alpha trace")
        traces.append(trace)
    else:
        ds = _load_dataset(cfg)
        for rep in range(repeats):
            seed = derive_seed(cfg.seed, "alpha", rep)
            mcfg, params, history = _train_once(ds, cfg, seed)
            if history.alpha is None or history.alpha.best_alpha is None:
                raise DataError("run recorded no alpha trace; use the drgcn "
                                "variant")
            traces.append(history.alpha)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = _export_alpha_csvs(traces, out)
    _write_manifest(out, "export-alpha", cfg.config_hash(), cfg.seed,
                    artifacts)
    print(f"export-alpha: {len(traces)} trace(s) -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drgcn", description="deep residual GCN experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="path to a key = value config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="base seed (overrides config)")

    p = sub.add_parser("train", help="single training run")
    add_common(p)

    p = sub.add_parser("eval", help="evaluate saved params on a container")
    p.add_argument("--params", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="grid sweep over one axis")
    add_common(p)
    p.add_argument("--axis", required=True,
                   choices=["layers", "train_size", "fixed_alpha"])
    p.add_argument("--repeats", type=int)

    p = sub.add_parser("ablate", help="four-mode ablation table")
    add_common(p)
    p.add_argument("--repeats", type=int)

    p = sub.add_parser("export-alpha", help="alpha trace CSV exports")
    add_common(p)
    p.add_argument("--params", help="export from an existing params.bin")
    p.add_argument("--repeats", type=int)

    p = sub.add_parser("gen-synthetic", help="write a synthetic container")
    p.add_argument("--out", required=True)
    p.add_argument("--nodes", type=int, default=200)
    p.add_argument("--features", type=int, default=16)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--edge-prob", type=float, default=0.05)
    p.add_argument("--homophily", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_CONFIG if err.code not in (0, None) else 0

    try:
        if args.command == "gen-synthetic":
            ds = gen_synthetic(n=args.nodes, d=args.features, c=args.classes,
                               edge_prob=args.edge_prob,
                               homophily=args.homophily, seed=args.seed)
            write_container(ds, args.out)
            print(f"gen-synthetic: n={ds.n} e={ds.graph.num_edges} "
                  f"-> {args.out}")
            return EXIT_OK

        if args.command == "eval":
            out = Path(args.out) if args.out else None
            return cmd_eval(args.params, args.data, out)

        cfg = load_run_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.out = args.out
        out = Path(cfg.out)

        if args.command == "train":
            return cmd_train(cfg, out)
        if args.command == "sweep":
            repeats = args.repeats if args.repeats else cfg.repeats
            return cmd_sweep(cfg, args.axis, repeats, out)
        if args.command == "ablate":
            repeats = args.repeats if args.repeats else cfg.repeats
            return cmd_ablate(cfg, repeats, out)
        if args.command == "export-alpha":
            repeats = args.repeats if args.repeats else cfg.repeats
            return cmd_export_alpha(cfg, args.params, repeats, out)
        raise CliConfigError(f"unknown command {args.command!r}")
    except (CliConfigError, ConfigError, TrainingError) as err:
        if isinstance(err, DivergenceError):
            print(f"error: {err}", file=sys.stderr)
            return EXIT_DIVERGED
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
