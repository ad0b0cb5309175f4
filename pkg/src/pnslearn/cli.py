"""Command-line front end: oracle, generate, build, train, eval, and the chained pipeline."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from pnslearn import N_SUBGROUPS, __version__
from pnslearn.dataset import build_training, read_training_csv, train_val_split, write_training_csv
from pnslearn.errors import (
    EmptyDatasetError,
    InsufficientDataError,
    MalformedInputError,
    TrainingDivergedError,
    UnsupportedForKindError,
)
from pnslearn.metrics import (
    confusion,
    nearest_subgroup_baseline,
    score,
    write_confusion_csv,
    write_metrics_json,
    write_scatter_csv,
)
from pnslearn.mlp import MlpModel, preset_config, predict_all, train, write_history_csv
from pnslearn.oracle import build_informer, read_informer_csv, write_informer_csv
from pnslearn.sampler import SimConfig, read_counts_csv, sample_counts, write_counts_csv
from pnslearn.scm import load_spec

log = logging.getLogger("pnslearn")

FULL_SCALE_SAMPLES = 50_000_000
DEFAULTS = {
    "scm": "confounder",
    "seed": 0,
    "n_obs": 10_000_000,
    "n_exp": 10_000_000,
    "treatment_prob": 0.5,
    "shards": 8,
    "threshold": 1300,
    "val_fraction": 0.1,
    "bins": 10,
    "weighted": False,
    "activation": "mish",
    "epochs": None,
    "lr": None,
    "mlp": {},
}


def load_settings(args) -> dict:
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            doc = json.load(fh)
        # A run manifest carries its full settings snapshot, so it can seed a rerun.
        if isinstance(doc, dict) and "outputs" in doc and "config" in doc:
            doc = doc["config"]
        if not isinstance(doc, dict):
            raise MalformedInputError(f"{args.config}: config must be a JSON object")
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise MalformedInputError(f"unknown config keys: {sorted(unknown)}")
        settings.update(doc)
    if getattr(args, "paper_scale", False):
        settings["n_obs"] = settings["n_exp"] = FULL_SCALE_SAMPLES
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def mlp_config(settings: dict):
    overrides = dict(settings.get("mlp") or {})
    if settings.get("epochs") is not None:
        overrides["epochs"] = settings["epochs"]
    if settings.get("lr") is not None:
        overrides["learning_rate"] = settings["lr"]
    overrides.setdefault("seed", settings["seed"])
    return preset_config(load_spec(settings["scm"]).kind.value, settings["activation"], **overrides)


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# Stage functions, shared by the single-stage commands and `pipeline`.

def run_oracle(settings: dict, out: Path) -> Path:
    spec = load_spec(settings["scm"])
    write_informer_csv(build_informer(spec), out)
    return out


def run_generate(settings: dict, out: Path) -> Path:
    spec = load_spec(settings["scm"])
    cfg = SimConfig(
        n_obs=int(settings["n_obs"]),
        n_exp=int(settings["n_exp"]),
        seed=int(settings["seed"]),
        treatment_prob=float(settings["treatment_prob"]),
        shards=int(settings["shards"]),
    )
    t0 = time.perf_counter()
    obs, exp = sample_counts(spec, cfg)
    log.info("sampled %d + %d rows in %.1fs", cfg.n_obs, cfg.n_exp, time.perf_counter() - t0)
    write_counts_csv(obs, exp, out)
    return out


def run_build(settings: dict, counts: Path, out_dir: Path) -> dict[str, Path]:
    kind = load_spec(settings["scm"]).kind
    obs, exp = read_counts_csv(counts, kind)
    lower, upper = build_training(obs, exp, int(settings["threshold"]), kind)
    paths = {}
    for ds in (lower, upper):
        path = out_dir / f"train_{kind.value}_{ds.bound_side}.csv"
        write_training_csv(ds, path)
        paths[ds.bound_side] = path
        log.info("%s: %d training rows", path.name, len(ds))
    return paths


def run_train(settings: dict, train_csv: Path, bound: str, out_model: Path) -> Path:
    kind = load_spec(settings["scm"]).kind
    ds = read_training_csv(train_csv, bound, int(settings["threshold"]), kind)
    tr, va = train_val_split(ds, float(settings["val_fraction"]), int(settings["seed"]))
    cfg = mlp_config(settings)
    t0 = time.perf_counter()
    model = train(cfg, tr, va)
    log.info("trained %s %s in %.1fs", kind.value, bound, time.perf_counter() - t0)
    model.save(out_model)
    write_history_csv(model.history, out_model.with_suffix(".log.csv"))
    return out_model


def run_eval(settings: dict, model_path: Path, informer_csv: Path, bound: str, out_dir: Path,
             train_csv: Path | None = None) -> dict[str, Path]:
    kind = load_spec(settings["scm"]).kind
    bins = int(settings["bins"])
    informer = read_informer_csv(informer_csv, kind)
    truth = informer.bounds(bound)
    model = MlpModel.load(model_path)
    pred = predict_all(model)
    stem = f"{kind.value}_{bound}"
    paths = {
        "metrics": out_dir / f"metrics_{stem}.json",
        "predictions": out_dir / f"predictions_{stem}.csv",
        "confusion": out_dir / f"confusion_{stem}.csv",
    }
    weights = informer["weight"] if settings["weighted"] else None
    report = score(pred, truth, bound, kind.value, weights)
    write_metrics_json(report, paths["metrics"], "mlp", model.activation.kind, bins)
    write_scatter_csv(np.arange(N_SUBGROUPS), truth, pred, paths["predictions"])
    write_confusion_csv(confusion(pred, truth, bins), paths["confusion"])
    log.info("%s mlp: mae=%.4f mse=%.4f", stem, report.mae, report.mse)
    if train_csv is not None:
        ds = read_training_csv(train_csv, bound, int(settings["threshold"]), kind)
        base = nearest_subgroup_baseline(ds, np.arange(N_SUBGROUPS))
        paths["baseline_metrics"] = out_dir / f"metrics_{stem}_nearest.json"
        base_report = score(base, truth, bound, kind.value, weights)
        write_metrics_json(base_report, paths["baseline_metrics"], "nearest-subgroup", None, bins)
        log.info("%s nearest-subgroup: mae=%.4f", stem, base_report.mae)
    return paths


def run_pipeline(settings: dict, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    kind = load_spec(settings["scm"]).kind
    outputs = {
        "informer": run_oracle(settings, out_dir / f"informer_{kind.value}.csv"),
        "counts": run_generate(settings, out_dir / f"counts_{kind.value}.csv"),
    }
    training = run_build(settings, outputs["counts"], out_dir)
    for bound, path in training.items():
        outputs[f"train_{bound}"] = path
        model_path = run_train(settings, path, bound, out_dir / f"model_{kind.value}_{bound}.json")
        outputs[f"model_{bound}"] = model_path
        outputs[f"log_{bound}"] = model_path.with_suffix(".log.csv")
        for name, p in run_eval(settings, model_path, outputs["informer"], bound, out_dir, path).items():
            outputs[f"{name}_{bound}"] = p
    manifest = {
        "version": __version__,
        "config": settings,
        "mlp_config": mlp_config(settings).to_dict(),
        "seed": settings["seed"],
        "scm": kind.value,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": {name: {"path": p.name, "sha256": sha256(p)} for name, p in outputs.items()},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    p.add_argument("--config", help="JSON settings file or a previous manifest.json; flags override it")
    p.add_argument("--scm", help="preset name (confounder, outcome-covariate, direct, mediator) or SCM JSON file")
    p.add_argument("--seed", type=int)
    opts = {
        "samples": lambda: (
            p.add_argument("--n-obs", dest="n_obs", type=int),
            p.add_argument("--n-exp", dest="n_exp", type=int),
            p.add_argument("--shards", type=int),
            p.add_argument("--paper-scale", action="store_true", help="50M + 50M samples"),
        ),
        "threshold": lambda: p.add_argument("--threshold", type=int),
        "bound": lambda: p.add_argument("--bound", choices=("lb", "ub"), required=True),
        "weighted": lambda: p.add_argument("--weighted", action="store_true", default=None,
                                           help="weight subgroup errors by their population mass P(c)"),
        "mlp": lambda: (
            p.add_argument("--activation", choices=("relu", "leakyrelu", "mish")),
            p.add_argument("--epochs", type=int),
            p.add_argument("--lr", type=float),
        ),
    }
    for name in names:
        opts[name]()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnslearn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle", help="write the exact per-subgroup informer CSV")
    _add_common(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="simulate both regimes and write count tables")
    _add_common(p, "samples")
    p.add_argument("--out", required=True)

    p = sub.add_parser("build", help="build LB/UB training CSVs from count tables")
    _add_common(p, "threshold")
    p.add_argument("--counts", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train an MLP on one training CSV")
    _add_common(p, "threshold", "bound", "mlp")
    p.add_argument("--train-csv", required=True)
    p.add_argument("--out", required=True, help="model checkpoint path")

    p = sub.add_parser("eval", help="score a model against the informer")
    _add_common(p, "bound", "weighted")
    p.add_argument("--model", required=True)
    p.add_argument("--informer", required=True)
    p.add_argument("--train-csv", help="also score the nearest-subgroup baseline fitted on this CSV")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("pipeline", help="run every stage and write a manifest")
    _add_common(p, "samples", "threshold", "mlp", "weighted")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        settings = load_settings(args)
        out = Path(args.out)
        if args.command in ("build", "eval"):
            out.mkdir(parents=True, exist_ok=True)
        if args.command == "oracle":
            result = run_oracle(settings, out)
        elif args.command == "generate":
            result = run_generate(settings, out)
        elif args.command == "build":
            result = run_build(settings, Path(args.counts), out)
        elif args.command == "train":
            result = run_train(settings, Path(args.train_csv), args.bound, out)
        elif args.command == "eval":
            train_csv = Path(args.train_csv) if args.train_csv else None
            result = run_eval(settings, Path(args.model), Path(args.informer), args.bound, out, train_csv)
        else:
            result = run_pipeline(settings, out)
    except (MalformedInputError, EmptyDatasetError, InsufficientDataError, UnsupportedForKindError,
            TrainingDivergedError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"pnslearn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, dict):
        for path in result.values():
            print(path)
    else:
        print(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
