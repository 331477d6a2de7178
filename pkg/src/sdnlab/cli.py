"""Command line entry point: ``sdnlab <command> [--config PATH] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path as FsPath

import numpy as np

from . import __version__, telemetry
from .mlkit import (
    KINDS,
    Dataset,
    DegenerateLabels,
    FeatureMismatch,
    ModelFormatError,
    SplitSpec,
    SplitTooSmall,
    correlation_select,
    evaluate,
    fit,
    load_model,
    save_model,
    split,
)
from .router import CompareConfig, compare_strategies
from .scenarios import ConfigError, expand_configs, gen_data, load_json, packaged_scenario
from .topology import Topology, TopologyError, nsfnet

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
DEFAULT_MATRIX = {"scenarios": ["s1", "s2", "s3"], "levels": ["low", "high"], "repetitions": 145}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode("utf-8")).hexdigest()


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False,
                  default=lambda o: o.tolist() if isinstance(o, np.ndarray) else str(o))
        fh.write("\n")


def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def write_manifest(out: FsPath, command: str, config: dict, seed, files) -> FsPath:
    """Record what was run and a digest of every file it wrote."""
    doc = {
        "command": command,
        "config_sha256": config_hash(config),
        "config": config,
        "seed": seed,
        "version": __version__,
        "files": [{"path": FsPath(f).relative_to(out).as_posix(), "sha256": sha256_file(f)}
                  for f in files],
    }
    path = out / "manifest.json"
    write_json(path, doc)
    return path


def _out_dir(args) -> FsPath:
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args, default=None) -> dict:
    if args.config is None:
        return dict(default or {})
    doc = load_json(args.config)
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", str(args.config))
    return doc


# --- gen-data --------------------------------------------------------------

def cmd_gen_data(args) -> int:
    doc = _config(args, DEFAULT_MATRIX)
    configs = expand_configs(doc, args.seed)
    out = _out_dir(args)
    data = out / "dataset.csv"
    records = gen_data(configs, data, jobs=args.jobs)
    effective = {"runs": [c.to_dict() for c in configs]}
    write_manifest(out, "gen-data", effective, args.seed, [data])
    counts = {lv: sum(r.label == telemetry.LABELS[lv] for r in records) for lv in telemetry.LABELS}
    print(f"wrote {len(records)} rows to {data} ({counts})")
    return EXIT_OK


# --- train / eval ----------------------------------------------------------

def _parse_split(text) -> tuple:
    try:
        parts = tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise ConfigError(f"expected three comma separated fractions, got {text!r}", "split") from None
    if len(parts) != 3:
        raise ConfigError(f"expected three fractions, got {text!r}", "split")
    return parts


def _view(ds: Dataset, view: str) -> Dataset:
    if view == "probe":
        return ds.select(telemetry.PROBE_VIEW)
    if view == "analysis":
        return ds
    raise ConfigError(f"unknown view {view!r}", "view")


def _write_eval(out: FsPath, stem: str, report, extra: dict) -> list:
    files = [out / f"report_{stem}.json", out / f"roc_{stem}.csv", out / f"confusion_{stem}.txt"]
    write_json(files[0], {**extra, **{k: _finite(v) for k, v in report.summary().items()}})
    report.write_roc(files[1])
    files[2].write_text(report.confusion_text(), encoding="utf-8")
    return files


def cmd_train(args) -> int:
    doc = _config(args)
    dataset = args.dataset or doc.get("dataset")
    if not dataset:
        raise ConfigError("a dataset path is required", "dataset")
    kinds = args.kind or doc.get("kind", "logreg")
    kinds = list(KINDS) if kinds == "all" else [kinds]
    for k in kinds:
        if k not in KINDS:
            raise ConfigError(f"unknown model kind {k!r}; choose from {KINDS} or 'all'", "kind")
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    fractions = _parse_split(args.split or doc.get("split", "0.7,0.15,0.15"))
    threshold = args.selection_threshold
    if threshold is None:
        threshold = float(doc.get("selection_threshold", 0.3))
    view = args.view or doc.get("view", "probe")
    hyper = doc.get("hyperparams", {})
    try:
        spec = SplitSpec(*fractions, seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc), "split") from None

    ds = _view(Dataset.from_csv(dataset), view)
    train, _val, test = split(ds, spec)
    sel = correlation_select(train, threshold)
    if not sel.selected:
        raise ConfigError(f"no feature reaches |r| >= {threshold}", "selection_threshold")
    out = _out_dir(args)
    files = [out / "selection.csv", out / "correlation.csv"]
    with open(files[0], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "r_label", "selected"])
        for name, r in sel.label_correlation().items():
            w.writerow([name, "" if math.isnan(r) else repr(r), int(name in sel.selected)])
    _write_matrix(files[1], sel.names, sel.matrix)
    for kind in kinds:
        model = fit(kind, train.select(sel.selected), hyper.get(kind, {}), seed=seed)
        path = out / f"model_{kind}.json"
        save_model(model, path)
        files.append(path)
        report = evaluate(model, test)
        files += _write_eval(out, kind, report, {"kind": kind, "test_rows": len(test)})
        print(f"{kind:14s} f1={report.f1:.4f} auc={report.auc:.4f} "
              f"precision={report.precision:.4f} recall={report.recall:.4f}")
    effective = {"dataset": sha256_file(dataset), "kinds": kinds, "split": list(fractions),
                 "selection_threshold": threshold, "view": view, "hyperparams": hyper}
    write_manifest(out, "train", effective, seed, files)
    return EXIT_OK


def cmd_eval(args) -> int:
    doc = _config(args)
    model_path = args.model or doc.get("model")
    dataset = args.dataset or doc.get("dataset")
    if not model_path or not dataset:
        raise ConfigError("both a model and a dataset are required", "model/dataset")
    model = load_model(model_path)
    ds = Dataset.from_csv(dataset)
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    if args.test_split:
        ds = split(ds, SplitSpec(seed=seed))[2]
    report = evaluate(model, ds)
    out = _out_dir(args)
    files = _write_eval(out, model.kind, report, {"kind": model.kind, "rows": len(ds)})
    effective = {"model": sha256_file(model_path), "dataset": sha256_file(dataset),
                 "test_split": bool(args.test_split)}
    write_manifest(out, "eval", effective, seed, files)
    print(report.confusion_text(), end="")
    print(f"f1={report.f1:.4f} auc={report.auc:.4f}")
    return EXIT_OK


# --- analyze ---------------------------------------------------------------

def _cell(v) -> str:
    return "undefined" if v is None or math.isnan(v) else repr(float(v))


def _write_matrix(path, names, matrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", *names])
        for name, row in zip(names, matrix):
            w.writerow([name, *(_cell(v) for v in row)])


def cmd_analyze(args) -> int:
    doc = _config(args)
    dataset = args.dataset or doc.get("dataset")
    if not dataset:
        raise ConfigError("a dataset path is required", "dataset")
    try:
        ds = Dataset.from_csv(dataset)
    except ValueError as exc:
        raise ConfigError(str(exc), "dataset") from None
    from .mlkit import correlation_matrix

    out = _out_dir(args)
    files = [out / "correlation.csv", out / "summary.csv", out / "quantiles.csv"]
    _write_matrix(files[0], ds.feature_names + (telemetry.LABEL,), correlation_matrix(ds.X, ds.y))
    names = {0: "low", 1: "high"}
    with open(files[1], "w", newline="", encoding="utf-8") as fs, \
            open(files[2], "w", newline="", encoding="utf-8") as fq:
        ws = csv.writer(fs, lineterminator="\n")
        wq = csv.writer(fq, lineterminator="\n")
        ws.writerow(["feature", "mean_low", "mean_high", "std_low", "std_high", "n_low", "n_high"])
        wq.writerow(["feature", "label", "min", "q1", "median", "q3", "max"])
        for j, name in enumerate(ds.feature_names):
            stats = {}
            for lab in (0, 1):
                col = ds.X[ds.y == lab, j]
                col = col[~np.isnan(col)]
                stats[lab] = col
                if len(col):
                    q = np.quantile(col, [0, 0.25, 0.5, 0.75, 1.0])
                    wq.writerow([name, names[lab], *(repr(float(v)) for v in q)])
            ws.writerow([name,
                         *(repr(float(stats[lab].mean())) if len(stats[lab]) else "" for lab in (0, 1)),
                         *(repr(float(stats[lab].std())) if len(stats[lab]) else "" for lab in (0, 1)),
                         len(stats[0]), len(stats[1])])
    write_manifest(out, "analyze", {"dataset": sha256_file(dataset)}, None, files)
    print(f"analyzed {len(ds)} rows into {out}")
    return EXIT_OK


# --- compare ---------------------------------------------------------------

def cmd_compare(args) -> int:
    doc = load_json(args.config) if args.config else load_json(packaged_scenario("routing_test"))
    if args.seed is not None:
        doc = dict(doc, seed=args.seed)
    cfg = CompareConfig.from_dict(doc)
    if not args.model:
        raise ConfigError("a trained probe-view model is required", "model")
    model = load_model(args.model)
    comparison = compare_strategies(cfg, model)
    out = _out_dir(args)
    files = [out / "comparison.csv", out / "summary.json", out / "decisions.json"]
    comparison.write_series(files[0])
    write_json(files[1], _clean(comparison.summary()))
    comparison.write_audit(files[2])
    write_manifest(out, "compare", {"scenario": doc, "model": sha256_file(args.model)},
                   cfg.seed, files)
    s = comparison.summary()
    for side in ("baseline", "ai"):
        r = s[side]
        q = "" if r["psnr"] is None else f" psnr={r['psnr']:.2f}dB ssim={r['ssim']:.4f}"
        print(f"{side:9s} path={r['chosen']} rtt={r['mean_rtt_ms']:.1f}ms "
              f"throughput={r['mean_throughput_bps'] / 1e6:.3f}Mbps{q}")
    return EXIT_OK


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return _finite(obj)
    return obj


# --- topo validate ---------------------------------------------------------

def cmd_topo_validate(args) -> int:
    path = args.topology or args.config
    if path is None:
        topo = nsfnet()
    else:
        try:
            topo = Topology.load(path)
        except (OSError, ValueError, KeyError, TypeError, TopologyError) as exc:
            raise ConfigError(str(exc), str(path)) from None
    print(f"ok: {len(topo.nodes)} switches, {len(topo.links)} links, {len(topo.hosts)} hosts")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="override every seed in the configuration")
    common.add_argument("--out", default="out", help="output directory (default: out)")

    p = argparse.ArgumentParser(prog="sdnlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="simulate episodes into a dataset CSV")
    g.add_argument("--jobs", type=int, default=1, help="worker processes")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="select features, fit and evaluate")
    t.add_argument("--dataset")
    t.add_argument("--kind", help=f"one of {', '.join(KINDS)} or 'all'")
    t.add_argument("--split", help="train,val,test fractions (default 0.7,0.15,0.15)")
    t.add_argument("--selection-threshold", type=float, help="minimum |r| with the label (default 0.3)")
    t.add_argument("--view", choices=("probe", "analysis"),
                   help="probe: only pre-transfer features (default); analysis: all 49")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a saved model on a dataset")
    e.add_argument("--model")
    e.add_argument("--dataset")
    e.add_argument("--test-split", action="store_true", help="score only the seeded test split")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("analyze", parents=[common], help="correlations and per-label summaries")
    a.add_argument("--dataset")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("compare", parents=[common], help="hop-count baseline vs classifier routing")
    c.add_argument("--model")
    c.set_defaults(func=cmd_compare)

    topo = sub.add_parser("topo", help="topology utilities")
    tsub = topo.add_subparsers(dest="topo_command", required=True)
    v = tsub.add_parser("validate", parents=[common], help="check a topology JSON file")
    v.add_argument("topology", nargs="?")
    v.set_defaults(func=cmd_topo_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SplitTooSmall) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FeatureMismatch, DegenerateLabels, ModelFormatError, TopologyError, OSError,
            ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
