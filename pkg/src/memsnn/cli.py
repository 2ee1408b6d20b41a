"""``memsnn`` command-line entry point.

Exit codes: 0 success, 2 I/O error, 3 invalid input or config, 4 simulation
failure (no neuron fired where one had to).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import engine, experiments as ex
from .config import PATTERN_TASKS, ConfigError, RunConfig, load_config
from .device import RejectedInput
from .encoder import read_dataset_csv
from .engine import SimulationFailure

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_SIM = 0, 2, 3, 4
SEED_ENV = "MEMSNN_SEED"

log = logging.getLogger("memsnn")


# -- helpers ---------------------------------------------------------------

def _config(path) -> RunConfig:
    cfg = load_config(path)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            cfg = cfg.with_seed(int(env))
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: not an integer: {env!r}") from None
    return cfg


def _dataset(cfg: RunConfig, override: str | None):
    """``(X, y, source)`` for a dataset task."""
    src = override or cfg.experiment.data
    if src is None:
        X, y = ex._load_dataset(cfg.task)
        return X, y, cfg.task
    if not Path(src).exists():
        raise FileNotFoundError(f"dataset not found: {src}")
    X, y = read_dataset_csv(src)
    return X, y, str(src)


def _patterns(source: str | None, default: str):
    src = source or default
    if src not in ex.BUILTIN_PATTERNS and not Path(src).exists():
        raise FileNotFoundError(f"pattern file not found: {src}")
    return ex.load_patterns(src)


def _write_json(path, doc) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _check_shape(n_rows: int, labels, cfg_n: int, cfg_m: int, what: str) -> None:
    if n_rows != cfg_n:
        raise RejectedInput(f"{what} gives {n_rows} input rows but the network has n = {cfg_n}")
    if len(labels) and (int(np.max(labels)) >= cfg_m or int(np.min(labels)) < 0):
        raise RejectedInput(f"{what} labels must lie in [0, {cfg_m}), network has m = {cfg_m}")


def _write_log(path, entries) -> None:
    keys = ["epoch", "train_accuracy", "mean_abs_dG", "ties", "no_spike"]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=keys, extrasaction="ignore")
        w.writeheader()
        w.writerows(entries)


def _out(cfg_dir: str | None, given: str | None, name: str) -> Path:
    if given:
        return Path(given)
    return Path(cfg_dir or ".") / name


# -- commands --------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _config(args.config)
    net_cfg = cfg.network_config()
    params = cfg.memristor_params()
    out_dir = Path(cfg.output_dir)
    model_path = _out(cfg.output_dir, args.out, "model.json")
    log_path = _out(cfg.output_dir, args.log, "train_log.csv")
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path.parent.mkdir(parents=True, exist_ok=True)
    extra = {"task": cfg.task, "seed": cfg.seed, "config_hash": cfg.digest()}
    if cfg.is_pattern_task:
        P, L = _patterns(args.dataset or cfg.experiment.data, PATTERN_TASKS[cfg.task])
        _check_shape(P[0].size, L, net_cfg.n, net_cfg.m, "pattern file")
        net = ex.train_patterns(net_cfg, P, L, cfg.experiment.presentations, params)
        preds = ex.recognize(net, P)
        acc = float(np.mean([p == y for p, y in zip(preds, L)]))
        extra.update(grid=list(P.shape[1:]), lead=cfg.encoder.lead)
        print(f"trained on {len(P)} patterns x {cfg.experiment.presentations}; clean accuracy {acc:.4f}")
    else:
        X, y, src = _dataset(cfg, args.dataset)
        _check_shape(X.shape[1] * cfg.encoder.n2, y, net_cfg.n, net_cfg.m, f"dataset {src}")
        res = ex.run_classification((X, y), net_cfg, cfg.split_seed, cfg.setup(), params,
                                    cfg.fault(), jobs=args.jobs)
        net = res.net
        extra.update(encoder=res.encoder.to_dict(), split_seed=cfg.split_seed,
                     train_frac=cfg.experiment.train_frac, dataset=src,
                     test_accuracy=res.metrics.accuracy, test_f1_macro=res.metrics.f1_macro)
        print(f"trained {net_cfg.epochs} epochs on {len(res.split[0])} samples; "
              f"infer_gain {res.infer_gain:.6g}; held-out accuracy {res.metrics.accuracy:.4f} "
              f"macro-F1 {res.metrics.f1_macro:.4f}")
    engine.save_model(net, model_path, extra)
    _write_log(log_path, net.log)
    print(f"model -> {model_path}\nlog -> {log_path}")
    return EXIT_OK


def _load(path):
    if not Path(path).exists():
        raise FileNotFoundError(f"model not found: {path}")
    return engine.load_model(path)


def _model_trains(net, extra, dataset: str | None, split: str):
    """Spike trains and labels for a stored model: patterns or a dataset split."""
    if "grid" in extra:
        P, L = _patterns(dataset, PATTERN_TASKS.get(extra.get("task"), "5x3"))
        _check_shape(P[0].size, L, net.config.n, net.config.m, "pattern file")
        return ex.pattern_trains(P, net.config, extra.get("lead", 0.5e-3)), list(L)
    if "encoder" not in extra:
        raise RejectedInput("model carries no encoder; was it produced by `memsnn train`?")
    enc = ex.FeatureEncoder.from_dict(extra["encoder"])
    src = dataset or extra.get("dataset")
    if src in ex.BUILTIN_DATASETS:
        X, y = ex._load_dataset(src)
    else:
        if src is None or not Path(src).exists():
            raise FileNotFoundError(f"dataset not found: {src}")
        X, y = read_dataset_csv(src)
    if X.shape[1] != enc.n_features:
        raise RejectedInput(f"dataset has {X.shape[1]} features, model expects {enc.n_features}")
    _check_shape(X.shape[1] * enc.n2, y, net.config.n, net.config.m, "dataset")
    if split != "all" and dataset is None:
        from .metrics import rng_for
        tr, te = ex.stratified_split(y, extra.get("train_frac", 0.7),
                                     rng_for(extra.get("split_seed", 0), "split"))
        idx = te if split == "test" else tr
        X, y = X[idx], y[idx]
    return enc.transform(X, net.config.spike_shape), list(y)


def cmd_test(args) -> int:
    net, extra = _load(args.model)
    trains, labels = _model_trains(net, extra, args.dataset, args.split)
    m = engine.test(net, trains, labels, jobs=args.jobs)
    if m.no_spike == m.n_samples:
        raise SimulationFailure("no neuron fired on any sample; check v_th, I_b and the gains")
    doc = {**m.to_dict(), "config_hash": extra.get("config_hash"), "seed": extra.get("seed"),
           "model": str(args.model), "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")}
    out = Path(args.out)
    _write_json(out, doc)
    print(f"accuracy {m.accuracy:.4f}  macro-F1 {m.f1_macro:.4f}  "
          f"no-spike {m.no_spike}/{m.n_samples}\nmetrics -> {out}")
    return EXIT_OK


def _levels(text: str) -> list[float]:
    try:
        levels = [float(eval_fraction(t)) for t in text.split(",") if t.strip()]
    except ValueError:
        raise RejectedInput(f"--levels: cannot parse {text!r}") from None
    if not levels:
        raise RejectedInput("--levels: empty list")
    for lv in levels:
        if not 0.0 <= lv <= 1.0:
            raise RejectedInput(f"--levels: {lv} lies outside [0, 1]")
    return levels


def eval_fraction(token: str) -> float:
    """``"0.2"`` or ``"3/15"`` to a float."""
    token = token.strip()
    if "/" in token:
        a, b = token.split("/", 1)
        return float(a) / float(b)
    return float(token)


def cmd_sweep(args) -> int:
    cfg = _config(args.config)
    if args.levels is not None:
        levels = _levels(args.levels)
    elif cfg.experiment.levels is not None:
        levels = _levels(",".join(str(v) for v in cfg.experiment.levels))
    else:
        raise RejectedInput("no levels: pass --levels or set experiment.levels")
    out = _out(cfg.output_dir, args.out, "sweep.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    net_cfg, params = cfg.network_config(), cfg.memristor_params()
    if args.kind == "noise":
        if not cfg.is_pattern_task:
            raise RejectedInput("noise sweeps need a pattern task")
        P, L = _patterns(cfg.experiment.data, PATTERN_TASKS[cfg.task])
        _check_shape(P[0].size, L, net_cfg.n, net_cfg.m, "pattern file")
        net = ex.train_patterns(net_cfg, P, L, cfg.experiment.presentations, params)
        trials = args.trials or cfg.experiment.trials
        rows = ex.run_noise_sweep(net, P, L, levels, trials, cfg.seed, args.jobs)
    else:
        if cfg.is_pattern_task:
            raise RejectedInput(f"{args.kind} sweeps need a dataset task")
        X, y, _ = _dataset(cfg, None)
        _check_shape(X.shape[1] * cfg.encoder.n2, y, net_cfg.n, net_cfg.m, "dataset")
        repeats = args.repeats or cfg.experiment.repeats
        key = {"stuck": "stuck_fraction", "variation-R": "dispersion_R",
               "variation-Vt": "dispersion_Vt"}[args.kind]
        rows = []
        for lv in levels:
            spec = replace(cfg.fault(), **{key: lv})
            s = ex.run_fault_campaign((X, y), net_cfg, spec, repeats, cfg.split_seed,
                                      cfg.setup(), params, args.jobs)
            rows.append(ex.SweepRow(lv, s.mean, s.std, repeats))
            print(f"{args.kind} {lv:.4g}: mean {s.mean:.4f} std {s.std:.4f}", flush=True)
    ex.write_sweep_csv(rows, out)
    for r in rows:
        print(f"level {r.level:.4f}  mean {r.mean:.4f}  std {r.std:.4f}  trials {r.trials}")
    print(f"sweep -> {out}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    net, extra = _load(args.model)
    grid = tuple(extra["grid"]) if "grid" in extra else None
    files = ex.export_heatmap(net, args.out_dir, grid)
    if grid is None:
        print("model has no pattern grid: wrote CSV only, PGM skipped")
    print(f"wrote {len(files)} files to {args.out_dir}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    net, extra = _load(args.model)
    trains, labels = _model_trains(net, extra, args.dataset, "train")
    if args.samples and args.samples < len(trains):
        trains = trains[:args.samples]
    g = engine.calibrate_col_gain(net, trains, args.lo, args.hi)
    _, _, times = engine.predict(net.with_infer_gain(g), trains)
    print(f"infer_gain {g:.6g}  median winner time {np.median(times) * 1e6:.1f} us "
          f"over {len(trains)} samples")
    if args.write:
        net.config = replace(net.config, infer_gain=g)
        engine.save_model(net, args.model, extra)
        print(f"updated {args.model}")
    return EXIT_OK


def cmd_trace(args) -> int:
    net, extra = _load(args.model)
    trains, labels = _model_trains(net, extra, args.dataset, "all")
    if not 0 <= args.sample < len(trains):
        raise RejectedInput(f"--sample must lie in [0, {len(trains)})")
    cols, rows = engine.trace_sample(net, trains[args.sample], labels[args.sample],
                                     learning=args.learning, every=args.every)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    print(f"{len(rows)} rows -> {out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="memsnn",
        description="Memristive spiking network simulator. All physical quantities are SI "
                    f"(V, A, ohm, F, s). {SEED_ENV} overrides the config seed.",
        epilog="exit codes: 0 ok, 2 I/O error, 3 invalid input, 4 simulation failure")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def jobs(sp):
        sp.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="worker processes for independent samples/trials (count, default 1)")

    t = sub.add_parser("train", help="train a network and save the model")
    t.add_argument("--config", required=True, help="run config JSON (path)")
    t.add_argument("--dataset", help="dataset CSV or pattern file (path); default from config")
    t.add_argument("--out", help="model JSON (path; default <output_dir>/model.json)")
    t.add_argument("--log", help="per-epoch log CSV (path; default <output_dir>/train_log.csv)")
    jobs(t)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("test", help="score a saved model; writes metrics.json")
    s.add_argument("--model", required=True, help="model JSON (path)")
    s.add_argument("--dataset", help="dataset CSV or pattern file (path); scored in full")
    s.add_argument("--split", choices=["test", "train", "all"], default="test",
                   help="which part of the model's own dataset to score (default test)")
    s.add_argument("--out", default="metrics.json", help="metrics JSON (path)")
    jobs(s)
    s.set_defaults(func=cmd_test)

    w = sub.add_parser("sweep", help="noise, stuck-at or variation campaign; writes sweep.csv")
    w.add_argument("--config", required=True, help="run config JSON (path)")
    w.add_argument("--kind", required=True, choices=["noise", "stuck", "variation-R", "variation-Vt"],
                   help="campaign type")
    w.add_argument("--levels", help="comma list of fractions in [0, 1] (unitless; 3/15 allowed)")
    w.add_argument("--trials", type=int, help="noise trials per level (count)")
    w.add_argument("--repeats", type=int, help="fault repeats per level (count)")
    w.add_argument("--out", help="sweep CSV (path; default <output_dir>/sweep.csv)")
    jobs(w)
    w.set_defaults(func=cmd_sweep)

    h = sub.add_parser("heatmap", help="export conductance maps (uS) as CSV and PGM")
    h.add_argument("--model", required=True, help="model JSON (path)")
    h.add_argument("--out-dir", required=True, help="output directory (path)")
    h.set_defaults(func=cmd_heatmap)

    c = sub.add_parser("calibrate", help="search the inference gain so the median winner "
                                         "fires inside [lo*T, hi*T]")
    c.add_argument("--model", required=True, help="model JSON (path)")
    c.add_argument("--dataset", help="dataset CSV or pattern file (path)")
    c.add_argument("--samples", type=int, default=30, help="training subsample size (count)")
    c.add_argument("--lo", type=float, default=0.25, help="lower bound (fraction of T)")
    c.add_argument("--hi", type=float, default=0.9, help="upper bound (fraction of T)")
    c.add_argument("--write", action="store_true", help="store the gain in the model file")
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("trace", help="per-step signal dump of one presentation as CSV")
    r.add_argument("--model", required=True, help="model JSON (path)")
    r.add_argument("--dataset", help="dataset CSV or pattern file (path)")
    r.add_argument("--sample", type=int, default=0, help="sample index (count)")
    r.add_argument("--every", type=int, default=10, help="keep every k-th step (count; dt each)")
    r.add_argument("--learning", action="store_true",
                   help="simulate a training presentation (weights in the file are untouched)")
    r.add_argument("--out", default="trace.csv", help="trace CSV (path; columns in s and V)")
    r.set_defaults(func=cmd_trace)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except SimulationFailure as e:
        print(f"simulation failure: {e}", file=sys.stderr)
        return EXIT_SIM
    except (RejectedInput, ValueError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
