"""Operator surface: simulate a suite, summarize it, train a detector,
evaluate it at any input scope and step size, and run single-trace
inference.  All randomness flows from seeds in the JSON config, so every
command is idempotent given identical inputs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import dataset, evaluate, metrics, sim, training
from .model import ModelConfig, init_model, load_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    pass


PRESETS = {
    "smoke": {
        "controllers": ["CVS"],
        "speeds_kmph": [80.0],
        "scenarios": ["steady"],
        "attacker_positions": [2],
        "seeds": [0],
    },
    "full-grid": {
        "controllers": ["CVS", "CTH"],
        "speeds_kmph": [50.0, 80.0, 100.0, 150.0],
        "scenarios": ["steady", "join", "exit"],
        "attacker_positions": [0, 2],
        "seeds": [0],
    },
}

_SCHEMA = {
    "paths": {"traces", "stats", "checkpoints", "reports"},
    "grid": {"preset", "controllers", "speeds_kmph", "scenarios",
             "attacker_positions", "seeds", "spacing_m", "headway_s", "onset_s"},
    "window": {"window", "step"},
    "model": {"d_model", "n_heads", "n_layers", "d_ff", "dropout"},
    "train": {"batch_size", "learning_rate", "max_epochs", "patience", "seed",
              "alpha", "regime", "split_ratio", "split_seed", "stats_all_files"},
    "eval": {"scope", "step", "threshold"},
}

_DEFAULTS = {
    "paths": {"traces": "traces", "stats": "stats.json",
              "checkpoints": "checkpoints", "reports": "reports"},
    "grid": {"preset": "smoke"},
    "window": {"window": 10, "step": 10},
    "model": {},
    "train": {"regime": "general", "split_ratio": 0.8, "split_seed": 0,
              "stats_all_files": False, "seed": 0},
    "eval": {"scope": "platoon", "step": 5, "threshold": 0.5},
}


def load_config(path: str | None) -> dict:
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(doc) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    cfg = {}
    for section, keys in _SCHEMA.items():
        merged = dict(_DEFAULTS[section])
        user = doc.get(section, {})
        if not isinstance(user, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        bad = set(user) - keys
        if bad:
            raise ConfigError(f"unknown key(s) in config section {section!r}: {sorted(bad)}")
        merged.update(user)
        cfg[section] = merged
    return cfg


def build_suite(grid: dict) -> sim.SuiteConfig:
    merged = dict(grid)
    preset = merged.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown grid preset {preset!r}")
        base = dict(PRESETS[preset])
        base.update({k: v for k, v in merged.items() if v is not None})
        merged = base
    kwargs = {}
    for key in ("controllers", "speeds_kmph", "scenarios", "attacker_positions", "seeds"):
        if key in merged:
            kwargs[key] = tuple(merged[key])
    for key in ("spacing_m", "headway_s", "onset_s"):
        if key in merged:
            kwargs[key] = float(merged[key])
    return sim.SuiteConfig(**kwargs)


def _resolve(base_dir: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _simulate_one(args):
    rid, cfg_dict, atk_dict, out_dir = args
    cfg = sim.SimConfig(**cfg_dict)
    atk = sim.AttackSpec(**atk_dict) if atk_dict else None
    _, attacked = sim.simulate_pair(cfg, atk, run_id=rid)
    sim.write_trace_csv(attacked, os.path.join(out_dir, rid + ".csv"))
    return rid, attacked.collision


def cmd_simulate(cfg: dict, args) -> int:
    suite = build_suite(cfg["grid"])
    if args.seed is not None:
        suite = sim.SuiteConfig(**{**asdict_suite(suite), "seeds": (args.seed,)})
    out_dir = args.out or _resolve(args.base_dir, cfg["paths"]["traces"])
    os.makedirs(out_dir, exist_ok=True)
    entries = sim.generate_suite(suite)
    jobs = [(rid, sim.config_to_dict(c), sim.attack_to_dict(a), out_dir)
            for rid, c, a in entries]
    collisions: dict[str, bool] = {}
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            for rid, collided in pool.map(_simulate_one, jobs):
                collisions[rid] = collided
    else:
        for job in jobs:
            rid, collided = _simulate_one(job)
            collisions[rid] = collided
    sim.write_manifest(entries, out_dir, collisions)
    print(f"wrote {len(entries)} traces + manifest to {out_dir}")
    return EXIT_OK


def asdict_suite(suite: sim.SuiteConfig) -> dict:
    return {
        "controllers": suite.controllers,
        "speeds_kmph": suite.speeds_kmph,
        "scenarios": suite.scenarios,
        "attacker_positions": suite.attacker_positions,
        "seeds": suite.seeds,
        "spacing_m": suite.spacing_m,
        "headway_s": suite.headway_s,
        "onset_s": suite.onset_s,
        "magnitudes": suite.magnitudes,
    }


def cmd_stats(cfg: dict, args) -> int:
    trace_dir = _resolve(args.base_dir, cfg["paths"]["traces"])
    runs = sim.load_suite(trace_dir)
    summary = dataset.summarize(runs)
    out = args.out or _resolve(args.base_dir, cfg["paths"]["reports"])
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "dataset_summary.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(asdict(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    print(f"{summary.total_traces} traces, {summary.valid_labels} valid labels, "
          f"ratio_1={summary.ratio_1:.4f} -> {path}")
    return EXIT_OK


def _parse_regime(text: str) -> tuple[str, int | None]:
    if text == "general":
        return "general", None
    if text.startswith("vehicle:"):
        return "vehicle", int(text.split(":", 1)[1])
    raise ConfigError(f"regime must be 'general' or 'vehicle:K', got {text!r}")


def _parse_scope(text: str) -> tuple[str, int | None]:
    if text == "platoon":
        return "platoon", None
    if text.startswith("vehicle:"):
        return "vehicle", int(text.split(":", 1)[1])
    raise ConfigError(f"scope must be 'platoon' or 'vehicle:K', got {text!r}")


def _prepare_split(cfg: dict, args):
    trace_dir = _resolve(args.base_dir, cfg["paths"]["traces"])
    runs = sim.load_suite(trace_dir)
    tr = cfg["train"]
    train_runs, test_runs = dataset.split_runs(runs, tr["split_ratio"], tr["split_seed"])
    stats_src = runs if tr["stats_all_files"] else train_runs
    stats = dataset.compute_stats(stats_src)
    return runs, train_runs, test_runs, stats


def cmd_train(cfg: dict, args) -> int:
    regime_text = args.regime or cfg["train"]["regime"]
    regime, vehicle_id = _parse_regime(regime_text)
    _, train_runs, test_runs, stats = _prepare_split(cfg, args)
    wc = dataset.WindowConfig(**cfg["window"])
    train_norm = [dataset.normalize(r, stats) for r in train_runs]
    test_norm = [dataset.normalize(r, stats) for r in test_runs]
    train_samples, alpha = training.assemble_regime(train_norm, regime, wc, vehicle_id)
    val_samples, _ = training.assemble_regime(test_norm, regime, wc, vehicle_id)
    tr = cfg["train"]
    if tr.get("alpha") is not None:
        alpha = float(tr["alpha"])
    tc = training.TrainConfig(
        **{k: tr[k] for k in ("batch_size", "learning_rate", "max_epochs", "patience")
           if k in tr},
        alpha=alpha,
        seed=args.seed if args.seed is not None else tr["seed"],
    )
    model = init_model(ModelConfig(window=wc.window, **cfg["model"]), seed=tc.seed,
                       stats=stats)
    model, history = training.train(model, train_samples, val_samples, tc)

    ckpt_dir = _resolve(args.base_dir, cfg["paths"]["checkpoints"])
    os.makedirs(ckpt_dir, exist_ok=True)
    tag = regime_text.replace(":", "")
    save_checkpoint(model, os.path.join(ckpt_dir, f"{tag}.json"))
    history.save_csv(os.path.join(ckpt_dir, f"{tag}_history.csv"))
    dataset.save_stats(stats, _resolve(args.base_dir, cfg["paths"]["stats"]))
    split_doc = {"train": [r.run_id for r in train_runs],
                 "test": [r.run_id for r in test_runs]}
    with open(os.path.join(ckpt_dir, "split.json"), "w") as fh:
        json.dump(split_doc, fh, indent=2)
        fh.write("\n")
    print(f"trained {regime_text} for {len(history.train_loss)} epochs "
          f"(alpha={alpha:.4f}), best val loss {min(history.val_loss):.6f}")
    return EXIT_OK


def cmd_eval(cfg: dict, args) -> int:
    regime_text = args.regime or cfg["train"]["regime"]
    scope_text = args.scope or cfg["eval"]["scope"]
    step = args.step if args.step is not None else cfg["eval"]["step"]
    threshold = args.threshold if args.threshold is not None else cfg["eval"]["threshold"]
    scope, scope_vid = _parse_scope(scope_text)

    ckpt_dir = _resolve(args.base_dir, cfg["paths"]["checkpoints"])
    tag = regime_text.replace(":", "")
    ckpt = args.checkpoint or os.path.join(ckpt_dir, f"{tag}.json")
    model = load_checkpoint(ckpt)
    stats = model.stats or dataset.load_stats(_resolve(args.base_dir, cfg["paths"]["stats"]))

    trace_dir = _resolve(args.base_dir, cfg["paths"]["traces"])
    runs = sim.load_suite(trace_dir)
    split_path = os.path.join(ckpt_dir, "split.json")
    if os.path.exists(split_path):
        with open(split_path) as fh:
            test_ids = set(json.load(fh)["test"])
        runs = [r for r in runs if r.run_id in test_ids]
    norm = [dataset.normalize(r, stats) for r in runs]
    report = evaluate.evaluate_runs(model, norm, step, scope, scope_vid, threshold)

    out_dir = args.out or _resolve(args.base_dir, cfg["paths"]["reports"])
    os.makedirs(out_dir, exist_ok=True)
    stem = f"{tag}_{scope_text.replace(':', '')}_step{step}"
    report.save_json(os.path.join(out_dir, stem + ".json"),
                     extra={"regime": regime_text, "scope": scope_text,
                            "step": step, "window": model.config.window})
    if report.roc:
        metrics.save_roc_csv(report.roc, os.path.join(out_dir, stem + "_roc.csv"))
        metrics.save_roc_svg(report.roc, os.path.join(out_dir, stem + "_roc.svg"),
                             title=f"{regime_text} / {scope_text} / step {step}")
    print(f"{stem}: acc={report.accuracy:.4f} prec={report.weighted_precision:.4f} "
          f"rec={report.weighted_recall:.4f} f1={report.weighted_f1:.4f} "
          f"auc={report.auc if report.auc is None else round(report.auc, 4)}")
    return EXIT_OK


def cmd_infer(cfg: dict, args) -> int:
    if not args.trace:
        raise ConfigError("infer requires --trace")
    step = args.step if args.step is not None else cfg["eval"]["step"]
    threshold = args.threshold if args.threshold is not None else cfg["eval"]["threshold"]
    model = load_checkpoint(args.checkpoint) if args.checkpoint else load_checkpoint(
        os.path.join(_resolve(args.base_dir, cfg["paths"]["checkpoints"]), "general.json"))
    stats = model.stats or dataset.load_stats(_resolve(args.base_dir, cfg["paths"]["stats"]))

    trace_dir = os.path.dirname(os.path.abspath(args.trace))
    with open(os.path.join(trace_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    entry = next((e for e in manifest["runs"]
                  if e["file"] == os.path.basename(args.trace)), None)
    if entry is None:
        raise ConfigError(f"{args.trace} not listed in its suite manifest")
    run = sim.read_trace_csv(args.trace, sim.SimConfig(**entry["config"]),
                             sim.AttackSpec(**entry["attack"]) if entry["attack"] else None)
    norm = dataset.normalize(run, stats)
    probs, decisions = evaluate.stepwise_scores(model, norm, step, threshold)

    out_path = args.out or (os.path.splitext(args.trace)[0] + "_inference.csv")
    tmp = out_path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(f"# decision_latency_ms={step * 100}\n")
        w = csv.writer(fh)
        w.writerow(["vehicle_id", "t_index", "time_s", "probability", "decision", "mask"])
        V, T = run.mask.shape
        for v in range(V):
            for t in range(T):
                w.writerow([v, t, f"{t * run.config.dt_s:.9g}",
                            f"{probs[v, t]:.9g}", int(decisions[v, t]),
                            int(run.mask[v, t])])
    os.replace(tmp, out_path)
    n_attack = int(decisions.sum())
    print(f"{out_path}: {n_attack} attack decisions over {int(run.mask.sum())} valid steps")
    return EXIT_OK


def cmd_report(cfg: dict, args) -> int:
    if not args.reports:
        raise ConfigError("report requires at least one report JSON")
    docs = []
    for path in args.reports:
        with open(path) as fh:
            docs.append(json.load(fh))
    windows = {d.get("window") for d in docs}
    if len(windows) != 1:
        raise ConfigError(f"heterogeneous window configs in reports: {sorted(windows)}")
    steps = sorted({d["step"] for d in docs})
    scopes = []
    for d in docs:
        if d["scope"] not in scopes:
            scopes.append(d["scope"])
    cells = {(d["scope"], d["step"]): d for d in docs}

    out_dir = args.out or _resolve(args.base_dir, cfg["paths"]["reports"])
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report_matrix.csv")
    txt_path = os.path.join(out_dir, "report_matrix.txt")
    names = ["accuracy", "weighted_precision", "weighted_recall", "weighted_f1"]
    with open(csv_path + ".tmp", "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["input"]
        for s in steps:
            header += [f"step{s}_{n}" for n in names]
        w.writerow(header)
        for scope in scopes:
            row = [scope]
            for s in steps:
                d = cells.get((scope, s))
                row += ["" if d is None else f"{d[n]:.9g}" for n in names]
            w.writerow(row)
    os.replace(csv_path + ".tmp", csv_path)

    lines = []
    head = f"{'input':<14}" + "".join(
        f"| step={s}: acc prec rec f1 " for s in steps)
    lines.append(head)
    for scope in scopes:
        parts = [f"{scope:<14}"]
        for s in steps:
            d = cells.get((scope, s))
            if d is None:
                parts.append("|       -              ")
            else:
                parts.append("| " + " ".join(f"{d[n]:.2f}" for n in names) + " ")
        lines.append("".join(parts))
    with open(txt_path + ".tmp", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(txt_path + ".tmp", txt_path)
    print("\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platoonguard",
        description="Platoon trace synthesis and transformer-based misbehavior detection",
    )
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--base-dir", default=".", help="base directory for relative paths")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--step", type=int, choices=(1, 5, 10))
        p.add_argument("--regime")
        p.add_argument("--scope")
        p.add_argument("--threshold", type=float)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out")

    for name in ("simulate", "stats", "train", "eval", "infer", "report"):
        p = sub.add_parser(name)
        common(p)
        if name == "eval" or name == "infer":
            p.add_argument("--checkpoint")
        if name == "infer":
            p.add_argument("--trace")
        if name == "report":
            p.add_argument("reports", nargs="*")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "stats": cmd_stats,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, ValueError, FileNotFoundError, sim.SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
