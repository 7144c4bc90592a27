"""Command-line surface: generate / train / evaluate / explain / gradcheck.

Config files are plain ``key = value`` text (# comments allowed). Nothing
is read from environment variables.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import causal as C
from . import checkpoints as ckpt
from . import datagen as D
from . import train as TR
from . import verify
from .metrics import classification_report
from .pipeline import graphs_from_sessions, peu_rows_by_session
from .sessions import CorpusError, check_no_augmented_leakage, read_sessions, split_sessions, write_sessions

EXIT_CONFIG = 2


class CliConfigError(ValueError):
    pass


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key] = val
    return values


def _coerce(cls, values):
    """Coerce string values onto a dataclass's field types."""
    kwargs = {}
    defaults = cls()
    for key, raw in values.items():
        if key not in cls.__dataclass_fields__:
            raise CliConfigError(f"unknown {cls.__name__} field {key!r}")
        current = getattr(defaults, key)
        if isinstance(current, bool):
            if raw.lower() not in ("true", "false"):
                raise CliConfigError(f"field {key!r}: expected true/false, got {raw!r}")
            kwargs[key] = raw.lower() == "true"
        elif isinstance(current, int):
            kwargs[key] = int(raw)
        elif isinstance(current, float):
            kwargs[key] = float(raw)
        elif isinstance(current, tuple):
            kwargs[key] = tuple(int(x) for x in raw.split(","))
        else:
            kwargs[key] = raw
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise CliConfigError(str(exc)) from exc


def load_config(path, cls):
    return _coerce(cls, parse_config_text(Path(path).read_text(encoding="utf-8")))


def _git_describe():
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5, check=False,
        )
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


def write_manifest(out_dir, command, config, seeds, outputs, started):
    manifest = {
        "command": command,
        "config": config,
        "seeds": list(seeds),
        "git": _git_describe(),
        "wall_clock_s": round(time.time() - started, 3),
        "outputs": sorted(str(p) for p in outputs),
    }
    path = Path(out_dir) / "run_manifest.json"
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


def _write_json(path, obj):
    path = Path(path)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


def cmd_generate(args):
    started = time.time()
    config = load_config(args.config, D.GenConfig) if args.config else D.GenConfig()
    if args.seed is not None:
        config = D.GenConfig.from_json({**config.to_json(), "seed": args.seed})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = D.generate_corpus(config)
    sessions = splits["train"] + splits["val"] + splits["test"]
    corpus_path = out_dir / "sessions.jsonl"
    write_sessions(corpus_path, sessions)
    manifest_path = out_dir / "corpus_manifest.json"
    _write_json(manifest_path, D.corpus_manifest(config, splits))
    write_manifest(out_dir, "generate", config.to_json(), [config.seed],
                   [corpus_path, manifest_path], started)
    print(f"wrote {len(sessions)} sessions to {corpus_path}")
    return 0


def _load_graphs(corpus_path, persona_mode="on"):
    sessions = read_sessions(corpus_path)
    check_no_augmented_leakage(sessions)
    splits = split_sessions(sessions)
    graphs = {
        name: graphs_from_sessions(split) if split else []
        for name, split in splits.items()
    }
    return sessions, splits, graphs


def _report(probs, labels, threshold):
    return classification_report(probs, labels, threshold).to_json()


def cmd_train(args):
    started = time.time()
    config = load_config(args.config, TR.TrainConfig) if args.config else TR.TrainConfig()
    overrides = {}
    if args.persona_mode:
        overrides["persona_mode"] = args.persona_mode
    if args.threshold_objective:
        overrides["threshold_objective"] = args.threshold_objective
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    if overrides:
        config = TR.TrainConfig.from_json({**config.to_json(), **overrides})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sessions, splits, graphs = _load_graphs(args.corpus)
    if not splits["train"] or not splits["val"]:
        raise CliConfigError("corpus must provide train and val splits")
    from .model import ModelConfig

    model_config = ModelConfig()
    members, threshold = TR.train_ensemble(graphs["train"], graphs["val"], config, model_config)
    outputs = []
    for member in members:
        prefix = out_dir / f"ckpt-seed{member.seed}"
        ckpt.save_checkpoint(prefix, member)
        outputs += [prefix.with_suffix(".json"), prefix.with_suffix(".bin")]
    val_probs = np.array([TR.ensemble_predict(members, g) for g in graphs["val"]])
    val_labels = np.array([g.label for g in graphs["val"]])
    report = {
        "split": "val",
        "ensemble_threshold": threshold,
        "members": [
            {"seed": m.seed, "best_val_pr_auc": m.best_val_pr_auc,
             "threshold": m.threshold, "epoch": m.epoch}
            for m in members
        ],
        "metrics": _report(val_probs, val_labels, threshold),
    }
    report_path = out_dir / "report.json"
    _write_json(report_path, report)
    outputs.append(report_path)
    write_manifest(out_dir, "train", config.to_json(), config.seeds, outputs, started)
    print(f"trained {len(members)} members; val macro-F1 "
          f"{report['metrics']['macro_f1']:.4f} at threshold {threshold:.4f}")
    return 0


def _load_members(paths):
    members = [ckpt.load_checkpoint(Path(p).with_suffix("")) for p in paths]
    return members


def cmd_evaluate(args):
    started = time.time()
    members = _load_members(args.checkpoint)
    sessions, splits, graphs = _load_graphs(args.corpus)
    if not splits[args.split]:
        raise CorpusError(f"corpus has no sessions in split {args.split!r}")
    threshold = args.threshold if args.threshold is not None else members[0].threshold
    probs = np.array([TR.ensemble_predict(members, g) for g in graphs[args.split]])
    labels = np.array([g.label for g in graphs[args.split]])
    report = {"split": args.split, "metrics": _report(probs, labels, threshold)}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / f"eval-{args.split}.json"
    _write_json(report_path, report)
    write_manifest(out_dir, "evaluate", {"threshold": threshold},
                   [m.seed for m in members], [report_path], started)
    print(f"{args.split} macro-F1 {report['metrics']['macro_f1']:.4f}")
    return 0


def cmd_explain(args):
    started = time.time()
    prefix = Path(args.checkpoint[0]).with_suffix("")
    hash_before = ckpt.checkpoint_hash(prefix)
    member = ckpt.load_checkpoint(prefix)
    sessions, splits, graphs = _load_graphs(args.corpus)
    if not any(s.causes for s in sessions):
        raise CorpusError(
            "corpus carries no causal annotations; regenerate it with the generate command"
        )
    causal_config = C.CausalConfig(window=args.window, past_only=args.past_only)
    graph_by_id = {g.session_id: g for split in graphs.values() for g in split}
    reps = {sid: C.session_node_reps(g, member.params) for sid, g in graph_by_id.items()}
    peu_rows = peu_rows_by_session(sessions)
    from .peu import build_peu_tensor

    def instances_for(split_sessions_):
        out = []
        for s in split_sessions_:
            out += C.extract_instances(s, build_peu_tensor(s), causal_config.window,
                                       causal_config.past_only)
        return out

    eval_split = splits["test"] or splits["val"]
    eval_instances = instances_for(eval_split)
    scorer = C.train_scorer(instances_for(splits["train"]), reps, peu_rows,
                            causal_config, seed=args.seed or 0)
    report, explanations, skipped = C.rank_and_evaluate(eval_instances, reps, peu_rows, scorer)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scorer_prefix = out_dir / "causal-scorer"
    ckpt.save_scorer(scorer_prefix, scorer, extra={"session_checkpoint": str(prefix)})
    explain_path = out_dir / "explanations.jsonl"
    tmp = explain_path.with_suffix(".tmp")
    with tmp.open("w", encoding="utf-8") as f:
        for rec in explanations:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    tmp.replace(explain_path)
    report_path = out_dir / "ranking_report.json"
    _write_json(report_path, {**report.to_json(), "instances_without_cause": skipped})
    if ckpt.checkpoint_hash(prefix) != hash_before:
        raise RuntimeError("session checkpoint changed during explain; this is a bug")
    write_manifest(out_dir, "explain", causal_config.to_json(), [args.seed or 0],
                   [scorer_prefix.with_suffix(".json"), scorer_prefix.with_suffix(".bin"),
                    explain_path, report_path], started)
    print(f"Hit@1 {report.hit_at[1]:.3f} Hit@3 {report.hit_at[3]:.3f} "
          f"Hit@5 {report.hit_at[5]:.3f} MRR {report.mrr:.3f}")
    return 0


def cmd_gradcheck(args):
    rows = verify.run_suite(trials=args.trials, seed=args.seed or 0)
    failed = 0
    for name, err, tol, ok in rows:
        status = "PASS" if ok else "FAIL"
        print(f"{status}  {name:24s} max_rel_err={err:.3e}  tol={tol:.0e}")
        failed += 0 if ok else 1
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="psygat")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic corpus")
    g.add_argument("--config", default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the session-level ensemble")
    t.add_argument("--corpus", required=True)
    t.add_argument("--config", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--persona-mode", choices=("on", "off"), default=None)
    t.add_argument("--threshold-objective",
                   choices=("f1", "f0.5", "recall_at_min_precision"), default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="evaluate checkpoints on a split")
    e.add_argument("--checkpoint", nargs="+", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--split", choices=("train", "val", "test"), default="test")
    e.add_argument("--threshold", type=float, default=None)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("explain", help="train the causal scorer and rank antecedents")
    x.add_argument("--checkpoint", nargs="+", required=True)
    x.add_argument("--corpus", required=True)
    x.add_argument("--window", type=int, default=3)
    x.add_argument("--past-only", action="store_true")
    x.add_argument("--seed", type=int, default=None)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_explain)

    c = sub.add_parser("gradcheck", help="finite-difference verification suite")
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--seed", type=int, default=None)
    c.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliConfigError, D.ConfigError, TR.ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusError, C.DataError, ckpt.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
