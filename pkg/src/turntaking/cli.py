"""Command-line entry point.

Subcommands: `synth` (write a synthetic corpus), `train` (grid search plus
repeated final evaluation), `evaluate` (score a saved checkpoint), `sfs`
(sequential forward selection), `gradcheck` (finite-difference check on a
tiny model), `baselines` (majority-baseline F-scores of an instance table).

Every run writes its artifacts under --out together with a manifest.json
recording the resolved config hash, master seed, applied overrides, and the
artifact list. Failures print one machine-parsable line to stderr and map to
exit codes: 2 config errors, 3 data errors, 4 numerical aborts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import experiment, synth, tasks
from .errors import ConfigError, DataError, TrainingDiverged
from .metrics import majority_baseline
from .network import (
    InputLayout,
    NetworkConfig,
    TrainingObjective,
    gradient_check,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .session import load_sessions, save_corpus

GRADCHECK_TOLERANCE = 1e-4


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw_value = text.split("=", 1)
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    return key, value


def _apply_overrides(config: dict, overrides: List[str]) -> List[str]:
    """Dotted-path overrides applied after file parse; returns the log."""
    applied = []
    for text in overrides:
        key, value = _parse_override(text)
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node:
                node[part] = {}
            node = node[part]
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
        applied.append(f"{key}={json.dumps(value)}")
    return applied


def _load_config_file(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: config must be a JSON object")
    return raw


def _write_manifest(out_dir: Path, subcommand: str, config_dict, seed, overrides, artifacts):
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    manifest = {
        "subcommand": subcommand,
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": seed,
        "overrides": list(overrides),
        "artifacts": sorted(artifacts),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _experiment_setup(args, require: str):
    """Shared train/evaluate/sfs plumbing: config, corpus, runner inputs."""
    raw = _load_config_file(args.config)
    applied = _apply_overrides(raw, args.set or [])
    resolved = json.loads(json.dumps(raw))  # manifest records the full config
    corpus_dir = raw.pop("corpus", None)
    if corpus_dir is None:
        raise ConfigError(f"{require} config needs a 'corpus' key")
    checkpoint = raw.pop("checkpoint", None)
    config = experiment.config_from_dict(raw)
    corpus_path = Path(args.config).parent / corpus_dir
    sessions = load_sessions(corpus_path, config.split.all_ids)
    return resolved, applied, config, list(sessions.values()), checkpoint, corpus_path


def cmd_synth(args) -> int:
    raw = _load_config_file(args.config)
    applied = _apply_overrides(raw, args.set or [])
    config = synth.config_from_dict(raw)
    out = _out_dir(args)
    sessions = synth.generate(config)
    save_corpus(sessions, out)
    artifacts = ["corpus.json"] + [s.session_id for s in sessions]
    _write_manifest(out, "synth", raw, config.seed, applied, artifacts)
    print(f"wrote {len(sessions)} sessions to {out}")
    return 0


def cmd_train(args) -> int:
    raw, applied, config, sessions, _, _ = _experiment_setup(args, "train")
    out = _out_dir(args)
    runner = experiment.CorpusRunner(config, sessions)
    grid = experiment.grid_search(config, runner=runner, jobs=args.jobs)
    final = experiment.final_evaluation(config, grid.best, runner=runner, jobs=args.jobs)
    experiment.write_results_csv(out / "results.csv", final)
    grid_report = {
        "best": {
            "hidden_size": grid.best.hidden_size,
            "learning_rate": grid.best.learning_rate,
            "l2_lambda": grid.best.l2_lambda,
        },
        "stage1": [list(row) for row in grid.stage1],
        "stage2": [list(row) for row in grid.stage2],
    }
    (out / "grid.json").write_text(json.dumps(grid_report, indent=2) + "\n")
    # Re-derive the best run (same seed, same bytes) to save its checkpoint.
    best_run = min(final.results, key=lambda r: (r.heldout_loss, r.seed))
    model, _ = runner.run_with_model(grid.best, best_run.seed)
    save_checkpoint(
        model.params,
        out / "model.npz",
        plan_fingerprint=config.plan.fingerprint(),
        seed=best_run.seed,
    )
    artifacts = ["results.csv", "grid.json", "model.npz"]
    _write_manifest(out, "train", raw, config.seed, applied, artifacts)
    print(
        f"best {grid.best.hidden_size}/{grid.best.learning_rate}/{grid.best.l2_lambda} "
        f"mean PAUSE50 F {final.mean['f_pause50']:.4f} over {config.final_runs} runs"
    )
    return 0


def cmd_evaluate(args) -> int:
    raw, applied, config, sessions, checkpoint, corpus_path = _experiment_setup(
        args, "evaluate"
    )
    if checkpoint is None:
        raise ConfigError("evaluate config needs a 'checkpoint' key")
    params, meta = load_checkpoint(Path(args.config).parent / checkpoint)
    if meta.get("plan_fingerprint") and meta["plan_fingerprint"] != config.plan.fingerprint():
        raise ConfigError(
            "checkpoint was trained with a different feature plan "
            f"({meta['plan_fingerprint']} != {config.plan.fingerprint()})"
        )
    from .training import evaluate_model

    train_sessions, _, test_sessions = experiment.split_sessions(sessions, config.split)
    report = evaluate_model(params, config.plan, train_sessions, test_sessions)
    out = _out_dir(args)
    payload = {
        "f_scores": report.f_scores,
        "baseline_f": report.baseline_f,
        "n_instances": report.n_instances,
        "test_bce": report.test_bce,
        "test_mae": report.test_mae,
        "onset_threshold": report.onset_threshold,
    }
    (out / "evaluation.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "evaluate", raw, config.seed, applied, ["evaluation.json"])
    for kind in tasks.KINDS:
        print(f"{kind}\t{report.f_scores[kind]:.4f}\tbaseline\t{report.baseline_f[kind]:.4f}")
    return 0


def cmd_sfs(args) -> int:
    raw, applied, config, sessions, _, _ = _experiment_setup(args, "sfs")
    out = _out_dir(args)
    runner = experiment.CorpusRunner(config, sessions)
    candidates = config.plan.use_acoustic
    if not candidates:
        raise ConfigError("sfs needs a plan with candidate acoustic columns")
    result = experiment.sequential_forward_selection(
        config, candidates, runner=runner, jobs=args.jobs
    )
    experiment.write_sfs_report(out / "sfs_report.tsv", result)
    _write_manifest(out, "sfs", raw, config.seed, applied, ["sfs_report.tsv"])
    for step in result.steps:
        print(f"step {step.step}: {step.feature} heldout_bce {step.heldout_loss:.6f}")
    return 0


def _gradcheck_model():
    """Tiny fixed model: H=3, four dense columns, word and POS embeddings."""
    layout = InputLayout(n_columns=6, token_columns=((4, "word"), (5, "pos")))
    config = NetworkConfig(
        hidden_size=3,
        layout=layout,
        vocab_sizes={"word": 7, "pos": 5},
        embed_dim=3,
        window=60,
    )
    return config


def cmd_gradcheck(args) -> int:
    import numpy as np

    config = _gradcheck_model()
    params = init_params(config, seed=2024)
    rng = np.random.default_rng(4)
    n_frames = 6
    inputs = rng.normal(size=(n_frames, config.layout.n_columns))
    inputs[:, 4] = rng.integers(0, 7, size=n_frames)
    inputs[:, 5] = rng.integers(0, 5, size=n_frames)
    targets = rng.integers(0, 2, size=(n_frames, config.window)).astype(float)
    worst = {}
    for kind, l2 in (("bce", 0.001), ("mae", 0.0)):
        per_block = gradient_check(
            params, inputs[None], targets[None], TrainingObjective(kind, l2), delta=1e-5
        )
        for block, err in per_block.items():
            worst[f"{kind}:{block}"] = err
    max_err = max(worst.values())
    passed = max_err < GRADCHECK_TOLERANCE
    if args.out:
        out = _out_dir(args)
        (out / "gradcheck.json").write_text(
            json.dumps({"max_relative_error": max_err, "per_block": worst}, indent=2, sort_keys=True)
            + "\n"
        )
        _write_manifest(out, "gradcheck", {}, None, [], ["gradcheck.json"])
    print(f"max relative error {max_err:.3e} {'PASS' if passed else 'FAIL'}")
    return 0 if passed else 4


def cmd_baselines(args) -> int:
    if not Path(args.instances).exists():
        raise DataError(f"instance file not found: {args.instances}")
    instances = tasks.read_instances(args.instances)
    if not instances:
        raise DataError(f"{args.instances}: no instances")
    by_kind = {}
    for inst in instances:
        by_kind.setdefault(inst.kind, []).append(inst.label)
    scores = {kind: majority_baseline(labels) for kind, labels in sorted(by_kind.items())}
    for kind, value in scores.items():
        print(f"{kind}\t{value:.4f}")
    if args.out:
        out = _out_dir(args)
        (out / "baselines.json").write_text(json.dumps(scores, indent=2, sort_keys=True) + "\n")
        _write_manifest(out, "baselines", {}, None, [], ["baselines.json"])
    return 0


def _add_common(parser, config=True, jobs=False):
    if config:
        parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="dotted-path config override, repeatable",
    )
    if jobs:
        default_jobs = int(os.environ.get("TURNTAKING_JOBS", "1"))
        parser.add_argument("--jobs", type=int, default=default_jobs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="turntaking",
        description="continuous turn-taking prediction: data, training, evaluation",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_common(p)
    p.set_defaults(func=cmd_synth, needs_out=True)

    p = sub.add_parser("train", help="grid search and repeated final evaluation")
    _add_common(p, jobs=True)
    p.set_defaults(func=cmd_train, needs_out=True)

    p = sub.add_parser("evaluate", help="score a saved checkpoint on a test split")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate, needs_out=True)

    p = sub.add_parser("sfs", help="sequential forward selection over acoustic columns")
    _add_common(p, jobs=True)
    p.set_defaults(func=cmd_sfs, needs_out=True)

    p = sub.add_parser("gradcheck", help="finite-difference check on a tiny model")
    _add_common(p, config=False)
    p.set_defaults(func=cmd_gradcheck, needs_out=False)

    p = sub.add_parser("baselines", help="majority-baseline F-scores of an instance table")
    p.add_argument("instances", help="instance TSV file")
    _add_common(p, config=False)
    p.set_defaults(func=cmd_baselines, needs_out=False)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "needs_out", False) and not args.out:
        print("ConfigError: --out is required for this subcommand", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"ConfigError: {str(e).splitlines()[0]}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"DataError: {str(e).splitlines()[0]}", file=sys.stderr)
        return 3
    except TrainingDiverged as e:
        print(f"TrainingDiverged: {str(e).splitlines()[0]}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"DataError: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
