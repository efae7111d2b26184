"""Experiment orchestration: grid search, repeated evaluation, feature selection.

All run seeds derive from the experiment master seed with readable labels, so
any single run is reproducible from (config fingerprint, seed) alone. Result
aggregation sorts rows before writing, making output independent of execution
order, and floats are written with repr() so identical runs produce identical
bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, TrainingDiverged
from .features import CANONICAL_ACOUSTIC_COLUMNS, FeaturePlan
from .network import TrainingObjective
from .seeds import derive_seed
from .session import DialogSession, SplitSpec
from .training import (
    TrainingSchedule,
    evaluate_model,
    network_config_for_plan,
    prepare_sequences,
    train_model,
)


@dataclass(frozen=True)
class GridSpec:
    hidden_sizes: Tuple[int, ...] = (20, 40, 60, 80, 100)
    learning_rates: Tuple[float, ...] = (0.001, 0.01)
    l2_values: Tuple[float, ...] = (0.001, 0.0001)

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        object.__setattr__(self, "learning_rates", tuple(self.learning_rates))
        object.__setattr__(self, "l2_values", tuple(self.l2_values))
        for name, values in (
            ("hidden_sizes", self.hidden_sizes),
            ("learning_rates", self.learning_rates),
            ("l2_values", self.l2_values),
        ):
            if not values:
                raise ConfigError(f"grid.{name} must not be empty")
            if any(v <= 0 for v in values):
                raise ConfigError(f"grid.{name} must be positive")
            if len(set(values)) != len(values):
                raise ConfigError(f"grid.{name} has duplicate entries")

    @property
    def reference_hidden_size(self) -> int:
        """Stage-1 hidden size: the middle of the sorted sweep."""
        ordered = sorted(self.hidden_sizes)
        return ordered[(len(ordered) - 1) // 2]


@dataclass(frozen=True)
class SfsSpec:
    steps: int = 10
    hidden_size: int = 20
    learning_rate: float = 0.01
    l2_lambda: float = 0.0001

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError(f"sfs.steps must be >= 0, got {self.steps}")
        if self.hidden_size < 1 or self.learning_rate <= 0 or self.l2_lambda < 0:
            raise ConfigError("sfs hyperparameters out of range")


@dataclass(frozen=True)
class ExperimentConfig:
    split: SplitSpec
    plan: FeaturePlan
    seed: int
    objective_kind: str = "bce"
    grid: GridSpec = GridSpec()
    runs_per_hidden_size: int = 3
    final_runs: int = 10
    schedule: TrainingSchedule = TrainingSchedule()
    sfs: SfsSpec = SfsSpec()

    def __post_init__(self):
        if self.objective_kind not in ("bce", "mae"):
            raise ConfigError(f"objective must be 'bce' or 'mae', got {self.objective_kind!r}")
        if self.runs_per_hidden_size < 1:
            raise ConfigError("runs_per_hidden_size must be >= 1")
        if self.final_runs < 1:
            raise ConfigError("final_runs must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "split": {
                "train": list(self.split.train_ids),
                "heldout": list(self.split.heldout_ids),
                "test": list(self.split.test_ids),
            },
            "plan": {
                "acoustic": list(self.plan.use_acoustic),
                "words": self.plan.use_words,
                "pos": self.plan.use_pos,
                "bnf": self.plan.use_bnf,
                "va": self.plan.use_va,
            },
            "seed": self.seed,
            "objective": self.objective_kind,
            "grid": {
                "hidden_sizes": list(self.grid.hidden_sizes),
                "learning_rates": list(self.grid.learning_rates),
                "l2_values": list(self.grid.l2_values),
            },
            "runs_per_hidden_size": self.runs_per_hidden_size,
            "final_runs": self.final_runs,
            "schedule": {
                "chunk_frames": self.schedule.chunk_frames,
                "max_epochs": self.schedule.max_epochs,
                "patience": self.schedule.patience,
            },
            "sfs": {
                "steps": self.sfs.steps,
                "hidden_size": self.sfs.hidden_size,
                "learning_rate": self.sfs.learning_rate,
                "l2_lambda": self.sfs.l2_lambda,
            },
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _require_keys(mapping: dict, allowed: Sequence[str], where: str) -> None:
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _plan_from_dict(d: dict) -> FeaturePlan:
    _require_keys(d, ("acoustic", "words", "pos", "bnf", "va"), "plan")
    acoustic = d.get("acoustic", [])
    if acoustic == "all":
        acoustic = list(CANONICAL_ACOUSTIC_COLUMNS)
    return FeaturePlan(
        use_acoustic=tuple(acoustic),
        use_words=bool(d.get("words", False)),
        use_pos=bool(d.get("pos", False)),
        use_bnf=bool(d.get("bnf", False)),
        use_va=bool(d.get("va", True)),
    )


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Parse the documented experiment schema; unknown keys are rejected."""
    _require_keys(
        raw,
        (
            "split",
            "plan",
            "seed",
            "objective",
            "grid",
            "runs_per_hidden_size",
            "final_runs",
            "schedule",
            "sfs",
        ),
        "experiment config",
    )
    for k in ("split", "plan", "seed"):
        if k not in raw:
            raise ConfigError(f"experiment config: missing required key '{k}'")
    split_d = raw["split"]
    _require_keys(split_d, ("train", "heldout", "test"), "split")
    split = SplitSpec(
        train_ids=tuple(split_d.get("train", [])),
        heldout_ids=tuple(split_d.get("heldout", [])),
        test_ids=tuple(split_d.get("test", [])),
    )
    grid_d = raw.get("grid", {})
    _require_keys(grid_d, ("hidden_sizes", "learning_rates", "l2_values"), "grid")
    grid = GridSpec(
        hidden_sizes=tuple(grid_d.get("hidden_sizes", GridSpec.hidden_sizes)),
        learning_rates=tuple(grid_d.get("learning_rates", GridSpec.learning_rates)),
        l2_values=tuple(grid_d.get("l2_values", GridSpec.l2_values)),
    )
    sched_d = raw.get("schedule", {})
    _require_keys(sched_d, ("chunk_frames", "max_epochs", "patience"), "schedule")
    schedule = TrainingSchedule(
        chunk_frames=int(sched_d.get("chunk_frames", 600)),
        max_epochs=int(sched_d.get("max_epochs", 40)),
        patience=int(sched_d.get("patience", 3)),
    )
    sfs_d = raw.get("sfs", {})
    _require_keys(sfs_d, ("steps", "hidden_size", "learning_rate", "l2_lambda"), "sfs")
    sfs = SfsSpec(
        steps=int(sfs_d.get("steps", 10)),
        hidden_size=int(sfs_d.get("hidden_size", 20)),
        learning_rate=float(sfs_d.get("learning_rate", 0.01)),
        l2_lambda=float(sfs_d.get("l2_lambda", 0.0001)),
    )
    return ExperimentConfig(
        split=split,
        plan=_plan_from_dict(raw["plan"]),
        seed=int(raw["seed"]),
        objective_kind=raw.get("objective", "bce"),
        grid=grid,
        runs_per_hidden_size=int(raw.get("runs_per_hidden_size", 3)),
        final_runs=int(raw.get("final_runs", 10)),
        schedule=schedule,
        sfs=sfs,
    )


@dataclass(frozen=True)
class HyperPoint:
    hidden_size: int
    learning_rate: float
    l2_lambda: float


@dataclass(frozen=True)
class RunResult:
    fingerprint: str
    seed: int
    heldout_loss: float
    test_bce: float
    test_mae: float
    f_pause50: float
    f_pause500: float
    f_onset: float
    f_overlap: float
    onset_threshold: float

    def __post_init__(self):
        for name in ("heldout_loss", "test_bce", "test_mae"):
            v = getattr(self, name)
            if not math.isnan(v) and v < 0:
                raise ConfigError(f"{name} must be >= 0, got {v}")
        for name in ("f_pause50", "f_pause500", "f_onset", "f_overlap"):
            v = getattr(self, name)
            if not math.isnan(v) and not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")


RESULT_COLUMNS = (
    "fingerprint",
    "seed",
    "heldout_loss",
    "test_bce",
    "test_mae",
    "f_pause50",
    "f_pause500",
    "f_onset",
    "f_overlap",
    "onset_threshold",
)


def split_sessions(
    sessions: Sequence[DialogSession], split: SplitSpec
) -> Tuple[List[DialogSession], List[DialogSession], List[DialogSession]]:
    by_id = {s.session_id: s for s in sessions}
    missing = [sid for sid in split.all_ids if sid not in by_id]
    if missing:
        raise ConfigError(f"split names sessions not in the corpus: {missing[:5]}")
    return (
        [by_id[sid] for sid in split.train_ids],
        [by_id[sid] for sid in split.heldout_ids],
        [by_id[sid] for sid in split.test_ids],
    )


class CorpusRunner:
    """Default trainer: one full train/evaluate cycle per call.

    Instances are picklable (prepared-sequence caches are dropped on pickle)
    so runs can be distributed over worker processes.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        sessions: Sequence[DialogSession],
    ):
        self.config = config
        self.train_sessions, self.heldout_sessions, self.test_sessions = (
            split_sessions(sessions, config.split)
        )
        self._cache: Dict[str, tuple] = {}

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_cache"] = {}
        return state

    def _sequences(self, plan: FeaturePlan):
        key = plan.fingerprint()
        if key not in self._cache:
            self._cache[key] = (
                prepare_sequences(self.train_sessions, plan),
                prepare_sequences(self.heldout_sessions, plan),
            )
        return self._cache[key]

    def _train(self, plan: FeaturePlan, hyper: HyperPoint, seed: int, objective_kind: str):
        train_seqs, heldout_seqs = self._sequences(plan)
        objective = TrainingObjective(kind=objective_kind, l2_lambda=hyper.l2_lambda)
        net_config = network_config_for_plan(plan, hyper.hidden_size)
        return train_model(
            net_config,
            objective,
            hyper.learning_rate,
            train_seqs,
            heldout_seqs,
            seed=seed,
            schedule=self.config.schedule,
        )

    def run(self, hyper: HyperPoint, seed: int) -> RunResult:
        model = self._train(self.config.plan, hyper, seed, self.config.objective_kind)
        report = evaluate_model(
            model.params, self.config.plan, self.train_sessions, self.test_sessions
        )
        return RunResult(
            fingerprint=self.config.fingerprint(),
            seed=seed,
            heldout_loss=model.heldout_loss,
            test_bce=report.test_bce,
            test_mae=report.test_mae,
            f_pause50=report.f_scores["PAUSE50"],
            f_pause500=report.f_scores["PAUSE500"],
            f_onset=report.f_scores["ONSET"],
            f_overlap=report.f_scores["OVERLAP"],
            onset_threshold=report.onset_threshold,
        )

    def run_with_model(self, hyper: HyperPoint, seed: int):
        """Like run(), also returning the trained model and its report."""
        model = self._train(self.config.plan, hyper, seed, self.config.objective_kind)
        report = evaluate_model(
            model.params, self.config.plan, self.train_sessions, self.test_sessions
        )
        return model, report

    def heldout_bce(self, acoustic_subset: Tuple[str, ...], seed: int) -> float:
        """SFS evaluator: swap the acoustic set, keep everything else."""
        plan = replace(self.config.plan, use_acoustic=tuple(acoustic_subset))
        hyper = HyperPoint(
            self.config.sfs.hidden_size,
            self.config.sfs.learning_rate,
            self.config.sfs.l2_lambda,
        )
        model = self._train(plan, hyper, seed, "bce")
        return model.heldout_loss


_WORKER_RUNNER: Optional[CorpusRunner] = None


def _worker_init(runner: CorpusRunner) -> None:
    global _WORKER_RUNNER
    _WORKER_RUNNER = runner


def _worker_run(args) -> RunResult:
    hyper, seed = args
    return _WORKER_RUNNER.run(hyper, seed)


def _worker_heldout(args) -> float:
    subset, seed = args
    return _WORKER_RUNNER.heldout_bce(subset, seed)


def _map_runs(config, runner, worker_fn, method, items, jobs: int):
    # Worker processes need a picklable runner; injected callables without
    # one run sequentially. A training abort carries the config fingerprint.
    try:
        if jobs <= 1 or len(items) <= 1 or runner is None:
            return [method(*item) for item in items]
        with ProcessPoolExecutor(
            max_workers=min(jobs, len(items)),
            initializer=_worker_init,
            initargs=(runner,),
        ) as pool:
            return list(pool.map(worker_fn, items))
    except TrainingDiverged as e:
        detail = f"config {config.fingerprint()}"
        if e.detail:
            detail += f"; {e.detail}"
        raise TrainingDiverged(e.block, detail) from e


@dataclass(frozen=True)
class GridResult:
    best: HyperPoint
    stage1: Tuple[Tuple[float, float, float], ...]  # (lr, l2, heldout loss)
    stage2: Tuple[Tuple[int, float], ...]  # (hidden size, mean heldout loss)


def grid_search(
    config: ExperimentConfig,
    runner: Optional[CorpusRunner] = None,
    run_fn: Optional[Callable[[HyperPoint, int], RunResult]] = None,
    jobs: int = 1,
) -> GridResult:
    """Two-stage sweep: lr x l2 at the reference hidden size, then hidden
    sizes with the winning pair, each repeated and averaged. Ties break to
    the smaller value; a one-point grid is returned without any training.
    """
    grid = config.grid
    if run_fn is None:
        if runner is None:
            raise ConfigError("grid_search needs a runner or an injected run_fn")
        run_fn = runner.run

    cells = [
        (lr, l2)
        for lr in sorted(grid.learning_rates)
        for l2 in sorted(grid.l2_values)
    ]
    singleton = len(cells) == 1 and len(grid.hidden_sizes) == 1
    if singleton:
        lr, l2 = cells[0]
        return GridResult(
            best=HyperPoint(grid.hidden_sizes[0], lr, l2), stage1=(), stage2=()
        )

    if len(cells) == 1:
        best_lr, best_l2 = cells[0]
        stage1 = ()
    else:
        ref = grid.reference_hidden_size
        seed = derive_seed(config.seed, "grid-stage1")
        items = [(HyperPoint(ref, lr, l2), seed) for lr, l2 in cells]
        results = _map_runs(config, runner, _worker_run, run_fn, items, jobs)
        stage1 = tuple(
            (lr, l2, res.heldout_loss) for (lr, l2), res in zip(cells, results)
        )
        best_lr, best_l2, _ = min(stage1, key=lambda row: (row[2], row[0], row[1]))

    hiddens = sorted(grid.hidden_sizes)
    if len(hiddens) == 1:
        return GridResult(
            best=HyperPoint(hiddens[0], best_lr, best_l2), stage1=stage1, stage2=()
        )
    items = [
        (HyperPoint(h, best_lr, best_l2), derive_seed(config.seed, f"grid-stage2-run-{k}"))
        for h in hiddens
        for k in range(config.runs_per_hidden_size)
    ]
    results = _map_runs(config, runner, _worker_run, run_fn, items, jobs)
    stage2 = []
    for i, h in enumerate(hiddens):
        chunk = results[
            i * config.runs_per_hidden_size : (i + 1) * config.runs_per_hidden_size
        ]
        stage2.append((h, float(np.mean([r.heldout_loss for r in chunk]))))
    best_hidden, _ = min(stage2, key=lambda row: (row[1], row[0]))
    return GridResult(
        best=HyperPoint(best_hidden, best_lr, best_l2),
        stage1=stage1,
        stage2=tuple(stage2),
    )


@dataclass(frozen=True)
class FinalResult:
    results: Tuple[RunResult, ...]
    mean: Dict[str, float]
    std: Dict[str, float]


_AGG_FIELDS = RESULT_COLUMNS[2:]  # numeric columns


def final_evaluation(
    config: ExperimentConfig,
    best: HyperPoint,
    runner: Optional[CorpusRunner] = None,
    run_fn: Optional[Callable[[HyperPoint, int], RunResult]] = None,
    jobs: int = 1,
) -> FinalResult:
    """`final_runs` independent runs with derived seeds, aggregated."""
    if run_fn is None:
        if runner is None:
            raise ConfigError("final_evaluation needs a runner or an injected run_fn")
        run_fn = runner.run
    items = [
        (best, derive_seed(config.seed, f"final-run-{k:02d}"))
        for k in range(config.final_runs)
    ]
    results = _map_runs(config, runner, _worker_run, run_fn, items, jobs)
    results = tuple(sorted(results, key=lambda r: (r.fingerprint, r.seed)))
    mean = {}
    std = {}
    for name in _AGG_FIELDS:
        values = np.array([getattr(r, name) for r in results], dtype=np.float64)
        mean[name] = float(values.mean())
        std[name] = float(values.std())
    return FinalResult(results=results, mean=mean, std=std)


def write_results_csv(path, final: FinalResult) -> None:
    """One row per run plus mean/std rows; repr() floats for stable bytes."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in final.results:
            writer.writerow(
                [r.fingerprint, r.seed]
                + [repr(float(getattr(r, name))) for name in _AGG_FIELDS]
            )
        fp = final.results[0].fingerprint if final.results else ""
        for label, row in (("mean", final.mean), ("std", final.std)):
            writer.writerow(
                [fp, label] + [repr(float(row[name])) for name in _AGG_FIELDS]
            )


def read_results_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass(frozen=True)
class SfsStep:
    step: int
    feature: str
    heldout_loss: float


@dataclass(frozen=True)
class SfsResult:
    chosen: Tuple[str, ...]
    steps: Tuple[SfsStep, ...]


def sequential_forward_selection(
    config: ExperimentConfig,
    candidates: Sequence[str],
    runner: Optional[CorpusRunner] = None,
    evaluate_subset: Optional[Callable[[Tuple[str, ...], int], float]] = None,
    jobs: int = 1,
) -> SfsResult:
    """Greedy selection: at each step add the candidate whose inclusion gives
    the lowest held-out BCE. Every candidate at a step shares that step's
    derived seed, so the comparison differs only in the feature set. The
    recorded loss sequence is reported verbatim, not forced monotone.
    """
    candidates = list(candidates)
    if len(set(candidates)) != len(candidates):
        raise ConfigError("duplicate candidate features")
    if config.sfs.steps > len(candidates):
        raise ConfigError(
            f"sfs step budget {config.sfs.steps} exceeds {len(candidates)} candidates"
        )
    if evaluate_subset is None:
        if runner is None:
            raise ConfigError(
                "sequential_forward_selection needs a runner or evaluate_subset"
            )
        evaluate_subset = runner.heldout_bce

    chosen: List[str] = []
    steps: List[SfsStep] = []
    for step in range(config.sfs.steps):
        seed = derive_seed(config.seed, f"sfs-step-{step}")
        remaining = sorted(c for c in candidates if c not in chosen)
        items = [(tuple(sorted(chosen + [cand])), seed) for cand in remaining]
        losses = _map_runs(config, runner, _worker_heldout, evaluate_subset, items, jobs)
        by_cand = list(zip(remaining, losses))
        best_cand, best_loss = min(by_cand, key=lambda row: (row[1], row[0]))
        chosen.append(best_cand)
        steps.append(SfsStep(step=step + 1, feature=best_cand, heldout_loss=best_loss))
    return SfsResult(chosen=tuple(chosen), steps=tuple(steps))


def write_sfs_report(path, result: SfsResult) -> None:
    with open(path, "w") as fh:
        fh.write("step\tfeature\theldout_loss\n")
        for s in result.steps:
            fh.write(f"{s.step}\t{s.feature}\t{repr(float(s.heldout_loss))}\n")


def read_sfs_report(path) -> List[SfsStep]:
    out = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != "step\tfeature\theldout_loss":
            raise ConfigError(f"{path}: unexpected SFS report header {header!r}")
        for line in fh:
            step, feature, loss = line.rstrip("\n").split("\t")
            out.append(SfsStep(int(step), feature, float(loss)))
    return out
