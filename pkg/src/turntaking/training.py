"""Training loop and model evaluation.

A conversation contributes two sequences, one per target speaker. Each
sequence is split into fixed-length chunks; backpropagation runs over a full
chunk, the recurrent state is carried across a conversation's chunks in
temporal order (gradients are truncated at chunk boundaries), and the state
resets between conversations. One optimizer step per chunk; sequence order is
reshuffled every epoch. Early stopping watches the held-out data loss.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DataWarning
from .features import FeaturePlan, assemble
from .frames import PREDICTION_WINDOW
from .metrics import majority_baseline
from .network import (
    AdamState,
    ModelParams,
    NetworkConfig,
    TrainingObjective,
    backward_and_step,
    forward_batch,
    init_params,
    loss,
    lstm_forward,
)
from .seeds import derive_seed
from .session import DialogSession, window_targets_all_frames
from . import tasks

CHUNK_FRAMES = 600


@dataclass(frozen=True)
class TrainingSchedule:
    chunk_frames: int = CHUNK_FRAMES
    max_epochs: int = 40
    patience: int = 3

    def __post_init__(self):
        if self.chunk_frames < 1:
            raise ConfigError(f"chunk_frames must be positive, got {self.chunk_frames}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be positive, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be positive, got {self.patience}")


@dataclass(frozen=True)
class PreparedSequence:
    """One (conversation, target speaker) pair ready for the network."""

    session_id: str
    role: int
    inputs: np.ndarray  # [T, C]; token columns hold integer ids
    targets: np.ndarray  # [T, 60] future voice activity of the target speaker
    mask: np.ndarray  # [T] float64; 0.0 where the target window runs off the end


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float  # mean chunk loss, includes the L2 term
    heldout_loss: float  # pooled data loss on the held-out split, no L2


@dataclass(frozen=True)
class TrainedModel:
    config: NetworkConfig
    params: ModelParams
    heldout_loss: float
    history: Tuple[EpochRecord, ...]
    epochs_trained: int
    stopped_early: bool


def network_config_for_plan(plan: FeaturePlan, hidden_size: int) -> NetworkConfig:
    return NetworkConfig(
        hidden_size=hidden_size,
        layout=plan.layout(),
        vocab_sizes=plan.vocab_sizes(),
    )


def prepare_sequences(
    sessions: Sequence[DialogSession], plan: FeaturePlan
) -> List[PreparedSequence]:
    """Role-doubled sequences, ordered by (session_id, role)."""
    out = []
    for session in sorted(sessions, key=lambda s: s.session_id):
        matrices = assemble(session, plan)
        for role in (0, 1):
            targets, tail = window_targets_all_frames(session.speakers[role].va)
            out.append(
                PreparedSequence(
                    session_id=session.session_id,
                    role=role,
                    inputs=matrices[role],
                    targets=targets,
                    mask=(~tail).astype(np.float64),
                )
            )
    return out


def pooled_data_loss(
    params: ModelParams, sequences: Sequence[PreparedSequence], kind: str
) -> float:
    """Mean per-cell loss over every included frame of every sequence."""
    objective = TrainingObjective(kind=kind, l2_lambda=0.0)
    total = 0.0
    cells = 0.0
    for seq in sequences:
        n = float(seq.mask.sum()) * PREDICTION_WINDOW
        if n == 0.0:
            continue
        probs, _ = lstm_forward(params, seq.inputs)
        total += loss(probs, seq.targets, objective, frame_mask=seq.mask) * n
        cells += n
    if cells == 0.0:
        raise ConfigError("no scoreable frames in any sequence")
    return total / cells


def _train_one_sequence(params, seq, objective, optimizer, chunk_frames):
    """Chunked BPTT over one sequence; returns per-chunk (loss, cells)."""
    records = []
    state = None
    n_frames = seq.inputs.shape[0]
    for lo in range(0, n_frames, chunk_frames):
        hi = min(lo + chunk_frames, n_frames)
        chunk_mask = seq.mask[lo:hi]
        if chunk_mask.sum() == 0.0:
            # Nothing to score here; advance the state without a step.
            _, state = forward_batch(params, seq.inputs[None, lo:hi], state)
            continue
        _, chunk_loss, state = backward_and_step(
            params,
            seq.inputs[None, lo:hi],
            seq.targets[None, lo:hi],
            objective,
            optimizer,
            frame_mask=chunk_mask[None],
            state=state,
        )
        records.append((chunk_loss, float(chunk_mask.sum())))
    return records


def train_model(
    config: NetworkConfig,
    objective: TrainingObjective,
    learning_rate: float,
    train_sequences: Sequence[PreparedSequence],
    heldout_sequences: Sequence[PreparedSequence],
    seed: int,
    schedule: TrainingSchedule = TrainingSchedule(),
) -> TrainedModel:
    if not train_sequences:
        raise ConfigError("training split is empty")
    if not heldout_sequences:
        raise ConfigError("held-out split is empty")
    if learning_rate <= 0.0:
        raise ConfigError(f"learning rate must be positive, got {learning_rate}")
    params = init_params(config, derive_seed(seed, "init"))
    order_rng = np.random.default_rng(derive_seed(seed, "epoch-order"))
    optimizer = AdamState(learning_rate=learning_rate)

    best_loss = math.inf
    best_params = params.copy()
    best_epoch = 0
    bad_epochs = 0
    stopped_early = False
    history: List[EpochRecord] = []

    for epoch in range(1, schedule.max_epochs + 1):
        chunk_records = []
        for idx in order_rng.permutation(len(train_sequences)):
            chunk_records.extend(
                _train_one_sequence(
                    params,
                    train_sequences[idx],
                    objective,
                    optimizer,
                    schedule.chunk_frames,
                )
            )
        train_loss = float(np.mean([r[0] for r in chunk_records]))
        heldout = pooled_data_loss(params, heldout_sequences, objective.kind)
        history.append(EpochRecord(epoch, train_loss, heldout))
        if heldout < best_loss:
            best_loss = heldout
            best_params = params.copy()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= schedule.patience:
                stopped_early = True
                break

    if not math.isfinite(best_loss):
        raise ConfigError("held-out loss never became finite")
    return TrainedModel(
        config=config,
        params=best_params,
        heldout_loss=best_loss,
        history=tuple(history),
        epochs_trained=best_epoch,
        stopped_early=stopped_early,
    )


# --- evaluation ---


@dataclass(frozen=True)
class EvaluationReport:
    f_scores: Dict[str, float]  # task kind -> weighted F over pooled instances
    baseline_f: Dict[str, float]  # majority baseline on the same instances
    n_instances: Dict[str, int]
    test_bce: float
    test_mae: float
    onset_threshold: float


def session_probabilities(
    params: ModelParams, session: DialogSession, plan: FeaturePlan
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-frame prediction windows with each speaker as target in turn."""
    x0, x1 = assemble(session, plan)
    probs0, _ = lstm_forward(params, x0)
    probs1, _ = lstm_forward(params, x1)
    return probs0, probs1


def fit_threshold_on_sessions(
    params: ModelParams, sessions: Sequence[DialogSession], plan: FeaturePlan
) -> float:
    """Fit the SHORT/LONG onset threshold on instances from these sessions."""
    means: List[float] = []
    labels: List[str] = []
    for session in sorted(sessions, key=lambda s: s.session_id):
        instances = tasks.extract_instances(session, "ONSET")
        if not instances:
            continue
        probs = session_probabilities(params, session, plan)
        for inst in instances:
            window = tasks.PredictionWindow(
                inst.decision_frame, probs[inst.floor_holder][inst.decision_frame]
            )
            means.append(tasks.onset_mean(window))
            labels.append(inst.label)
    if not means:
        warnings.warn(
            "no onset instances available to fit a threshold; using 0.5",
            DataWarning,
        )
        return 0.5
    return tasks.fit_onset_threshold(means, labels)


def evaluate_model(
    params: ModelParams,
    plan: FeaturePlan,
    threshold_sessions: Sequence[DialogSession],
    test_sessions: Sequence[DialogSession],
    onset_threshold: Optional[float] = None,
) -> EvaluationReport:
    """Pooled task scores and losses on a test split.

    The onset threshold is fitted on `threshold_sessions` (normally the
    training split) unless a value is supplied.
    """
    if not test_sessions:
        raise ConfigError("test split is empty")
    if onset_threshold is None:
        onset_threshold = fit_threshold_on_sessions(params, threshold_sessions, plan)

    scored: Dict[str, List[tasks.ScoredInstance]] = {k: [] for k in tasks.KINDS}
    bce_total, mae_total, cells = 0.0, 0.0, 0.0
    for session in sorted(test_sessions, key=lambda s: s.session_id):
        probs0, probs1 = session_probabilities(params, session, plan)
        targets0, tail0 = window_targets_all_frames(session.speakers[0].va)
        targets1, tail1 = window_targets_all_frames(session.speakers[1].va)
        for probs, targets, tail in (
            (probs0, targets0, tail0),
            (probs1, targets1, tail1),
        ):
            mask = (~tail).astype(np.float64)
            n = float(mask.sum()) * PREDICTION_WINDOW
            if n == 0.0:
                continue
            bce_total += (
                loss(probs, targets, TrainingObjective("bce", 0.0), frame_mask=mask)
                * n
            )
            mae_total += (
                loss(probs, targets, TrainingObjective("mae", 0.0), frame_mask=mask)
                * n
            )
            cells += n
        for kind in tasks.KINDS:
            instances = tasks.extract_instances(session, kind)
            scored[kind].extend(
                tasks.score_instances(instances, probs0, probs1, onset_threshold)
            )
    if cells == 0.0:
        raise ConfigError("no scoreable frames in the test split")

    f_scores: Dict[str, float] = {}
    baseline_f: Dict[str, float] = {}
    n_instances: Dict[str, int] = {}
    for kind in tasks.KINDS:
        n_instances[kind] = len(scored[kind])
        if scored[kind]:
            f_scores[kind] = tasks.task_score(kind, scored[kind]).weighted_f
            labels = [s.instance.label for s in scored[kind]]
            baseline_f[kind] = majority_baseline(labels)
        else:
            f_scores[kind] = math.nan
            baseline_f[kind] = math.nan
    return EvaluationReport(
        f_scores=f_scores,
        baseline_f=baseline_f,
        n_instances=n_instances,
        test_bce=bce_total / cells,
        test_mae=mae_total / cells,
        onset_threshold=onset_threshold,
    )
