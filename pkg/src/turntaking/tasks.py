"""Turn-taking decision tasks over voice-activity tracks.

Four instance kinds are extracted from a session's two VA tracks and scored
from the model's 60-frame probability windows:

  PAUSE50 / PAUSE500  hold vs shift at mutual-silence pauses that lasted at
                      least 1 / 10 frames (50 / 500 ms)
  ONSET               short vs long utterance, judged 500 ms after onset
  OVERLAP             hold vs shift while both speakers talk

Extraction is a pure function of the VA tracks. Frames whose 60-frame
prediction window would extend past the end of the session ("tail" frames)
never become decision frames; the evaluation windows below are then always
fully observed. All scoring ties break toward HOLD, the no-action choice
for a dialog system.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DataError, DataWarning
from .frames import PREDICTION_WINDOW
from .metrics import weighted_f1
from .session import DialogSession

PAUSE_KINDS = ("PAUSE50", "PAUSE500")
KINDS = ("PAUSE50", "PAUSE500", "ONSET", "OVERLAP")

# Extraction constants, in 50 ms frames.
PAUSE50_MIN_FRAMES = 1
PAUSE500_MIN_FRAMES = 10
PAUSE_EVAL_FRAMES = 20  # 1 s window deciding who continued
ONSET_SILENCE_FRAMES = 30  # 1.5 s of the speaker's own silence
ONSET_SHORT_MAX_FRAMES = 20  # short utterance: at most 1 s of speech ...
ONSET_SHORT_TRAIL_SILENCE = 100  # ... followed by 5 s of silence
ONSET_LONG_MIN_FRAMES = 50  # long utterance: at least 2.5 s of speech
ONSET_DECISION_OFFSET = 10  # judged 500 ms after the onset
OVERLAP_HOLD_RUN = 30  # floor holder spoke for 1.5 s up to the overlap
OVERLAP_EVAL_LO = 8  # label window 400-900 ms in the future:
OVERLAP_EVAL_HI = 17  # frames n+8 .. n+17, probs indices 7..16

_LABELS = {
    "PAUSE50": ("HOLD", "SHIFT"),
    "PAUSE500": ("HOLD", "SHIFT"),
    "ONSET": ("SHORT", "LONG"),
    "OVERLAP": ("HOLD", "SHIFT"),
}


@dataclass(frozen=True)
class DecisionInstance:
    session_id: str
    kind: str
    decision_frame: int
    floor_holder: int  # for ONSET: the speaker starting the utterance
    label: str
    aux_frame: int  # pause start / utterance onset / overlap event start

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.label not in _LABELS[self.kind]:
            raise ConfigError(f"label {self.label!r} invalid for {self.kind}")
        if self.floor_holder not in (0, 1):
            raise ConfigError(f"floor_holder must be 0 or 1, got {self.floor_holder}")
        if self.decision_frame < 0:
            raise ConfigError("decision_frame must be non-negative")


@dataclass(frozen=True)
class PredictionWindow:
    """One 60-probability window together with the frame it was emitted at."""

    frame: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (PREDICTION_WINDOW,):
            raise ConfigError(f"window must have {PREDICTION_WINDOW} entries")
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class ScoredInstance:
    instance: DecisionInstance
    predicted: str
    margin: float  # positive pulls toward the predicted label


@dataclass(frozen=True)
class TaskScore:
    kind: str
    scored: Tuple[ScoredInstance, ...]
    weighted_f: float


def last_scorable_frame(n_frames: int) -> int:
    """Last frame whose full 60-frame prediction window fits in the file."""
    return n_frames - PREDICTION_WINDOW - 1


def _runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Maximal runs of True as (start, end) inclusive."""
    padded = np.concatenate([[0], mask.astype(np.int8), [0]])
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def _sole_speaker_in(va0, va1, lo, hi) -> Optional[int]:
    """The only speaker with any speech in frames lo..hi, if unique."""
    any0 = bool(va0[lo : hi + 1].any())
    any1 = bool(va1[lo : hi + 1].any())
    if any0 and not any1:
        return 0
    if any1 and not any0:
        return 1
    return None


def extract_pauses(session: DialogSession, min_pause_frames: int) -> List[DecisionInstance]:
    """Hold/shift instances at mutual-silence pauses.

    A pause is a maximal both-silent region immediately preceded by speech
    from exactly one speaker (the floor holder). The decision frame is where
    the pause has lasted exactly `min_pause_frames`; the instance is kept
    iff exactly one speaker has any speech in the second after it.
    """
    if min_pause_frames < 1:
        raise ConfigError("min_pause_frames must be >= 1")
    va0 = session.speakers[0].va
    va1 = session.speakers[1].va
    limit = last_scorable_frame(session.n_frames)
    kind = "PAUSE50" if min_pause_frames == PAUSE50_MIN_FRAMES else "PAUSE500"
    out = []
    for start, end in _runs((va0 == 0) & (va1 == 0)):
        if start == 0:
            continue  # no preceding floor holder
        if end - start + 1 < min_pause_frames:
            continue
        holder = _sole_speaker_in(va0, va1, start - 1, start - 1)
        if holder is None:
            continue  # preceded by overlap
        decision = start + min_pause_frames - 1
        if decision > limit:
            continue
        nxt = _sole_speaker_in(va0, va1, decision + 1, decision + PAUSE_EVAL_FRAMES)
        if nxt is None:
            continue
        out.append(
            DecisionInstance(
                session_id=session.session_id,
                kind=kind,
                decision_frame=decision,
                floor_holder=holder,
                label="HOLD" if nxt == holder else "SHIFT",
                aux_frame=start,
            )
        )
    return out


def extract_onsets(session: DialogSession) -> List[DecisionInstance]:
    """Short/long instances at utterance onsets.

    For each speaker: at least 30 frames of that speaker's own observed
    silence, then a contiguous speech run of L frames. SHORT iff L <= 20
    and the speaker stays silent for the following 100 observed frames;
    LONG iff L >= 50; anything else is discarded. Judged at onset + 10.
    """
    limit = last_scorable_frame(session.n_frames)
    out = []
    for speaker in (0, 1):
        va = session.speakers[speaker].va
        for onset, run_end in _runs(va == 1):
            if onset < ONSET_SILENCE_FRAMES:
                continue
            if va[onset - ONSET_SILENCE_FRAMES : onset].any():
                continue
            length = run_end - onset + 1
            label = None
            if length >= ONSET_LONG_MIN_FRAMES:
                label = "LONG"
            elif length <= ONSET_SHORT_MAX_FRAMES:
                trail_end = run_end + ONSET_SHORT_TRAIL_SILENCE
                if trail_end <= session.n_frames - 1 and not va[
                    run_end + 1 : trail_end + 1
                ].any():
                    label = "SHORT"
            if label is None:
                continue
            decision = onset + ONSET_DECISION_OFFSET
            if decision > limit:
                continue
            out.append(
                DecisionInstance(
                    session_id=session.session_id,
                    kind="ONSET",
                    decision_frame=decision,
                    floor_holder=speaker,
                    label=label,
                    aux_frame=onset,
                )
            )
    out.sort(key=lambda i: (i.decision_frame, i.floor_holder))
    return out


def extract_overlaps(session: DialogSession) -> List[DecisionInstance]:
    """Hold/shift instances during overlapping speech.

    Candidate frame n: one speaker (the floor holder) has spoken every
    frame of n-29..n and both speakers speak at n-1 and n. The label comes
    from frames n+8..n+17: exactly one speaker with any speech there, HOLD
    iff it is the holder. Within one mutual-speech event only the first
    qualifying frame is kept; frames where both speakers hold 1.5 s runs
    (no unique holder) are skipped.
    """
    va0 = session.speakers[0].va
    va1 = session.speakers[1].va
    limit = last_scorable_frame(session.n_frames)
    out = []
    for ev_start, ev_end in _runs((va0 == 1) & (va1 == 1)):
        for n in range(max(ev_start + 1, OVERLAP_HOLD_RUN - 1), ev_end + 1):
            if n > limit:
                break
            run0 = not (va0[n - OVERLAP_HOLD_RUN + 1 : n + 1] == 0).any()
            run1 = not (va1[n - OVERLAP_HOLD_RUN + 1 : n + 1] == 0).any()
            if run0 == run1:
                continue  # no holder, or ambiguous holder
            holder = 0 if run0 else 1
            nxt = _sole_speaker_in(va0, va1, n + OVERLAP_EVAL_LO, n + OVERLAP_EVAL_HI)
            if nxt is None:
                continue
            out.append(
                DecisionInstance(
                    session_id=session.session_id,
                    kind="OVERLAP",
                    decision_frame=n,
                    floor_holder=holder,
                    label="HOLD" if nxt == holder else "SHIFT",
                    aux_frame=ev_start,
                )
            )
            break  # thin to the first qualifying frame of this event
    return out


def extract_instances(session: DialogSession, kind: str) -> List[DecisionInstance]:
    if kind == "PAUSE50":
        return extract_pauses(session, PAUSE50_MIN_FRAMES)
    if kind == "PAUSE500":
        return extract_pauses(session, PAUSE500_MIN_FRAMES)
    if kind == "ONSET":
        return extract_onsets(session)
    if kind == "OVERLAP":
        return extract_overlaps(session)
    raise ConfigError(f"unknown task kind {kind!r}")


# --- scoring ---


def _check_window(window: PredictionWindow, instance: DecisionInstance):
    if window.frame != instance.decision_frame:
        raise ConfigError(
            f"window emitted at frame {window.frame}, instance decides at "
            f"frame {instance.decision_frame}"
        )


def score_pause(
    instance: DecisionInstance,
    window_s0: PredictionWindow,
    window_s1: PredictionWindow,
) -> ScoredInstance:
    """Average each speaker's predicted activity over the next second; the
    speaker with the higher mean is the predicted next speaker."""
    _check_window(window_s0, instance)
    _check_window(window_s1, instance)
    means = (
        float(window_s0.probs[:PAUSE_EVAL_FRAMES].mean()),
        float(window_s1.probs[:PAUSE_EVAL_FRAMES].mean()),
    )
    holder = instance.floor_holder
    margin = means[holder] - means[1 - holder]
    predicted = "HOLD" if margin >= 0 else "SHIFT"
    return ScoredInstance(instance, predicted, abs(margin))


def score_onset(
    instance: DecisionInstance, window_target: PredictionWindow, threshold: float
) -> ScoredInstance:
    """Mean of all 60 outputs against the fitted threshold; LONG iff >=."""
    _check_window(window_target, instance)
    mean = float(window_target.probs.mean())
    predicted = "LONG" if mean >= threshold else "SHORT"
    return ScoredInstance(instance, predicted, abs(mean - threshold))


def score_overlap(
    instance: DecisionInstance,
    window_s0: PredictionWindow,
    window_s1: PredictionWindow,
) -> ScoredInstance:
    """Average each speaker's predictions over the 400-900 ms window."""
    _check_window(window_s0, instance)
    _check_window(window_s1, instance)
    lo, hi = OVERLAP_EVAL_LO - 1, OVERLAP_EVAL_HI - 1  # probs[k] is frame n+1+k
    means = (
        float(window_s0.probs[lo : hi + 1].mean()),
        float(window_s1.probs[lo : hi + 1].mean()),
    )
    holder = instance.floor_holder
    margin = means[holder] - means[1 - holder]
    predicted = "HOLD" if margin >= 0 else "SHIFT"
    return ScoredInstance(instance, predicted, abs(margin))


def onset_mean(window_target: PredictionWindow) -> float:
    return float(window_target.probs.mean())


def fit_onset_threshold(means: Sequence[float], labels: Sequence[str]) -> float:
    """Threshold maximizing the weighted F-score of (mean >= t -> LONG).

    Candidates are the smallest mean (everything LONG), midpoints between
    consecutive distinct sorted means, and max + 1 (everything SHORT). Ties
    break to the smallest threshold. Identical means fit nothing; the
    common value is returned with a warning.
    """
    if len(means) != len(labels) or not means:
        raise ConfigError("need one label per mean, at least one instance")
    unknown = set(labels) - {"SHORT", "LONG"}
    if unknown:
        raise ConfigError(f"onset labels must be SHORT/LONG, got {unknown}")
    distinct = sorted(set(float(m) for m in means))
    if len(distinct) == 1:
        warnings.warn(
            "all onset means identical; threshold fit is degenerate", DataWarning
        )
        return distinct[0]
    candidates = [distinct[0]]
    candidates += [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])]
    candidates.append(distinct[-1] + 1.0)
    best_t, best_f = None, -1.0
    for t in candidates:
        pairs = [
            (lab, "LONG" if m >= t else "SHORT") for m, lab in zip(means, labels)
        ]
        f = weighted_f1(pairs)
        if f > best_f:
            best_t, best_f = t, f
    return best_t


def score_instances(
    instances: Sequence[DecisionInstance],
    probs_s0: np.ndarray,
    probs_s1: np.ndarray,
    onset_threshold: Optional[float] = None,
) -> List[ScoredInstance]:
    """Score instances against full per-frame probability matrices.

    probs_sX[f] is the window emitted at frame f by the model run with
    speaker X as the target.
    """
    out = []
    for inst in instances:
        w0 = PredictionWindow(inst.decision_frame, probs_s0[inst.decision_frame])
        w1 = PredictionWindow(inst.decision_frame, probs_s1[inst.decision_frame])
        if inst.kind in PAUSE_KINDS:
            out.append(score_pause(inst, w0, w1))
        elif inst.kind == "OVERLAP":
            out.append(score_overlap(inst, w0, w1))
        else:
            if onset_threshold is None:
                raise ConfigError("onset instances need a fitted threshold")
            target = w0 if inst.floor_holder == 0 else w1
            out.append(score_onset(inst, target, onset_threshold))
    return out


def task_score(kind: str, scored: Sequence[ScoredInstance]) -> TaskScore:
    pairs = [(s.instance.label, s.predicted) for s in scored]
    return TaskScore(kind=kind, scored=tuple(scored), weighted_f=weighted_f1(pairs))


# --- instance table export ---

_TSV_HEADER = "session_id\tkind\tdecision_frame\tfloor_holder\tlabel\taux_frame"


def write_instances(instances: Iterable[DecisionInstance], path):
    lines = [_TSV_HEADER]
    for inst in instances:
        lines.append(
            f"{inst.session_id}\t{inst.kind}\t{inst.decision_frame}\t"
            f"{inst.floor_holder}\t{inst.label}\t{inst.aux_frame}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_instances(path) -> List[DecisionInstance]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _TSV_HEADER:
        raise DataError(f"{path}: missing or unexpected instance table header")
    out = []
    for k, line in enumerate(lines[1:]):
        parts = line.split("\t")
        if len(parts) != 6:
            raise DataError(f"{path}: line {k + 2}: expected 6 fields")
        out.append(
            DecisionInstance(
                session_id=parts[0],
                kind=parts[1],
                decision_frame=int(parts[2]),
                floor_holder=int(parts[3]),
                label=parts[4],
                aux_frame=int(parts[5]),
            )
        )
    return out
