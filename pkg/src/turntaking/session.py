"""Dialog session data model and on-disk corpus format.

A session holds, per speaker, a frame-level voice-activity vector, word and
POS events with end timestamps, a 50 ms acoustic feature matrix with named
columns, and an optional 64-dim phonetic (bottleneck) feature matrix. All
tracks live on the shared 50 ms grid after loading.

On-disk layout (plain text, one directory per session):

    <corpus>/corpus.json            {"format_version": 1, "sessions": [...]}
    <corpus>/words.vocab.tsv        id <TAB> string   (one per line, optional)
    <corpus>/pos.vocab.tsv          id <TAB> string
    <corpus>/<session_id>/
        session.json      {"format_version": 1, "session_id": ..., "n_frames": N,
                           "acoustic_step_s": 0.01 | 0.05,
                           "bnf_step_s": 0.01 | 0.05}   (bnf key iff BNF present)
        va.s0.txt         speech intervals, "start_s <TAB> end_s" per line
        va.s1.txt
        words.s0.txt      word events, "end_time_s <TAB> id" per line
        words.s1.txt
        pos.s0.txt        POS events, same grammar
        pos.s1.txt
        acoustic.s0.tsv   header of column names, then one row per step
        acoustic.s1.tsv
        bnf.s0.tsv        optional, 64 columns, 10 ms or 50 ms steps
        bnf.s1.tsv

Floats are written with repr() so a write/read round trip is bit-exact.
Tracks at 10 ms cadence are averaged into 50 ms frames at load time; BNF
tracks additionally get their 60 ms availability delay applied (at 10 ms
resolution, before averaging). Voice activity is rasterized from intervals:
a frame counts as speech iff speech covers more than half of it.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DataError, DataWarning
from .frames import FRAME_LENGTH_S, PREDICTION_WINDOW, time_to_frame

FORMAT_VERSION = 1

# Vocabulary sizes including the reserved id 0 ("no change in state").
WORD_VOCAB_SIZE = 2502  # ids 1..2501
POS_VOCAB_SIZE = 60  # ids 1..59
BNF_DIM = 64

# Coverage slack absorbing float noise in interval arithmetic; far below
# any meaningful annotation precision.
_COVERAGE_EPS = 1e-9

Event = Tuple[float, int]


def _check_events(events: Sequence[Event], max_id: int, what: str, where: str):
    prev = -np.inf
    for k, (end_s, token_id) in enumerate(events):
        if end_s < prev:
            raise DataError(
                f"{where}: {what} event {k} at {end_s} s is earlier than its predecessor"
            )
        prev = end_s
        if not 1 <= token_id <= max_id:
            raise DataError(
                f"{where}: {what} event {k} has id {token_id}, valid range is 1..{max_id}"
            )


@dataclass(frozen=True)
class SpeakerTrack:
    va: np.ndarray  # [n_frames] of {0,1}, int8
    word_events: Tuple[Event, ...]
    pos_events: Tuple[Event, ...]
    acoustic: np.ndarray  # [n_frames, n_acoustic] float64
    bnf: Optional[np.ndarray] = None  # [n_frames, 64] float64


@dataclass(frozen=True)
class DialogSession:
    session_id: str
    n_frames: int
    acoustic_names: Tuple[str, ...]
    speakers: Tuple[SpeakerTrack, SpeakerTrack]

    def __post_init__(self):
        if self.n_frames < 1:
            raise DataError(f"session {self.session_id}: n_frames must be >= 1")
        if len(set(self.acoustic_names)) != len(self.acoustic_names):
            raise DataError(f"session {self.session_id}: duplicate acoustic column names")
        for s, track in enumerate(self.speakers):
            where = f"session {self.session_id}, speaker {s}"
            if track.va.shape != (self.n_frames,):
                raise DataError(f"{where}: va has shape {track.va.shape}, expected ({self.n_frames},)")
            if not np.isin(track.va, (0, 1)).all():
                raise DataError(f"{where}: va values outside {{0, 1}}")
            if track.acoustic.shape != (self.n_frames, len(self.acoustic_names)):
                raise DataError(
                    f"{where}: acoustic has shape {track.acoustic.shape}, expected "
                    f"({self.n_frames}, {len(self.acoustic_names)})"
                )
            if track.bnf is not None and track.bnf.shape != (self.n_frames, BNF_DIM):
                raise DataError(
                    f"{where}: bnf has shape {track.bnf.shape}, expected "
                    f"({self.n_frames}, {BNF_DIM})"
                )
            _check_events(track.word_events, WORD_VOCAB_SIZE - 1, "word", where)
            _check_events(track.pos_events, POS_VOCAB_SIZE - 1, "pos", where)
        for track in self.speakers:
            for arr in (track.va, track.acoustic, track.bnf):
                if arr is not None:
                    arr.setflags(write=False)

    @property
    def has_bnf(self) -> bool:
        return all(t.bnf is not None for t in self.speakers)


@dataclass(frozen=True)
class SplitSpec:
    train_ids: Tuple[str, ...]
    heldout_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "train_ids", tuple(self.train_ids))
        object.__setattr__(self, "heldout_ids", tuple(self.heldout_ids))
        object.__setattr__(self, "test_ids", tuple(self.test_ids))
        seen = {}
        for part, ids in (
            ("train", self.train_ids),
            ("heldout", self.heldout_ids),
            ("test", self.test_ids),
        ):
            for sid in ids:
                if sid in seen:
                    raise ConfigError(
                        f"session '{sid}' appears in both {seen[sid]} and {part} splits"
                    )
                seen[sid] = part

    @property
    def all_ids(self) -> Tuple[str, ...]:
        return self.train_ids + self.heldout_ids + self.test_ids


# --- grid alignment helpers ---


def rasterize_intervals(intervals: Sequence[Tuple[float, float]], n_frames: int) -> np.ndarray:
    """Speech intervals in seconds -> binary frame vector.

    A frame is 1 iff the intervals cover strictly more than half of it.
    Intervals must be positive-length, sorted, and non-overlapping.
    """
    coverage = np.zeros(n_frames)
    prev_end = -np.inf
    for k, (start, end) in enumerate(intervals):
        if end <= start:
            raise DataError(f"interval {k} [{start}, {end}) has non-positive length")
        if start < prev_end - _COVERAGE_EPS:
            raise DataError(f"interval {k} starting at {start} s overlaps its predecessor")
        prev_end = end
        if start < 0:
            raise DataError(f"interval {k} starts at negative time {start}")
        first = time_to_frame(start)
        if first >= n_frames:
            continue
        last = min(time_to_frame(end), n_frames - 1)
        for f in range(first, last + 1):
            lo = max(start, f * FRAME_LENGTH_S)
            hi = min(end, (f + 1) * FRAME_LENGTH_S)
            if hi > lo:
                coverage[f] += hi - lo
    return (coverage > 0.5 * FRAME_LENGTH_S + _COVERAGE_EPS).astype(np.int8)


def intervals_from_va(va: np.ndarray) -> List[Tuple[float, float]]:
    """Frame-aligned speech intervals for a binary vector (writer side)."""
    out = []
    run_start = None
    for f, v in enumerate(va):
        if v and run_start is None:
            run_start = f
        elif not v and run_start is not None:
            out.append((run_start * FRAME_LENGTH_S, f * FRAME_LENGTH_S))
            run_start = None
    if run_start is not None:
        out.append((run_start * FRAME_LENGTH_S, len(va) * FRAME_LENGTH_S))
    return out


def average_10ms_to_50ms(track: np.ndarray) -> np.ndarray:
    """Average consecutive groups of five 10 ms rows into one 50 ms row.

    A final partial group is padded by repeating its last row (warning).
    """
    track = np.asarray(track, dtype=np.float64)
    if track.ndim != 2 or track.shape[0] == 0:
        raise DataError("cannot average an empty track")
    n = track.shape[0]
    if n % 5:
        pad = 5 - n % 5
        warnings.warn(
            f"10 ms track length {n} not divisible by 5; padding final window "
            f"by repeating the last row {pad}x",
            DataWarning,
        )
        track = np.concatenate([track, np.repeat(track[-1:], pad, axis=0)])
    return track.reshape(-1, 5, track.shape[1]).mean(axis=1)


def future_window_targets(va: np.ndarray, frame: int) -> Tuple[np.ndarray, bool]:
    """Voice activity over the 60 frames after `frame`.

    targets[k] = va[frame + 1 + k]; positions past the end of the vector are
    zero-filled and the frame is flagged as a tail frame (the prediction
    window is not fully observed).
    """
    n = len(va)
    if not 0 <= frame < n:
        raise ValueError(f"frame {frame} outside vector of length {n}")
    window = np.zeros(PREDICTION_WINDOW, dtype=np.float64)
    lo = frame + 1
    hi = min(frame + 1 + PREDICTION_WINDOW, n)
    if hi > lo:
        window[: hi - lo] = va[lo:hi]
    tail = frame + PREDICTION_WINDOW > n - 1
    return window, tail


def window_targets_all_frames(va: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized future_window_targets for every frame.

    Returns (targets [n_frames, 60] float64, tail mask [n_frames] bool).
    """
    n = len(va)
    padded = np.zeros(n + PREDICTION_WINDOW, dtype=np.float64)
    padded[:n] = va
    windows = np.lib.stride_tricks.sliding_window_view(padded[1:], PREDICTION_WINDOW)
    targets = np.ascontiguousarray(windows[:n])
    tail = np.arange(n) + PREDICTION_WINDOW > n - 1
    return targets, tail


# --- readers ---


def _read_intervals(path: Path) -> List[Tuple[float, float]]:
    out = []
    for k, line in enumerate(path.read_text().splitlines()):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}: line {k + 1}: expected 'start<TAB>end'")
        try:
            out.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise DataError(f"{path}: line {k + 1}: non-numeric interval") from None
    return out


def _read_events(path: Path) -> List[Event]:
    out = []
    for k, line in enumerate(path.read_text().splitlines()):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}: line {k + 1}: expected 'end_time<TAB>id'")
        try:
            out.append((float(parts[0]), int(parts[1])))
        except ValueError:
            raise DataError(f"{path}: line {k + 1}: malformed event") from None
    return out


def _read_table(path: Path) -> Tuple[Tuple[str, ...], np.ndarray]:
    lines = path.read_text().splitlines()
    if not lines:
        raise DataError(f"{path}: empty table")
    names = tuple(lines[0].split("\t"))
    rows = np.empty((len(lines) - 1, len(names)))
    for k, line in enumerate(lines[1:]):
        parts = line.split("\t")
        if len(parts) != len(names):
            raise DataError(
                f"{path}: row {k + 1} has {len(parts)} fields, header has {len(names)}"
            )
        try:
            rows[k] = [float(p) for p in parts]
        except ValueError:
            raise DataError(f"{path}: row {k + 1}: non-numeric value") from None
    return names, rows


def _align_to_frames(track: np.ndarray, step_s: float, n_frames: int, what: str, delay_rows: int = 0):
    """Bring a raw feature table onto the session's 50 ms grid."""
    if step_s == 0.01:
        if delay_rows:
            shifted = np.zeros_like(track)
            shifted[delay_rows:] = track[: len(track) - delay_rows]
            track = shifted
        track = average_10ms_to_50ms(track)
    elif step_s != FRAME_LENGTH_S:
        raise DataError(f"{what}: unsupported step {step_s}; use 0.01 or 0.05")
    if track.shape[0] < n_frames:
        raise DataError(
            f"{what}: track has {track.shape[0]} frames after alignment, "
            f"session needs {n_frames}"
        )
    if track.shape[0] > n_frames:
        warnings.warn(
            f"{what}: track has {track.shape[0]} frames, truncating to {n_frames}",
            DataWarning,
        )
        track = track[:n_frames]
    return track


def load_session(path) -> DialogSession:
    """Load one session directory; see the module docstring for the format."""
    path = Path(path)
    manifest_path = path / "session.json"
    if not manifest_path.exists():
        raise DataError(f"{path}: missing session.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise DataError(f"{manifest_path}: invalid JSON: {err}") from None
    for key in ("format_version", "session_id", "n_frames", "acoustic_step_s"):
        if key not in manifest:
            raise DataError(f"{manifest_path}: missing key '{key}'")
    if manifest["format_version"] != FORMAT_VERSION:
        raise DataError(
            f"{manifest_path}: format_version {manifest['format_version']} "
            f"not supported (expected {FORMAT_VERSION})"
        )
    n_frames = int(manifest["n_frames"])
    acoustic_step = float(manifest["acoustic_step_s"])
    bnf_step = manifest.get("bnf_step_s")

    # applied at 10 ms resolution; 50 ms BNF tables are stored pre-delayed
    from .features import BNF_DELAY_ROWS_10MS

    names = None
    tracks = []
    for s in (0, 1):
        where = f"{path}: speaker {s}"
        va_intervals = _read_intervals(path / f"va.s{s}.txt")
        try:
            va = rasterize_intervals(va_intervals, n_frames)
        except DataError as err:
            raise DataError(f"{where}: va: {err}") from None
        word_events = _read_events(path / f"words.s{s}.txt")
        pos_events = _read_events(path / f"pos.s{s}.txt")
        col_names, acoustic = _read_table(path / f"acoustic.s{s}.tsv")
        if names is None:
            names = col_names
        elif col_names != names:
            raise DataError(f"{where}: acoustic column names differ between speakers")
        acoustic = _align_to_frames(acoustic, acoustic_step, n_frames, f"{where}: acoustic")
        bnf = None
        if bnf_step is not None:
            bnf_names, bnf = _read_table(path / f"bnf.s{s}.tsv")
            if len(bnf_names) != BNF_DIM:
                raise DataError(f"{where}: bnf has {len(bnf_names)} columns, expected {BNF_DIM}")
            delay = BNF_DELAY_ROWS_10MS if float(bnf_step) == 0.01 else 0
            bnf = _align_to_frames(
                bnf, float(bnf_step), n_frames, f"{where}: bnf", delay_rows=delay
            )
        tracks.append(
            SpeakerTrack(
                va=va,
                word_events=tuple(word_events),
                pos_events=tuple(pos_events),
                acoustic=acoustic,
                bnf=bnf,
            )
        )
    try:
        return DialogSession(
            session_id=str(manifest["session_id"]),
            n_frames=n_frames,
            acoustic_names=names,
            speakers=(tracks[0], tracks[1]),
        )
    except DataError as err:
        raise DataError(f"{path}: {err}") from None


def save_session(session: DialogSession, corpus_root) -> Path:
    """Write a session directory under `corpus_root` (50 ms cadence)."""
    root = Path(corpus_root) / session.session_id
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "session_id": session.session_id,
        "n_frames": session.n_frames,
        "acoustic_step_s": FRAME_LENGTH_S,
    }
    if session.has_bnf:
        manifest["bnf_step_s"] = FRAME_LENGTH_S
    (root / "session.json").write_text(json.dumps(manifest, indent=1) + "\n")
    for s, track in enumerate(session.speakers):
        lines = [f"{repr(a)}\t{repr(b)}" for a, b in intervals_from_va(track.va)]
        (root / f"va.s{s}.txt").write_text("\n".join(lines) + ("\n" if lines else ""))
        for what, events in (("words", track.word_events), ("pos", track.pos_events)):
            lines = [f"{repr(t)}\t{i}" for t, i in events]
            (root / f"{what}.s{s}.txt").write_text("\n".join(lines) + ("\n" if lines else ""))
        _write_table(root / f"acoustic.s{s}.tsv", session.acoustic_names, track.acoustic)
        if track.bnf is not None:
            _write_table(
                root / f"bnf.s{s}.tsv",
                tuple(f"bnf_{k}" for k in range(BNF_DIM)),
                track.bnf,
            )
    return root


def _write_table(path: Path, names: Sequence[str], rows: np.ndarray):
    out = ["\t".join(names)]
    for row in rows:
        out.append("\t".join(repr(float(v)) for v in row))
    path.write_text("\n".join(out) + "\n")


# --- corpus level ---


def save_corpus(
    sessions: Sequence[DialogSession],
    root,
    word_vocab: Optional[Dict[int, str]] = None,
    pos_vocab: Optional[Dict[int, str]] = None,
) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    ids = [s.session_id for s in sessions]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate session ids in corpus")
    (root / "corpus.json").write_text(
        json.dumps({"format_version": FORMAT_VERSION, "sessions": ids}, indent=1) + "\n"
    )
    for vocab, name in ((word_vocab, "words"), (pos_vocab, "pos")):
        if vocab is not None:
            lines = [f"{i}\t{s}" for i, s in sorted(vocab.items())]
            (root / f"{name}.vocab.tsv").write_text("\n".join(lines) + "\n")
    for session in sessions:
        save_session(session, root)
    return root


def corpus_session_ids(root) -> List[str]:
    root = Path(root)
    index = root / "corpus.json"
    if not index.exists():
        raise DataError(f"{root}: missing corpus.json")
    data = json.loads(index.read_text())
    if data.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{index}: unsupported format_version {data.get('format_version')}")
    ids = list(data.get("sessions", []))
    if len(set(ids)) != len(ids):
        raise DataError(f"{index}: duplicate session ids")
    return ids


def load_sessions(root, ids: Sequence[str]) -> Dict[str, DialogSession]:
    root = Path(root)
    available = set(corpus_session_ids(root))
    out = {}
    for sid in ids:
        if sid not in available:
            raise DataError(f"session '{sid}' not listed in {root / 'corpus.json'}")
        out[sid] = load_session(root / sid)
    return out
