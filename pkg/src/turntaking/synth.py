"""Synthetic dyadic dialog generator with controllable turn-taking cues.

Sessions alternate the floor between two speakers. A turn is a log-normal
amount of speech split into inter-pausal units by short internal pauses
(these become HOLD decisions); floor switches happen across a short gap or,
with some probability, in overlap (these become SHIFT decisions). Listeners
occasionally produce short backchannel bursts inside long turns, which feed
the ONSET SHORT class and overlap HOLD decisions.

Every acoustic column is unit-variance white noise. The learnable signal,
scaled by `kappa` in [0, 1], lives in exactly two places:

- two designated columns (stand-ins for loudness and F0) drift downward over
  a speaker's final 10 speech frames when the turn ends in a floor switch;
- a reserved "turn-final" word id and POS id are emitted near the end of a
  switching turn with probability kappa.

With kappa = 0 both cues vanish and no input column carries information
about upcoming switches.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .features import CANONICAL_ACOUSTIC_COLUMNS
from .seeds import derive_seed
from .session import (
    POS_VOCAB_SIZE,
    WORD_VOCAB_SIZE,
    DialogSession,
    SpeakerTrack,
)

N_SYNTH_ACOUSTIC = 21
CUE_COLUMNS = ("loudness", "f0_semitone")  # the two informative columns
DRIFT_FRAMES = 10
DRIFT_DEPTH = 3.0  # standard deviations at the deepest point
TURN_FINAL_WORD_ID = 1
TURN_FINAL_POS_ID = 1
BACKGROUND_WORD_EVERY = 6  # frames between ordinary word/POS events


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    n_sessions: int
    session_length_frames: int = 600
    turn_log_mean: float = math.log(50.0)  # log-normal speech frames per turn
    turn_log_sigma: float = 0.8
    min_turn_frames: int = 6
    ipu_mean_frames: float = 40.0  # mean unit length when splitting a turn
    min_ipu_frames: int = 10
    intra_pause_mean_frames: float = 5.0  # pause inside a turn (HOLD)
    gap_mean_frames: float = 4.0  # floor-switch gap (SHIFT), ~200 ms
    overlap_prob: float = 0.25  # switch happens in overlap instead of a gap
    overlap_mean_frames: float = 4.0  # overlap duration, clipped to [2, 8]
    backchannel_prob: float = 0.7  # per eligible turn
    backchannel_max_frames: int = 6
    kappa: float = 1.0

    def __post_init__(self):
        if self.n_sessions < 1:
            raise ConfigError(f"n_sessions must be >= 1, got {self.n_sessions}")
        if self.session_length_frames < 100:
            raise ConfigError(
                f"session_length_frames must be >= 100, got {self.session_length_frames}"
            )
        positive = {
            "turn_log_sigma": self.turn_log_sigma,
            "min_turn_frames": self.min_turn_frames,
            "ipu_mean_frames": self.ipu_mean_frames,
            "min_ipu_frames": self.min_ipu_frames,
            "intra_pause_mean_frames": self.intra_pause_mean_frames,
            "gap_mean_frames": self.gap_mean_frames,
            "overlap_mean_frames": self.overlap_mean_frames,
            "backchannel_max_frames": self.backchannel_max_frames,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        for name, value in (
            ("overlap_prob", self.overlap_prob),
            ("backchannel_prob", self.backchannel_prob),
            ("kappa", self.kappa),
        ):
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.backchannel_max_frames > 20:
            raise ConfigError("backchannels must be at most 20 frames")


def config_from_dict(raw: dict) -> SynthConfig:
    """Parse the documented synth schema; unknown keys are rejected."""
    allowed = {f.name for f in dataclasses.fields(SynthConfig)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"synth config: unknown keys {sorted(unknown)}")
    for key in ("seed", "n_sessions"):
        if key not in raw:
            raise ConfigError(f"synth config: missing required key '{key}'")
    return SynthConfig(**raw)


@dataclass(frozen=True)
class _Turn:
    speaker: int
    ipus: Tuple[Tuple[int, int], ...]  # inclusive [start, end] frame spans
    ends_in_shift: bool  # the floor audibly passes inside the session

    @property
    def start(self) -> int:
        return self.ipus[0][0]

    @property
    def end(self) -> int:
        return self.ipus[-1][1]


def _geometric(rng: np.random.Generator, mean: float) -> int:
    """Geometric sample on {1, 2, ...} with the given mean."""
    return int(rng.geometric(1.0 / max(mean, 1.0)))


def _plan_turns(config: SynthConfig, rng: np.random.Generator) -> List[_Turn]:
    """Lay out alternating-floor turns until past the session end."""
    n = config.session_length_frames
    t = 2 + int(rng.integers(0, 10))
    speaker = int(rng.integers(0, 2))
    raw: List[Tuple[int, List[Tuple[int, int]], Optional[int]]] = []
    while t < n + 60:
        speech = max(config.min_turn_frames, round(rng.lognormal(config.turn_log_mean, config.turn_log_sigma)))
        ipus: List[Tuple[int, int]] = []
        pos = t
        left = speech
        while left > 0:
            unit = min(left, config.min_ipu_frames + _geometric(rng, config.ipu_mean_frames - config.min_ipu_frames))
            ipus.append((pos, pos + unit - 1))
            pos += unit
            left -= unit
            if left > 0:
                pos += _geometric(rng, config.intra_pause_mean_frames)
        end = ipus[-1][1]
        final_len = ipus[-1][1] - ipus[-1][0] + 1
        overlap = None
        if rng.random() < config.overlap_prob and final_len >= 40:
            overlap = int(np.clip(_geometric(rng, config.overlap_mean_frames), 2, 8))
        # Draw the gap unconditionally to keep the stream position sequence
        # independent of whether the overlap branch was taken.
        gap = _geometric(rng, config.gap_mean_frames)
        raw.append((speaker, ipus, overlap))
        t = end - overlap + 1 if overlap is not None else end + 1 + gap
        speaker = 1 - speaker
    turns = []
    for k, (spk, ipus, _overlap) in enumerate(raw):
        next_start = raw[k + 1][1][0][0] if k + 1 < len(raw) else None
        ends_in_shift = (
            next_start is not None and ipus[-1][1] + 1 < n and next_start < n
        )
        turns.append(_Turn(speaker=spk, ipus=tuple(ipus), ends_in_shift=ends_in_shift))
    return turns


def _place_backchannels(
    config: SynthConfig, rng: np.random.Generator, turns: List[_Turn]
) -> List[Tuple[int, int, int]]:
    """Short listener bursts inside long turns: (speaker, start, end).

    Placement keeps the burst clear of the listener's own turns (>= 30
    frames of prior silence, >= 100 frames before they next speak) and at
    least 30 frames inside a single unit of the holder's speech, so the
    burst predictably yields ONSET SHORT and overlap HOLD instances.
    """
    bursts = []
    for k, turn in enumerate(turns):
        other = 1 - turn.speaker
        prev_end = -1000
        for j in range(k - 1, -1, -1):
            if turns[j].speaker == other:
                prev_end = turns[j].end
                break
        next_start = None
        for j in range(k + 1, len(turns)):
            if turns[j].speaker == other:
                next_start = turns[j].start
                break
        if next_start is None:
            continue
        length = 2 + int(rng.integers(0, config.backchannel_max_frames - 1))
        ipu = max(turn.ipus, key=lambda span: span[1] - span[0])
        lo = max(ipu[0] + 30, prev_end + 31)
        hi = min(ipu[1] - 1 - length, next_start - 100 - length)
        if hi < lo or rng.random() >= config.backchannel_prob:
            continue
        start = int(rng.integers(lo, hi + 1))
        bursts.append((other, start, start + length - 1))
    return bursts


def _render_session(config: SynthConfig, session_id: str, rng: np.random.Generator) -> DialogSession:
    n = config.session_length_frames
    turns = _plan_turns(config, rng)
    bursts = _place_backchannels(config, rng, turns)

    va = [np.zeros(n, dtype=np.int8), np.zeros(n, dtype=np.int8)]
    for turn in turns:
        for s, e in turn.ipus:
            if s >= n:
                break
            va[turn.speaker][max(s, 0) : min(e + 1, n)] = 1
    for speaker, s, e in bursts:
        if s < n:
            va[speaker][s : min(e + 1, n)] = 1

    acoustic = [rng.standard_normal((n, N_SYNTH_ACOUSTIC)) for _ in (0, 1)]
    cue_idx = [CANONICAL_ACOUSTIC_COLUMNS.index(name) for name in CUE_COLUMNS]
    for turn in turns:
        if not turn.ends_in_shift:
            continue
        s, e = turn.ipus[-1]
        lo = max(s, e - DRIFT_FRAMES + 1)
        depth = np.arange(1, e - lo + 2, dtype=np.float64) / (e - lo + 1)
        for f, d in zip(range(lo, e + 1), depth):
            if 0 <= f < n:
                for c in cue_idx:
                    acoustic[turn.speaker][f, c] -= config.kappa * DRIFT_DEPTH * d

    # Events: pick landing frames first (event at frame f lands at f + 2 once
    # the 100 ms processing delay is applied), cue events before background
    # ones, so no two events ever land on the same frame.
    word_events = [[], []]
    pos_events = [[], []]
    for speaker in (0, 1):
        planned = {}  # landing frame -> (word id, pos id)
        for turn in turns:
            if turn.speaker != speaker:
                continue
            if turn.ends_in_shift and rng.random() < config.kappa:
                f = turn.end - 2
                if turn.start <= f <= n - 3:
                    planned[f + 2] = (TURN_FINAL_WORD_ID, TURN_FINAL_POS_ID)
            for s, e in turn.ipus:
                for f in range(s + BACKGROUND_WORD_EVERY - 1, e + 1, BACKGROUND_WORD_EVERY):
                    if f > n - 3 or f + 2 in planned:
                        continue
                    planned[f + 2] = (
                        int(rng.integers(2, WORD_VOCAB_SIZE)),
                        int(rng.integers(2, POS_VOCAB_SIZE)),
                    )
        for landing in sorted(planned):
            f = landing - 2
            time = f * 0.05 + 0.025
            wid, pid = planned[landing]
            word_events[speaker].append((time, wid))
            pos_events[speaker].append((time, pid))

    return DialogSession(
        session_id=session_id,
        n_frames=n,
        acoustic_names=CANONICAL_ACOUSTIC_COLUMNS,
        speakers=(
            SpeakerTrack(
                va=va[0],
                word_events=tuple(word_events[0]),
                pos_events=tuple(pos_events[0]),
                acoustic=acoustic[0],
            ),
            SpeakerTrack(
                va=va[1],
                word_events=tuple(word_events[1]),
                pos_events=tuple(pos_events[1]),
                acoustic=acoustic[1],
            ),
        ),
    )


def generate(config: SynthConfig) -> List[DialogSession]:
    """Deterministic list of sessions; each session has its own derived seed."""
    sessions = []
    for i in range(config.n_sessions):
        rng = np.random.default_rng(derive_seed(config.seed, f"session-{i:05d}"))
        sessions.append(_render_session(config, f"synth-{i:05d}", rng))
    return sessions
