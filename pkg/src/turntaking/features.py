"""Per-frame model input assembly.

A feature plan selects streams per speaker: named acoustic columns
(z-scored per file), word and POS token-id streams (made available 100 ms
after each word ends), 64-dim phonetic bottleneck features (delayed 60 ms),
and binary voice activity. The assembled matrix concatenates the target
speaker's block first, then the interlocutor's; within a block the order is
acoustic columns (canonical order), word id, pos id, bnf, va. Token ids
stay integer-valued columns; the embedding layer expands them, so a plan's
declared input width counts 64 per enabled token stream.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DataError, DataWarning
from .frames import time_to_frame
from .session import BNF_DIM, POS_VOCAB_SIZE, WORD_VOCAB_SIZE, DialogSession

EMBED_DIM = 64

# Availability delays: linguistic annotations become visible 100 ms after
# the word ends; bottleneck features lag 60 ms (six 10 ms rows, applied
# before 10 ms -> 50 ms averaging).
LINGUISTIC_DELAY_S = 0.100
BNF_DELAY_ROWS_10MS = 6

# Fixed name set and order for the low-level acoustic descriptors. Order is
# frozen here so feature-selection traces and assembled matrices are stable.
CANONICAL_ACOUSTIC_COLUMNS = (
    "loudness",
    "alpha_ratio",
    "hammarberg_index",
    "spectral_slope_0_500",
    "spectral_slope_500_1500",
    "spectral_flux",
    "mfcc1",
    "mfcc2",
    "mfcc3",
    "mfcc4",
    "f0_semitone",
    "jitter_local",
    "shimmer_db",
    "hnr_db",
    "h1_h2",
    "h1_a3",
    "f1_freq",
    "f1_bandwidth",
    "f1_amp",
    "f2_freq",
    "f3_freq",
)

_CANONICAL_RANK = {name: k for k, name in enumerate(CANONICAL_ACOUSTIC_COLUMNS)}


@dataclass(frozen=True)
class FeaturePlan:
    """Which streams feed the model. Acoustic columns are stored in
    canonical order regardless of the order they were given in."""

    use_acoustic: Tuple[str, ...] = ()
    use_words: bool = False
    use_pos: bool = False
    use_bnf: bool = False
    use_va: bool = False

    def __post_init__(self):
        cols = tuple(self.use_acoustic)
        unknown = [c for c in cols if c not in _CANONICAL_RANK]
        if unknown:
            raise ConfigError(f"unknown acoustic columns: {unknown}")
        if len(set(cols)) != len(cols):
            raise ConfigError("duplicate acoustic columns in plan")
        object.__setattr__(
            self, "use_acoustic", tuple(sorted(cols, key=_CANONICAL_RANK.get))
        )
        if not (cols or self.use_words or self.use_pos or self.use_bnf or self.use_va):
            raise ConfigError("feature plan enables no streams")

    @property
    def block_width(self) -> int:
        """Raw (pre-embedding) columns contributed by one speaker."""
        return (
            len(self.use_acoustic)
            + int(self.use_words)
            + int(self.use_pos)
            + BNF_DIM * int(self.use_bnf)
            + int(self.use_va)
        )

    @property
    def input_width(self) -> int:
        """Model input width D: token-id columns count as embedding width."""
        per_speaker = (
            len(self.use_acoustic)
            + EMBED_DIM * int(self.use_words)
            + EMBED_DIM * int(self.use_pos)
            + EMBED_DIM * int(self.use_bnf)
            + int(self.use_va)
        )
        return 2 * per_speaker

    def layout(self):
        """InputLayout over the assembled raw matrix (both speaker blocks)."""
        from .network import InputLayout

        token_columns = []
        for block in (0, 1):
            base = block * self.block_width + len(self.use_acoustic)
            if self.use_words:
                token_columns.append((base, "word"))
                base += 1
            if self.use_pos:
                token_columns.append((base, "pos"))
        return InputLayout(
            n_columns=2 * self.block_width, token_columns=tuple(token_columns)
        )

    def vocab_sizes(self) -> dict:
        out = {}
        if self.use_words:
            out["word"] = WORD_VOCAB_SIZE
        if self.use_pos:
            out["pos"] = POS_VOCAB_SIZE
        return out

    def column_names(self) -> Tuple[str, ...]:
        """Raw column names, target block then interlocutor block."""
        block = list(self.use_acoustic)
        if self.use_words:
            block.append("word_id")
        if self.use_pos:
            block.append("pos_id")
        if self.use_bnf:
            block.extend(f"bnf_{k}" for k in range(BNF_DIM))
        if self.use_va:
            block.append("va")
        return tuple(f"{role}:{name}" for role in ("target", "other") for name in block)

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "acoustic": list(self.use_acoustic),
                "words": self.use_words,
                "pos": self.use_pos,
                "bnf": self.use_bnf,
                "va": self.use_va,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def zscore_per_file(track: np.ndarray, names: Optional[Sequence[str]] = None) -> np.ndarray:
    """Column-wise z-scores over the whole file (population std).

    A zero-variance column becomes all zeros, with a warning.
    """
    track = np.asarray(track, dtype=np.float64)
    if track.ndim != 2 or track.shape[0] < 2:
        raise DataError("z-scoring needs a matrix with at least 2 frames")
    mean = track.mean(axis=0)
    std = track.std(axis=0)  # population std
    flat = std == 0.0
    if flat.any():
        which = (
            [names[k] for k in np.flatnonzero(flat)]
            if names is not None
            else list(np.flatnonzero(flat))
        )
        warnings.warn(f"zero-variance columns set to zero: {which}", DataWarning)
    out = np.zeros_like(track)
    keep = ~flat
    out[:, keep] = (track[:, keep] - mean[keep]) / std[keep]
    return out


def linguistic_frame_stream(events, n_frames: int) -> np.ndarray:
    """Token events -> per-frame id stream with the 100 ms availability delay.

    stream[f] = id of the event whose (end_time + 100 ms) falls in frame f;
    0 everywhere else. Collisions keep the later event; events delayed past
    the end of the file are dropped. Both cases warn.
    """
    stream = np.zeros(n_frames, dtype=np.int64)
    for end_s, token_id in events:
        f = time_to_frame(end_s + LINGUISTIC_DELAY_S)
        if f >= n_frames:
            warnings.warn(
                f"event id {token_id} at {end_s} s resolves past the end of the "
                f"file ({n_frames} frames); dropped",
                DataWarning,
            )
            continue
        if stream[f] != 0:
            warnings.warn(
                f"two events resolve to frame {f}; keeping the later (id {token_id})",
                DataWarning,
            )
        stream[f] = token_id
    return stream


def delay_bnf(track: np.ndarray) -> np.ndarray:
    """Shift a 10 ms-cadence track down by 60 ms (6 rows), zero-filling."""
    track = np.asarray(track, dtype=np.float64)
    out = np.zeros_like(track)
    if len(track) > BNF_DELAY_ROWS_10MS:
        out[BNF_DELAY_ROWS_10MS:] = track[: len(track) - BNF_DELAY_ROWS_10MS]
    return out


def _speaker_block(session, s, plan, normalize):
    track = session.speakers[s]
    parts = []
    if plan.use_acoustic:
        name_to_idx = {n: k for k, n in enumerate(session.acoustic_names)}
        missing = [c for c in plan.use_acoustic if c not in name_to_idx]
        if missing:
            raise ConfigError(
                f"session {session.session_id} lacks acoustic columns {missing}"
            )
        cols = [name_to_idx[c] for c in plan.use_acoustic]
        # C-contiguous so reductions are layout-independent and reproducible
        acoustic = np.ascontiguousarray(track.acoustic[:, cols])
        if normalize:
            acoustic = zscore_per_file(acoustic, plan.use_acoustic)
        parts.append(np.asarray(acoustic, dtype=np.float64))
    if plan.use_words:
        parts.append(
            linguistic_frame_stream(track.word_events, session.n_frames)[:, None].astype(
                np.float64
            )
        )
    if plan.use_pos:
        parts.append(
            linguistic_frame_stream(track.pos_events, session.n_frames)[:, None].astype(
                np.float64
            )
        )
    if plan.use_bnf:
        if track.bnf is None:
            raise ConfigError(
                f"plan enables bnf but session {session.session_id} has no bnf track"
            )
        parts.append(np.asarray(track.bnf, dtype=np.float64))
    if plan.use_va:
        parts.append(track.va.astype(np.float64)[:, None])
    return np.concatenate(parts, axis=1)


def assemble(
    session: DialogSession, plan: FeaturePlan, normalize: bool = True
) -> Tuple[np.ndarray, np.ndarray]:
    """Build the two model input matrices (target = speaker 0, target =
    speaker 1). Each is [n_frames, 2 * block_width]; swapping the target
    swaps the two speaker blocks and nothing else."""
    blocks = [_speaker_block(session, s, plan, normalize) for s in (0, 1)]
    x_target0 = np.concatenate([blocks[0], blocks[1]], axis=1)
    x_target1 = np.concatenate([blocks[1], blocks[0]], axis=1)
    return x_target0, x_target1
