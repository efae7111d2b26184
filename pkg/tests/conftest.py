import numpy as np

from turntaking.features import CANONICAL_ACOUSTIC_COLUMNS
from turntaking.session import BNF_DIM, DialogSession, SpeakerTrack


def make_track(rng, n_frames, n_acoustic, va=None, with_bnf=False, word_events=(), pos_events=()):
    if va is None:
        va = rng.integers(0, 2, size=n_frames).astype(np.int8)
    return SpeakerTrack(
        va=np.asarray(va, dtype=np.int8),
        word_events=tuple(word_events),
        pos_events=tuple(pos_events),
        acoustic=rng.normal(size=(n_frames, n_acoustic)),
        bnf=rng.normal(size=(n_frames, BNF_DIM)) if with_bnf else None,
    )


def make_session(
    session_id="sess-0",
    n_frames=20,
    seed=0,
    n_acoustic=3,
    with_bnf=False,
    va0=None,
    va1=None,
    word_events0=(),
    pos_events0=(),
    word_events1=(),
    pos_events1=(),
):
    rng = np.random.default_rng(seed)
    names = CANONICAL_ACOUSTIC_COLUMNS[:n_acoustic]
    return DialogSession(
        session_id=session_id,
        n_frames=n_frames,
        acoustic_names=names,
        speakers=(
            make_track(rng, n_frames, n_acoustic, va0, with_bnf, word_events0, pos_events0),
            make_track(rng, n_frames, n_acoustic, va1, with_bnf, word_events1, pos_events1),
        ),
    )
