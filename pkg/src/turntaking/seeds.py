"""Deterministic seed derivation.

A single master seed fans out to per-run / per-session seeds through a
splitmix64 chain over a sequence of labels, so every run is reproducible
from (master seed, label path) and independent runs get decorrelated
streams.
"""

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *labels) -> int:
    """Derive a child seed from a master seed and a label path.

    Labels may be strings or integers; they are folded into the state
    byte by byte so distinct paths give distinct streams.
    """
    state = splitmix64(master & _MASK)
    for label in labels:
        for b in str(label).encode("utf-8"):
            state = splitmix64(state ^ b)
    return state
