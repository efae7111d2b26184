"""The shared 50 ms frame grid.

Every annotation, feature track and prediction in the package lives on this
grid. A timestamp is mapped to the frame that contains it; a time exactly on
a boundary belongs to the later frame.
"""

FRAME_LENGTH_S = 0.05

# Width of the future prediction window, in frames (3 s).
PREDICTION_WINDOW = 60


def time_to_frame(t_s: float) -> int:
    """Map a timestamp in seconds to its frame index (floor rule)."""
    if t_s < 0:
        raise ValueError(f"negative timestamp {t_s}")
    # Guard against float noise just below a boundary: 0.3 / 0.05 = 5.999...
    # would floor to 5 although 0.3 s belongs to frame 6.
    scaled = t_s / FRAME_LENGTH_S
    rounded = round(scaled)
    if abs(scaled - rounded) < 1e-9:
        return int(rounded)
    return int(scaled)


def frame_to_time(frame: int) -> float:
    """Start time of a frame in seconds."""
    return frame * FRAME_LENGTH_S
