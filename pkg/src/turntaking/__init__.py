"""Continuous turn-taking prediction for dyadic spoken dialog.

At every 50 ms frame a recurrent model predicts the target speaker's voice
activity over the next three seconds; downstream evaluators turn those
predictions into turn-taking decisions (hold vs shift at pauses and
overlaps, short vs long at utterance onsets) and score them with weighted
F-measures.
"""

from .errors import ConfigError, DataError, TrainingDiverged, TurntakingError
from .frames import FRAME_LENGTH_S, PREDICTION_WINDOW, frame_to_time, time_to_frame

__all__ = [
    "ConfigError",
    "DataError",
    "TrainingDiverged",
    "TurntakingError",
    "FRAME_LENGTH_S",
    "PREDICTION_WINDOW",
    "frame_to_time",
    "time_to_frame",
]

__version__ = "0.1.0"
