#!/usr/bin/env python3
"""Train the acoustic-plan model on the frozen corpus: grid (one point),
ten-seed final evaluation, results CSV and best checkpoint under runs/.

Run scripts/make_corpora.py first. Pass extra CLI flags through, e.g.
--jobs 4 or --set schedule.max_epochs=20.
"""

import sys
from pathlib import Path

from turntaking.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(
        main(
            ["train", "--config", str(ROOT / "configs/accept_experiment.json"),
             "--out", str(ROOT / "runs/acoustic")] + sys.argv[1:]
        )
    )
