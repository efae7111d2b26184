#!/usr/bin/env python3
"""Render the frozen synthetic corpora into data/."""

import sys
from pathlib import Path

from turntaking.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    rc = main(
        ["synth", "--config", str(ROOT / "configs/accept_synth.json"),
         "--out", str(ROOT / "data/corpus")]
    )
    rc |= main(
        ["synth", "--config", str(ROOT / "configs/accept_sfs_synth.json"),
         "--out", str(ROOT / "data/sfs_corpus")]
    )
    sys.exit(rc)
