#!/usr/bin/env python3
"""Sequential forward selection over the 21 acoustic columns on the small
frozen corpus. Run scripts/make_corpora.py first."""

import sys
from pathlib import Path

from turntaking.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(
        main(
            ["sfs", "--config", str(ROOT / "configs/accept_sfs.json"),
             "--out", str(ROOT / "runs/sfs")] + sys.argv[1:]
        )
    )
