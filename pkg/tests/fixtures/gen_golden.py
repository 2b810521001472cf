#!/usr/bin/env python3
"""Regenerate the committed golden outputs by running the CLI.

Run from this directory after the fixtures exist.  The acceptance suite
reruns the same commands into a temporary directory and requires
byte-identical files, so regenerate these only when an output format
change is intended.
"""

import shutil
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).parent
GOLDEN = HERE / "golden"

COMMANDS = {
    "eval": [
        "eval",
        "--pred", "pred.csv",
        "--truth", "truth.csv",
        "--alpha-min", "0", "--alpha-max", "1.2", "--alpha-step", "0.2",
    ],
    "agree": [
        "agree",
        "--responses", "responses.csv",
        "--truth", "truth_experts.csv",
    ],
    "experiment_baseline": ["experiment", "--config", "config_baseline.json"],
    "experiment_transfer": ["experiment", "--config", "config_transfer.json"],
    "experiment_union": ["experiment", "--config", "config_union.json"],
    "compare": [
        "compare",
        "--pred", "pred_experts.csv",
        "--responses", "responses.csv",
        "--truth", "truth_experts.csv",
    ],
}


def main() -> None:
    if GOLDEN.exists():
        shutil.rmtree(GOLDEN)
    for name, args in COMMANDS.items():
        out = GOLDEN / name
        result = subprocess.run(
            [sys.executable, "-m", "papyrodate", *args, "--out", str(out)],
            cwd=HERE,
            capture_output=True,
            text=True,
        )
        if result.returncode != 0:
            raise SystemExit(f"{name} failed:\n{result.stderr}")
        files = sorted(p.name for p in out.iterdir())
        print(f"{name}: {', '.join(files)}")


if __name__ == "__main__":
    main()
