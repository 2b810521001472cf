import os
import subprocess
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def run_cli():
    """Run the CLI in a subprocess with colour disabled."""

    def run(args, cwd=FIXTURES):
        env = dict(os.environ, PAPYRODATE_NO_COLOR="1")
        return subprocess.run(
            [sys.executable, "-m", "papyrodate", *map(str, args)],
            cwd=cwd,
            capture_output=True,
            text=True,
            env=env,
        )

    return run
