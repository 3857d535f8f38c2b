"""Shared fixtures: a small real workspace produced by the wind pipeline.

The trainer only ever touches workspaces through their files, so the
fixtures drive the neighbouring ``sarwind`` command line as a black box
rather than importing it.
"""

import subprocess
import sys

import pytest


def run_pipeline(*args):
    """Invoke the wind pipeline CLI; fail loudly with its output."""
    cmd = [sys.executable, "-m", "sarwind.cli", *map(str, args)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"{' '.join(cmd)} failed "
                           f"(rc={proc.returncode}):\n{proc.stdout}\n{proc.stderr}")
    return proc.stdout


@pytest.fixture(scope="session")
def mini_ws(tmp_path_factory):
    """Eight-scene workspace, complete through evaluation (~15 s to build)."""
    root = tmp_path_factory.mktemp("mini")
    cfg = root / "mini.cfg"
    cfg.write_text("rain_cells_lambda=1.2\n")
    ws = root / "ws"
    run_pipeline("run-all", "--workspace", ws, "--seed", "3",
                 "--scenes", "8", "--config", cfg)
    return ws
