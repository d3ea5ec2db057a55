"""Rewrite the CLI golden files in tests/golden/ after an intended output change."""

import subprocess
import sys
from pathlib import Path

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"

RUNS = {
    "weights_golden.json": ["weights", "--input", "small.csv", "--id-col", "id", "--outcome-col", "Y"],
    "ate_golden.json": ["ate", "--input", "small.csv", "--id-col", "id", "--outcome-col", "Y",
                        "--bootstrap", "20", "--seed", "3", "--threads", "1"],
}

if __name__ == "__main__":
    for name, args in RUNS.items():
        out = subprocess.run([sys.executable, "-m", "mbalance.cli"] + args, cwd=GOLDEN,
                             check=True, capture_output=True, text=True).stdout
        (GOLDEN / name).write_text(out)
        print("wrote", GOLDEN / name)
