"""
A small Monte Carlo table
=========================

Repeat generate, fit and estimate over replicates and print table rows.
The replicate count is kept low so this finishes in about a minute;
pass a larger number on the command line for tighter estimates, e.g.
``python tutorials/03_monte_carlo.py 1000``.
"""

import os
import sys

from mbalance import simlab

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 50
threads = os.cpu_count() or 1

for sid, methods in [("A", ["Unad", "MB"]), ("C", ["Unad", "MB", "MB2"]), ("D", ["Unad", "MB"])]:
    spec = simlab.scenario(sid)
    for m in methods:
        summary = simlab.run_monte_carlo(spec, m, reps, seed=7, threads=threads)
        print(summary.row())

# Every replicate r draws from its own Philox stream keyed by (seed, r), so
# the rows are identical for any thread count.
