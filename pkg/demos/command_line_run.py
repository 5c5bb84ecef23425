"""
Running an experiment from a config file
========================================

The ``qcp`` command trains every (algorithm, seed) pair listed in a flat
``key = value`` file, writes one metrics table per run plus a summary, and
``qcp compare`` reduces the tables to reward-parity and state-reduction
ratios. The same entry points are callable from Python.
"""

import tempfile
from pathlib import Path

from qcp.cli import main

out = Path(tempfile.mkdtemp())
config = out / "door.txt"
config.write_text(f"""
scenario.name = door
experiment.algorithms = qcp, vanilla, td
experiment.seeds = 0..1
experiment.output = {out}
train.I = 4          # iterations
train.T = 3          # executed timesteps per iteration
search.budget = 32   # tree iterations per search
""")

assert main(["run", "--config", str(config), "--workers", "2"]) == 0
print((out / "summary.tsv").read_text())
main(["compare", *map(str, sorted(out.glob("metrics_*.tsv")))])
