"""Regenerate every figure sweep as CSV into ./sweeps.

Each file shares one column layout, so any plotting tool can read them.
"""

from pathlib import Path

from v2iflow.experiments import EXPERIMENTS, SweepSpec, run_sweep

out = Path("sweeps")
out.mkdir(exist_ok=True)
for name, info in EXPERIMENTS.items():
    spec = SweepSpec(name, trials=100_000, seed=2024, workers=4)
    path = out / f"{name}.csv"
    path.write_text(run_sweep(spec))
    rows = path.read_text().count("\n") - 1
    print(f"{name:16} {rows:4d} rows -> {path}{'  (with simulation)' if info['mc'] else ''}")
