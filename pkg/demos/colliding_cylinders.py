"""
Colliding cylinders
===================

Two crystalline disks fly into each other while half of the workers are
busy with other users' programs for the first 150 steps. The run writes a
trace, a final snapshot and a density map into ``demo_output/``.
"""

from pathlib import Path

import numpy as np

from mpd3 import run, shipped
from mpd3.oracle import audit_trace
from mpd3.traces import render_density, write_snapshot, write_trace

out = Path("demo_output")
scenario = shipped("two_cylinders").replace(n_steps=300)
result = run(scenario)
print(f"settled in {result.settle_iterations} sweeps")

# loaded workers (even ids) hand particles to their neighbors, then take
# them back once the load is gone
counts = np.array([row.n_particles for row in result.trace])
for step in (0, 100, 149, 200, 299):
    print(f"step {step:3d}  loaded {counts[step, ::2].mean():7.1f}  free {counts[step, 1::2].mean():7.1f}")

energy = [row.energy for row in result.trace]
print(f"total energy {energy[0]:.3f} -> {energy[-1]:.3f}")
print(audit_trace(result.trace))

write_trace(result.trace, out / "cylinders_trace.csv")
write_snapshot(result.state, out / "cylinders_final.csv")
render_density(result.state, out / "cylinders_density.ppm")
print(f"wrote {out}/")
