"""
Balancing a crystal bar over unequal workers
============================================

Four workers share a resting crystal bar; two are 1.5x faster than the
others. Subdomain centers drift along x until the slow workers hold fewer
particles and nobody waits long at the barrier.
"""

import numpy as np

from mpd3 import run, run_baseline_static, shipped

scenario = shipped("crystal_bar").replace(n_steps=200)
adaptive = run(scenario)
frozen = run_baseline_static(scenario)

elapsed = np.array([row.t_elapsed.max() for row in adaptive.trace])
baseline = np.array([row.t_elapsed.max() for row in frozen.trace])

for step in (0, 10, 25, 50, 100, 199):
    row = adaptive.trace[step]
    print(f"step {step:3d}  counts {row.n_particles}  imbalance {row.imbalance:.3f}  "
          f"elapsed {elapsed[step]:.3f}")

print(f"mean elapsed/step: frozen {baseline.mean():.3f}, adaptive {elapsed.mean():.3f}")
print(f"last 50 steps vs step 0: {1 - elapsed[-50:].mean() / elapsed[0]:.1%} faster")
