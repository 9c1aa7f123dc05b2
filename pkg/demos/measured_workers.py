"""
Real worker threads
===================

The same balancing loop with forces computed by one thread per subdomain.
Slow workers burn extra CPU and loaded workers sleep, so the timings are
real clock readings instead of cost-model values. The particle trajectory
is unchanged.
"""

import numpy as np

from mpd3 import run
from mpd3.oracle import audit_trace
from mpd3.scenario import parse_scenario

scenario = parse_scenario("""
[scenario]
name = small_bar
n_steps = 40
dimensionality = centers_move_x_only

[domain]
bounds = 0 80 0 16

[particles]
init = crystal_bar
columns = 64
rows = 12

[workers]
count = 4
grid = 4 1
speeds = 1.0 1.0 2.0 2.0
""")

virtual = run(scenario)
measured = run(scenario, execution="measured")

print("final energy, virtual :", virtual.trace[-1].energy)
print("final energy, measured:", measured.trace[-1].energy)
t_md = np.array([row.t_md for row in measured.trace[-10:]]).mean(axis=0)
print("measured t_md per worker (ms):", np.round(1e3 * t_md, 3))
print("counts:", measured.trace[-1].n_particles)
# clocks are noisy, so allow a millisecond of slack
print(audit_trace(measured.trace, wait_slack=1e-3))
