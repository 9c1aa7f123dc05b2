"""
Settling a Voronoi tessellation
===============================

Start from equal-count rectangles over two disks of particles and alternate
center-of-mass placement with nearest-center assignment until no particle
changes owner.
"""

import numpy as np

from mpd3.geometry import assign_by_midplanes, rectangular_split, settle_initial_tessellation
from mpd3.md import disk_lattice
from mpd3.oracle import nearest_center_oracle

pos = np.vstack((disk_lattice((40, 40), 30, 1.12), disk_lattice((95, 40), 18, 1.12)))
print(f"{len(pos)} particles")

# eight rectangles, equal particle counts
decomp = rectangular_split(pos, (4, 2), (0, 120, 0, 80))
print("rectangle counts:", decomp.counts())

settled, sweeps = settle_initial_tessellation(decomp, pos)
print(f"fixpoint after {sweeps} sweeps")
print("settled counts:  ", settled.counts())

# the fast tournament and the brute-force oracle agree
assert np.array_equal(assign_by_midplanes(settled, pos), nearest_center_oracle(settled.centers, pos))

for k, c in enumerate(settled.centers):
    print(f"MP {k}: center ({c[0]:7.2f}, {c[1]:6.2f})")
