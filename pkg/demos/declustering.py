"""A crowd dissolves on its own.

Eight robots start in patch 1, five of them packed in a plus shape.  A
barrier filter keeps them apart; the robot in the middle is boxed in and its
effective speed gain drops almost to zero for the first moments.  As the
efficiency of the empty patch decays, robots leave for patch 2 and the
crowding of patch 1 falls.

    python3 demos/declustering.py [seed]
"""
import sys

import numpy as np

from coupled_nod.config import build_scenario, load_shipped
from coupled_nod.engine import crowding_metric, first_switch, run

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
scenario = build_scenario(load_shipped("declustering", [f"scenario.seed={seed}"]))
log = run(scenario)

print("crowding of patch 1 (mean inverse pairwise distance):")
for t in (0, 25, 50, 75, 100, 150):
    inside = int(np.sum(log.patch[np.argmin(np.abs(log.t - t))] == 1))
    print(f"  t = {t:3d}: {crowding_metric(log, 1, t):5.2f} with {inside} robots inside")

early = log.effective_Kx[log.t <= 1.0].mean(axis=0)
print("\nrobot       K_x over first second   first switch")
for label, k, t in zip(scenario.labels, early, first_switch(log)):
    print(f"  {label:9s} {k:8.3f}               {'-' if t is None else f'{t:.1f}'}")
