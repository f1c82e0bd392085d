"""Adapting to a change in the environment.

Two identical robots forage in patch 1.  At t = 20 trash is dropped into
patch 2 and the red robot is told to lower its attention gain u from 1.3 to
1.05.  A lower u shrinks its bistable band, so the red robot gives up on
patch 1 at a smaller loss of efficiency and usually heads over first.  The
ordering is not guaranteed: near u = 1.05 the red robot's opinion dynamics
slow down, and in some runs the blue robot still gets there first.

    python3 demos/environment_change.py [n_seeds]
"""
import sys

from coupled_nod.config import build_scenario, load_shipped
from coupled_nod.engine import first_switch, run

n = int(sys.argv[1]) if len(sys.argv) > 1 else 5
wins = 0
for seed in range(n):
    log = run(build_scenario(load_shipped("fig4", [f"scenario.seed={seed}"])))
    red, blue = first_switch(log)
    ok = red is not None and red > 20 and (blue is None or red < blue)
    wins += ok
    fmt = lambda t: "never" if t is None else f"{t:.1f}"  # noqa: E731
    print(f"seed {seed}: red {fmt(red)}, blue {fmt(blue)}  {'red first' if ok else 'blue first'}")
print(f"\nRed first in {wins}/{n} runs.")
