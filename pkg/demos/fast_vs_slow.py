"""Two robots, same task, different speeds.

Both start in patch 1 with no trash to find, so their efficiency decays as
they travel and the bias eventually pushes them to the other patch.  The red
robot has K_x = 0.15, the blue one K_x = 0.11; the faster robot covers ground
sooner, runs its efficiency down sooner, and leaves first.

    python3 demos/fast_vs_slow.py [n_seeds]
"""
import os
import sys
from pathlib import Path

from coupled_nod.config import build_scenario, load_shipped
from coupled_nod.engine import first_switch, run, write_summary
from coupled_nod.svg import trajectory_svg

n = int(sys.argv[1]) if len(sys.argv) > 1 else 5
out = Path(os.environ.get("COUPLED_NOD_OUT", "demos_out")) / "fast_vs_slow"
out.mkdir(parents=True, exist_ok=True)

wins = 0
for seed in range(n):
    scenario = build_scenario(load_shipped("fig5", [f"scenario.seed={seed}"]))
    log = run(scenario)
    red, blue = first_switch(log)
    wins += red is not None and (blue is None or red < blue)
    print(f"seed {seed}: red leaves at t = {red:.1f}, blue at "
          f"{'never' if blue is None else f't = {blue:.1f}'}")
    if seed == 0:
        write_summary(log, out / "summary.json")
        trajectory_svg(log, scenario.patches, out / "trajectory.svg")
print(f"\nRed first in {wins}/{n} runs.  Seed 0 picture: {out / 'trajectory.svg'}")
