"""Where does an agent switch tasks?  Bifurcation view of the switching threshold.

An agent holding an opinion z > 0 keeps it until the bias b falls below a fold
value b*; past the fold the opinionated equilibrium disappears and z jumps to
the other side.  This demo traces the equilibrium curve in b, prints the folds,
then shows how the thresholds move with the attention gain u and the motion
gain K_x.

    python3 demos/thresholds.py
"""
from coupled_nod import bifurcation as bif
from coupled_nod.model import AgentParams

p = AgentParams(d=1, u=1.1, b=0.0, K_z=2, K_x=3, k=10, sigma=0.1)
rho = 0.5

print("Neutral equilibrium at u = 1.1:", bif.neutral_stability(p))
print("Criticality of the pitchfork:", bif.classify_criticality(p, rho))

branch = bif.b_branch(p, rho, (-0.6, 0.6))
print(f"\nTraced {len(branch)} equilibria; folds:")
for f in branch.folds:
    print(f"  b* = {f.param:+.4f} at z* = {f.z:+.4f}")
lo, hi = bif.saddle_pair(branch)
print(f"Switching window (bistable band): {lo.param:+.4f} < b < {hi.param:+.4f}")

print("\nAttention widens the band (thresholds move outward as u grows):")
for row in bif.threshold_table(p, rho, "u", [1.05, 1.1, 1.2, 1.3], (-0.6, 0.6)):
    print(f"  u = {row['param_value']:.2f}: b2* = {row['b2_star']:+.4f}")

print("\nAnd for these parameters, so does a larger motion gain K_x:")
for row in bif.threshold_table(p, rho, "K_x", [1, 2, 3, 4], (-0.6, 0.6)):
    print(f"  K_x = {row['param_value']:.0f}: b2* = {row['b2_star']:+.4f}")

s = bif.threshold_sensitivity(bif.BifurcationProblem(p, "b", (-0.6, 0.6), rho), "u", fold=lo)
print(f"\nd b*/du at the z > 0 fold: analytic {s.analytic:+.5f}, "
      f"finite difference {s.finite_difference:+.5f}")
