"""Observed convergence orders of the elliptic solvers and the Darcy limit of Brinkman flow."""
import numpy as np

from chblab.grid import Grid2D
from chblab.verification import constant_divergence_error, convergence_study, darcy_limit_study, lift_check

print("grid refinement (unit square, n x n cells)")
print(f"{'study':>20} {'n':>4} {'error':>11} {'order':>7}")
for r in convergence_study((16, 32, 64)):
    order = "" if np.isnan(r["order"]) else f"{r['order']:.3f}"
    print(f"{r['study']:>20} {r['n']:4d} {r['error']:11.3e} {order:>7}")

ev, ep = constant_divergence_error(64)
print(f"\nconstant-divergence Brinkman pair: relative error v {ev:.1e}, p {ep:.1e}")

print("\nBrinkman with vanishing viscosity against Darcy")
for r in darcy_limit_study((1e-1, 1e-2, 1e-3)):
    print(f"  viscosity {r['viscosity']:6.0e}  |v_B - v_D| = {r['velocity_gap']:.4e}")

g = Grid2D(40, 40)
f = np.random.default_rng(0).normal(size=g.shape)
c = lift_check(g, f)
print(f"\ndivergence lift of white noise: div error {c['div_error']:.1e}, flux error {c['flux_error']:.1e}, "
      f"H1/L2 ratio {c['h1_ratio']:.3f}")
