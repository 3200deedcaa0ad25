"""Grow a tumour seed under the default sources and watch mass, energy and nutrient.

Run from the repository root:  python demos/tumour_growth.py
"""
from pathlib import Path

import numpy as np

from chblab.config import parse_config
from chblab.evolution import holder_constant, run

here = Path(__file__).parent
cfg = parse_config(here / "configs" / "growth.toml", ["output.vtk=false"])
print(f"grid {cfg['grid.nx']}x{cfg['grid.ny']} on [0, {cfg['grid.lx']}]^2, dt = {cfg.dt():g}, "
      f"{cfg['time.steps']} steps, potential {cfg['potential.kind']} (delta = {cfg['potential.delta']})")

res = run(cfg, keep_snapshots=True)

print(f"\n{'step':>5} {'t':>7} {'E':>11} {'mean phi':>9} {'max|phi|':>9} {'sigma min':>9} {'mass defect':>12}")
for row in res.ledger[::25]:
    print(f"{row['step']:5d} {row['t']:7.3f} {row['E']:11.5f} {row['phi_mean']:9.5f} {row['phi_max_abs']:9.5f} "
          f"{row['sigma_min']:9.5f} {row['mass_defect']:12.3e}")

# tumour area: cells where phi > 0
final = res.final
area0 = np.sum(res.snapshots[0].phi > 0) * final.grid.cell_area
area1 = np.sum(final.phi > 0) * final.grid.cell_area
print(f"\ntumour area {area0:.3f} -> {area1:.3f}")
print(f"peak speed {final.v.max_abs():.3e}, overshoot max(|phi| - 1)_+ = {final.overshoot():.2e}")
print(f"fitted constant C in |m(t) - m(s)| <= C |t - s|^(1/2): {holder_constant(res.ledger):.4f}")
