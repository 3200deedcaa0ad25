"""Shrink the regularization width and watch the overshoot beyond [-1, 1] disappear.

The obstacle case may leave [-1, 1] by an amount that vanishes with delta;
the log case never reaches +-1.  Takes about a minute.
"""
from pathlib import Path

from chblab.config import parse_config
from chblab.evolution import delta_continuation

here = Path(__file__).parent

for kind in ("obstacle", "log"):
    cfg = parse_config(here / "configs" / "continuation.toml", [f"potential.kind='{kind}'"])
    deltas = cfg["continuation.deltas"] if kind == "obstacle" else cfg["continuation.log_deltas"]
    rows = delta_continuation(cfg, deltas)
    print(f"\n{kind} potential")
    print(f"{'delta':>7} {'overshoot':>11} {'ratio':>8} {'max|phi|':>9} {'mean range':>20}")
    for r in rows:
        print(f"{r['delta']:7.3g} {r['overshoot_integral']:11.3e} {r['ratio']:8.4f} {r['max_abs_phi']:9.5f} "
              f"   [{r['mean_min']:.4f}, {r['mean_max']:.4f}]")
