"""Find a steady tumour on a small box by damped Picard iteration and audit it."""
from pathlib import Path

from chblab.config import parse_config
from chblab.stationary import solve_from_config

here = Path(__file__).parent
cfg = parse_config(here / "configs" / "stationary.toml")
res = solve_from_config(cfg)

print(f"converged: {res.converged} after {res.iterations} outer iterations (final omega {res.omega:g})")
for h in res.history[:: max(1, len(res.history) // 8)]:
    print(f"  it {h['iteration']:3d}  update {h['update']:.2e}  r_phi {h['r_phi']:.2e}  r_mu {h['r_mu']:.2e}")

print("\nresiduals")
for k, v in res.residuals.items():
    print(f"  {k:8s} {v:.3e}")

d = res.diagnostics
print("\nsteady state")
print(f"  mean phi        {d['phi_mean']:.5f}")
print(f"  sigma range     [{d['sigma_min']:.4f}, {d['sigma_max']:.4f}]")
print(f"  stabilizer F    {res.F_value:g}")
print(f"  flow energy     {d['brinkman_energy_lhs']:.6e} vs work {d['brinkman_energy_rhs']:.6e}")
