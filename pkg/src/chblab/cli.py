"""``chb-lab``: run an experiment family from a TOML file and write its artifacts.

Every run writes ``manifest.json`` (config echo, versions, file list),
``summary.txt`` (one PASS/FAIL line per property check) and command-specific
CSV/VTK files.  Exit codes: 0 success, 2 configuration error, 3 solver
failure, 4 property violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import COMMANDS, ConfigError, RunConfig, parse_config
from .constants import log_sign_c2
from .evolution import delta_continuation, run, worker_count
from .io import write_csv, write_fields_csv, write_vtk
from .linsolve import SolverError
from .potentials import PotentialSpec, admissible_width, beta, beta_hat, count_violations, inequality_margins, psi
from .stationary import solve_from_config
from .verification import convergence_study, darcy_limit_study

__all__ = ["main", "dispatch", "build_parser", "Outcome"]

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4

log = logging.getLogger("chblab")


@dataclass
class Outcome:
    checks: list = field(default_factory=list)  # (name, ok, detail)
    files: list = field(default_factory=list)  # paths written by the command
    info: dict = field(default_factory=dict)

    def check(self, name: str, ok: bool, detail: str = ""):
        self.checks.append((name, bool(ok), detail))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)


# --- commands -----------------------------------------------------------------------


def _simulate(cfg: RunConfig, out: Path, o: Outcome):
    res = run(cfg, out, keep_snapshots=False)
    o.files.extend(res.files)
    o.files.append(write_fields_csv(out / "final_fields.csv", res.final))
    led = res.ledger
    o.check("sigma_in_unit_interval", all(r["sigma_min"] >= -1e-12 and r["sigma_max"] <= 1 + 1e-12 for r in led),
            f"min {min(r['sigma_min'] for r in led):.6g}, max {max(r['sigma_max'] for r in led):.6g}" if led else "")
    o.check("mean_in_open_interval", all(-1 < r["phi_mean"] < 1 for r in led),
            f"range [{min(r['phi_mean'] for r in led):.6g}, {max(r['phi_mean'] for r in led):.6g}]" if led else "")
    if cfg.potential().kind == "log":
        top = max((r["phi_max_abs"] for r in led), default=0.0)
        o.check("log_interior", top < 1.0, f"max |phi| = {top:.6g}")
    src = cfg.sections["source"]["enabled"]
    if not src and float(cfg["nutrient.chi"]) == 0.0:
        E = [res.initial_energy] + [r["E"] for r in led]
        slack = [r["energy_allowance"] + 1e-13 * abs(e) for r, e in zip(led, E)]
        worst = max((E[i + 1] - E[i] - slack[i] for i in range(len(led))), default=0.0)
        o.check("energy_nonincreasing", worst <= 0.0, f"largest increase beyond solver allowance {worst:.3e}")
    if led:
        o.info["max_mass_defect"] = max(r["mass_defect"] for r in led)
        o.info["final_energy"] = led[-1]["E"]


def _stationary(cfg: RunConfig, out: Path, o: Outcome):
    res = solve_from_config(cfg)
    tol = float(cfg["stationary.tol"])
    g = res.state.grid
    o.files.append(write_csv(out / "stationary_history.csv", res.history))
    o.files.append(write_fields_csv(out / "stationary_fields.csv", res.state))
    o.files.append(write_vtk(out / "stationary.vtk", res.state))
    o.info.update(iterations=res.iterations, omega=res.omega, **res.residuals, **res.diagnostics)
    if not res.converged:
        raise SolverError(f"stationary iteration did not converge in {res.iterations} outer steps",
                          max(res.residuals["r_phi"], res.residuals["r_mu"]), "residual")
    d = res.diagnostics
    o.check("residuals_below_tol", all(res.residuals[k] < tol for k in ("r_phi", "r_mu", "r_sigma", "r_flow")),
            ", ".join(f"{k}={v:.3e}" for k, v in res.residuals.items()))
    o.check("mean_identity", res.residuals["r_mean"] <= 10 * tol * g.area, f"|int gamma + v.grad phi| = "
            f"{res.residuals['r_mean']:.3e}")
    o.check("sigma_in_unit_interval", d["sigma_min"] >= -1e-12 and d["sigma_max"] <= 1 + 1e-12,
            f"[{d['sigma_min']:.6g}, {d['sigma_max']:.6g}]")
    o.check("stabilizer_inactive", res.F_value == 0.0, f"F = {res.F_value:.3e}")
    o.check("mean_in_open_interval", -1 < d["phi_mean"] < 1, f"mean {d['phi_mean']:.6g}")


def _potential_check(cfg: RunConfig, out: Path, o: Outcome):
    ch = cfg.sections["check"]
    pot = cfg.sections["potential"]
    theta, theta_c = float(pot["theta"]), float(pot["theta_c"])
    r = np.linspace(-float(ch["rmax"]), float(ch["rmax"]), int(ch["points"]))
    c2 = log_sign_c2(theta, theta_c)
    o.info["c2"] = c2
    names = ["penalty_lower", "penalty_upper", "slope", "sign", "overshoot_penalty"]
    rows = []
    totals = {}
    for kind in ("obstacle", "log"):
        for d in ch["deltas"]:
            spec = PotentialSpec(kind, float(d), theta, theta_c)
            if kind == "obstacle" and not admissible_width(spec):
                continue
            margins = inequality_margins(spec, r, c2)
            for k, v in count_violations(margins).items():
                totals[(kind, k)] = totals.get((kind, k), 0) + v
            b, bh, ps = beta(spec, r), beta_hat(spec, r), psi(spec, r)
            for i in range(r.size):
                row = {"kind": kind, "r": r[i], "delta": spec.delta, "beta": b[i], "beta_hat": bh[i], "psi": ps[i]}
                for n in names:
                    row[f"margin_{n}"] = margins[n][0][i] if n in margins else ""
                rows.append(row)
    o.files.append(write_csv(out / "potential_check.csv", rows,
                             ["kind", "r", "delta", "beta", "beta_hat", "psi"] + [f"margin_{n}" for n in names]))
    for (kind, name), v in sorted(totals.items()):
        o.check(f"{kind}_{name}", v == 0, f"{v} violations")


def _convergence(cfg: RunConfig, out: Path, o: Outcome):
    rows = convergence_study(cfg["convergence.levels"], workers=worker_count())
    o.files.append(write_csv(out / "convergence.csv", rows))
    need = {"nutrient_slab": 1.9, "brinkman_velocity": 1.5, "brinkman_pressure": 1.5, "darcy_pressure": 1.9}
    for study, threshold in need.items():
        orders = [r["order"] for r in rows if r["study"] == study and np.isfinite(r["order"])]
        o.check(f"{study}_order", bool(orders) and min(orders) >= threshold,
                f"orders {', '.join(f'{x:.3f}' for x in orders)} (need >= {threshold})")


def _darcy_limit(cfg: RunConfig, out: Path, o: Outcome):
    rows = darcy_limit_study(cfg["darcy.deltas"], n=cfg.grid().nx, nu=float(cfg["flow.nu"]),
                             chi=float(cfg["nutrient.chi"]))
    o.files.append(write_csv(out / "darcy_limit.csv", rows))
    gaps = [r["velocity_gap"] for r in rows]
    o.check("velocity_gap_decreasing", all(a > b for a, b in zip(gaps, gaps[1:])),
            ", ".join(f"{x:.4g}" for x in gaps))


def _delta_continuation(cfg: RunConfig, out: Path, o: Outcome):
    kind = cfg.potential().kind
    deltas = cfg["continuation.log_deltas"] if kind == "log" else cfg["continuation.deltas"]
    rows = delta_continuation(cfg, deltas)
    o.files.append(write_csv(out / "continuation.csv", rows))
    if kind == "obstacle":
        ov = [r["overshoot_integral"] for r in rows]
        o.check("overshoot_decreasing", all(a > b for a, b in zip(ov, ov[1:])), ", ".join(f"{x:.4g}" for x in ov))
        ratios = [r["ratio"] for r in rows]
        positive = [x for x in ratios if x > 0]
        spread = max(positive) / min(positive) if positive else 1.0
        o.check("ratio_bounded", spread <= 10.0, f"overshoot/delta {', '.join(f'{x:.4g}' for x in ratios)}; "
                f"spread {spread:.3g}")
    else:
        top = max(r["max_abs_phi"] for r in rows)
        o.check("log_interior", top < 1.0, f"max |phi| = {top:.6g}")
    o.check("mean_in_open_interval", all(-1 < r["mean_min"] and r["mean_max"] < 1 for r in rows),
            f"means in [{min(r['mean_min'] for r in rows):.6g}, {max(r['mean_max'] for r in rows):.6g}]")


_COMMANDS = {
    "simulate": _simulate,
    "stationary": _stationary,
    "potential-check": _potential_check,
    "convergence": _convergence,
    "darcy-limit": _darcy_limit,
    "delta-continuation": _delta_continuation,
}


# --- orchestration ----------------------------------------------------------------------


def _manifest(cfg: RunConfig, out: Path, outcome: Outcome, status: int, error: str | None) -> Path:
    # everything in the output directory, so nothing written before a failure goes unlisted
    files = sorted(str(f.relative_to(out)) for f in out.rglob("*") if f.is_file() and f.name != "manifest.json")
    data = {
        "command": cfg.command,
        "status": status,
        "error": error,
        "config": cfg.to_dict(),
        "versions": {"chblab": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "checks": [{"name": n, "passed": ok, "detail": d} for n, ok, d in outcome.checks],
        "info": {k: (float(v) if isinstance(v, (np.floating, float)) else v) for k, v in outcome.info.items()},
        "files": files,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(data, indent=2, default=str))
    return path


def _summary(cfg: RunConfig, out: Path, outcome: Outcome, error: str | None) -> Path:
    lines = [f"command: {cfg.command}"]
    lines += [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in outcome.checks]
    if error:
        lines.append(f"ERROR {error}")
    path = out / "summary.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def dispatch(cfg: RunConfig) -> tuple[int, Outcome]:
    """Run ``cfg.command`` and write its artifacts; return ``(exit status, outcome)``."""
    out = Path(cfg.out or f"chb_lab_{cfg.command}")
    out.mkdir(parents=True, exist_ok=True)
    outcome = Outcome()
    error = None
    try:
        _COMMANDS[cfg.command](cfg, out, outcome)
        status = EXIT_OK if outcome.passed else EXIT_PROPERTY
    except SolverError as exc:
        status, error = EXIT_SOLVER, str(exc)
    _summary(cfg, out, outcome, error)
    _manifest(cfg, out, outcome, status, error)
    return status, outcome


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chb-lab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS, help="experiment family")
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one setting, e.g. --set grid.nx=32 (repeatable)")
    p.add_argument("--out", type=Path, help="output directory (default chb_lab_<command>)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config, args.overrides, command=args.command, out=args.out)
    except ConfigError as exc:
        print(f"chb-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status, outcome = dispatch(cfg)
    for name, ok, detail in outcome.checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if status == EXIT_SOLVER:
        print(f"chb-lab: solver failure, see {Path(cfg.out or f'chb_lab_{cfg.command}') / 'summary.txt'}",
              file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
