"""End-to-end acceptance checks; each test records one PASS/FAIL line with its runtime."""
import time

import numpy as np
import pytest

from chblab.config import parse_config
from chblab.constants import log_sign_c2, source_lower_bound
from chblab.evolution import delta_continuation, run
from chblab.flow import BrinkmanProblem, ViscosityProfile, solve_brinkman
from chblab.grid import FaceField, Grid2D
from chblab.nutrient import NutrientProblem, default_consumption, solve_nutrient
from chblab.potentials import PotentialSpec, admissible_width, beta, count_violations, inequality_margins
from chblab.sources import build_example_model, gamma_stationary
from chblab.stationary import StationaryConfig, solve_from_config, solve_stationary
from chblab.verification import (
    constant_divergence_error,
    brinkman_manufactured_error,
    darcy_limit_study,
    lift_check,
    nutrient_slab_error,
    observed_orders,
)

pytestmark = pytest.mark.slow

# brute-force lower-bound constant for the log-case example sources (sweep r in [-4, 4], s in [0, 3])
LOWER_BOUND_C = 0.3671088581986271

# fixed growth scenario for the width continuation: 32 x 32 cells on [0, 8]^2, seed of radius 2
CONTINUATION = ["grid.nx=32", "grid.ny=32", "grid.lx=8.0", "grid.ly=8.0", "init.radius=2.0", "source.P=0.05",
                "source.A=0.02", "time.steps=320"]


def test_potential_inequalities(acceptance):
    t0 = time.perf_counter()
    r = np.linspace(-5, 5, 10_000)
    theta, theta_c = 1.0, 2.0
    c2 = log_sign_c2(theta, theta_c)
    total, checked = 0, 0
    for d in (0.2, 0.1, 0.05, 0.01, 0.001):
        for kind in ("obstacle", "log"):
            spec = PotentialSpec(kind, d, theta, theta_c)
            if kind == "obstacle" and not admissible_width(spec):
                continue
            v = count_violations(inequality_margins(spec, r, c2))
            total += sum(v.values())
            checked += len(v)
    acceptance(1, "potential inequalities", total == 0 and checked == 33,
               f"{total} violations over {checked} (inequality, width) pairs, sign constant {c2:g}",
               time.perf_counter() - t0, 5)


def test_source_lower_bound(acceptance):
    t0 = time.perf_counter()
    model = build_example_model(kind="log")
    R, S = np.meshgrid(np.linspace(-3, 3, 6001), np.linspace(0, 2, 201), indexing="ij")
    gam = gamma_stationary(model, R, S)
    bad = 0
    for d in (0.05, 0.01):
        b = beta(PotentialSpec("log", d), R)
        bad += int(np.sum(gam * b < -LOWER_BOUND_C * (1 + np.abs(S) + np.abs(R))))
    elapsed = time.perf_counter() - t0
    assert source_lower_bound(model) == pytest.approx(LOWER_BOUND_C, rel=1e-12)
    acceptance(2, "source lower bound", bad == 0, f"{bad} violations with C = {LOWER_BOUND_C:.6g}", elapsed, 5)


def test_nutrient(acceptance):
    t0 = time.perf_counter()
    g = Grid2D(64, 64)
    rng = np.random.default_rng(2024)
    ones = solve_nutrient(NutrientProblem(g, rng.uniform(-1, 1, g.shape), h=lambda r: 0.0 * r, K=1.3))
    flat = float(np.max(np.abs(ones - 1.0)))
    orders = observed_orders([nutrient_slab_error(n) for n in (32, 64, 128)])
    worst = 0.0
    gm = Grid2D(32, 32, 2.0, 2.0)
    for _ in range(100):
        phi = rng.uniform(-1.5, 1.5, gm.shape)
        sigma = solve_nutrient(NutrientProblem(gm, phi, default_consumption(rng.uniform(0, 10)), rng.uniform(0.05, 20)))
        worst = max(worst, -float(sigma.min()), float(sigma.max()) - 1.0)
    ok = flat < 1e-10 and min(orders) >= 1.9 and worst <= 0.0
    acceptance(3, "nutrient", ok, f"|sigma - 1| = {flat:.1e}, orders {orders[0]:.3f}/{orders[1]:.3f}, "
               f"largest bound excursion {worst:.1e}", time.perf_counter() - t0, 30)


def test_brinkman(acceptance):
    t0 = time.perf_counter()
    g = Grid2D(32, 32)
    z = np.zeros(g.shape)
    v, p, _ = solve_brinkman(BrinkmanProblem(g, z, FaceField.zeros(g), z, 1.0, ViscosityProfile(1.0, 1.0, 0.5)))
    zero = max(v.max_abs(), float(np.max(np.abs(p))))
    ev, ep = constant_divergence_error(64)
    orders = observed_orders([brinkman_manufactured_error(n)[0] for n in (16, 32, 64)])
    ok = zero <= 1e-10 and ev < 1e-8 and ep < 1e-8 and min(orders) >= 1.5
    acceptance(4, "Brinkman", ok, f"zero data {zero:.1e}, constant-divergence pair v {ev:.1e} p {ep:.1e}, "
               f"manufactured orders {orders[0]:.3f}/{orders[1]:.3f}", time.perf_counter() - t0, 120)


def test_divergence_lift(acceptance):
    t0 = time.perf_counter()
    g = Grid2D(48, 40, 1.2, 1.0)
    rng = np.random.default_rng(7)
    div_err, flux_err, ratio = 0.0, 0.0, 0.0
    for _ in range(20):
        f = rng.normal(size=g.shape) + rng.normal()
        c = lift_check(g, f)
        div_err = max(div_err, c["div_error"] / max(1.0, float(np.max(np.abs(f)))))
        flux_err = max(flux_err, c["flux_error"])
        ratio = max(ratio, c["h1_ratio"])
    ok = div_err < 1e-9 and flux_err < 1e-8
    acceptance(5, "divergence lift", ok, f"div error {div_err:.1e}, flux error {flux_err:.1e}, "
               f"largest H1/L2 ratio {ratio:.3g}", time.perf_counter() - t0, 30)


def test_energy_stability(acceptance):
    t0 = time.perf_counter()
    increases, steps = 0, 0
    drops = []
    for seed in range(10):
        kind = "obstacle" if seed % 2 == 0 else "log"
        cfg = parse_config(overrides=["source.enabled=false", "nutrient.chi=0.0", "flow.mode='none'",
                                      "init.kind='random'", f"init.amplitude={0.5 + 0.04 * seed}",
                                      f"potential.kind='{kind}'", "time.steps=200", "output.energy_terms=false"])
        cfg.seed = seed
        res = run(cfg, keep_snapshots=False)
        e_prev = res.initial_energy
        for row in res.ledger:
            increases += int(row["E"] - e_prev > row["energy_allowance"])
            e_prev = row["E"]
            steps += 1
        drops.append(res.initial_energy - e_prev)
    acceptance(6, "energy stability", increases == 0 and steps == 2000,
               f"{increases} increases over {steps} steps on 64x64, smallest total decrease {min(drops):.4g}",
               time.perf_counter() - t0, 120)


def test_mass_identity(acceptance):
    t0 = time.perf_counter()
    defects = []
    for k in range(3):
        dt = 0.0125 / 2**k
        cfg = parse_config(overrides=["grid.nx=32", "grid.ny=32", "grid.lx=8.0", "grid.ly=8.0", "init.radius=2.0",
                                      f"time.dt={dt}", f"time.steps={40 * 2**k}", "output.energy_terms=false"])
        res = run(cfg, keep_snapshots=False)
        defects.append(max(r["mass_defect"] for r in res.ledger))
    ratios = [a / b for a, b in zip(defects, defects[1:])]
    ok = all(1.6 <= x <= 2.4 for x in ratios)
    acceptance(7, "mass identity", ok, "largest per-step defects " + ", ".join(f"{d:.3e}" for d in defects)
               + ", halving ratios " + ", ".join(f"{x:.3f}" for x in ratios), time.perf_counter() - t0, 180)


@pytest.fixture(scope="module")
def continuation():
    t0 = time.perf_counter()
    obstacle = delta_continuation(parse_config(overrides=CONTINUATION, command="delta-continuation"),
                                  [0.1, 0.03, 0.01])
    log = delta_continuation(parse_config(overrides=CONTINUATION + ["potential.kind='log'", "potential.delta=0.01"],
                                          command="delta-continuation"), [0.1, 0.03, 0.01])
    return obstacle, log, time.perf_counter() - t0


def test_delta_continuation(acceptance, continuation):
    obstacle, log, elapsed = continuation
    ov = [r["overshoot_integral"] for r in obstacle]
    ratios = [r["ratio"] for r in obstacle]
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else float("inf")
    top = max(r["max_abs_phi"] for r in log)
    ok = all(a > b for a, b in zip(ov, ov[1:])) and spread <= 10 and top < 1
    acceptance(8, "width continuation", ok, "overshoot " + ", ".join(f"{x:.3e}" for x in ov)
               + ", overshoot/delta " + ", ".join(f"{x:.3g}" for x in ratios)
               + f" (spread {spread:.2f}), log max |phi| {top:.4f}", elapsed, 600)


def test_mean_confinement(acceptance, continuation):
    obstacle, log, elapsed = continuation
    rows = obstacle + log
    lo, hi = min(r["mean_min"] for r in rows), max(r["mean_max"] for r in rows)
    acceptance(9, "mean confinement", -1 < lo and hi < 1,
               f"mean of phi in [{lo:.4f}, {hi:.4f}] over {sum(r['steps'] for r in rows)} recorded steps", elapsed, 600)


def test_darcy_limit(acceptance):
    t0 = time.perf_counter()
    gaps = [r["velocity_gap"] for r in darcy_limit_study((1e-1, 1e-2, 1e-3))]
    acceptance(10, "Darcy limit", gaps[0] > gaps[1] > gaps[2], "velocity gaps " + ", ".join(f"{x:.4g}" for x in gaps),
               time.perf_counter() - t0, 120)


def test_stationary(acceptance):
    t0 = time.perf_counter()
    base = ["grid.nx=48", "grid.ny=48", "grid.lx=2.0", "grid.ly=2.0", "init.kind='constant'", "init.mean=0.5",
            "potential.kind='obstacle'", "potential.delta=0.01"]
    trivial_cfg = parse_config(overrides=base + ["source.enabled=false"], command="stationary")
    trivial = solve_stationary(StationaryConfig.from_run(trivial_cfg), np.full(trivial_cfg.grid().shape, 0.3))
    cfg = parse_config(overrides=base, command="stationary")
    res = solve_from_config(cfg)
    r, d = res.residuals, res.diagnostics
    main = max(r["r_phi"], r["r_mu"], r["r_sigma"], r["r_flow"])
    area = cfg.grid().area
    ok = (trivial.converged and max(trivial.residuals.values()) < 1e-7 and res.converged and main < 1e-7
          and r["r_mean"] <= 1e-6 * area and d["sigma_min"] >= 0 and d["sigma_max"] <= 1 and res.F_value == 0.0
          and -1 < d["phi_mean"] < 1)
    acceptance(11, "stationary", ok, f"trivial residual {max(trivial.residuals.values()):.1e}; growth scenario "
               f"{res.iterations} iterations, residual {main:.1e}, mean identity {r['r_mean']:.1e}, "
               f"sigma in [{d['sigma_min']:.3f}, {d['sigma_max']:.3f}], F {res.F_value:g}, mean {d['phi_mean']:.4f}",
               time.perf_counter() - t0, 600)
