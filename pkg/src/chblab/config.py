"""Run configuration: TOML in, validated nested settings out."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .flow import ViscosityProfile
from .grid import Grid2D
from .nutrient import default_consumption
from .potentials import PotentialSpec
from .sources import SourceModel, build_example_model, delta0, zero_model

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "COMMANDS", "parse_config", "ModelParams"]

COMMANDS = ("simulate", "stationary", "potential-check", "convergence", "darcy-limit", "delta-continuation")

DEFAULTS = {
    "grid": {"nx": 64, "ny": 64, "lx": 16.0, "ly": 16.0},
    "potential": {"kind": "obstacle", "delta": 0.01, "theta": 1.0, "theta_c": 2.0},
    "source": {"enabled": True, "P": 1.0, "A": 0.5, "alpha": 1.0, "rho_S": 2.0, "r0": 1.5},
    "nutrient": {"K": 1.0, "h0": 1.0, "chi": 0.0},
    "flow": {"mode": "brinkman", "nu": 1.0, "eta0": 1.0, "eta1": 1.0, "lambda0": 0.0, "profile": "constant"},
    "time": {"dt": None, "steps": 100, "newton_tol": 1e-10, "newton_max": 40, "cfl": True},
    "init": {"kind": "seed", "radius": None, "width": 1.0, "center": None, "mean": 0.0, "amplitude": 0.05},
    "output": {"cadence": 10, "vtk": True, "csv": True, "energy_terms": True},
    "stationary": {"CF": None, "omega": 0.5, "tol": 1e-8, "max_outer": 300, "strategy": "picard",
                   "pseudotime_steps": 200},
    "continuation": {"deltas": [0.1, 0.03, 0.01], "log_deltas": [0.1, 0.03, 0.01]},
    "convergence": {"levels": [16, 32, 64]},
    "darcy": {"deltas": [0.1, 0.01, 0.001]},
    "check": {"points": 10000, "rmax": 5.0, "deltas": [0.2, 0.1, 0.05, 0.01, 0.001]},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class ModelParams:
    nu: float = 1.0
    K: float = 1.0
    chi: float = 0.0
    viscosity: ViscosityProfile = field(default_factory=ViscosityProfile)
    h0: float = 1.0
    flow_mode: str = "brinkman"

    def consumption(self):
        return default_consumption(self.h0)


@dataclass
class RunConfig:
    command: str = "simulate"
    sections: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    out: str | None = None
    seed: int = 0

    def __getitem__(self, key: str):
        sec, _, name = key.partition(".")
        return self.sections[sec][name]

    def set(self, key: str, value):
        sec, _, name = key.partition(".")
        if sec not in self.sections or not name:
            raise ConfigError(f"unknown configuration key {key!r}")
        if name not in self.sections[sec]:
            raise ConfigError(f"unknown configuration key {key!r}")
        self.sections[sec][name] = value

    # --- builders -----------------------------------------------------------

    def grid(self) -> Grid2D:
        g = self.sections["grid"]
        return Grid2D(int(g["nx"]), int(g["ny"]), float(g["lx"]), float(g["ly"]))

    def potential(self) -> PotentialSpec:
        p = self.sections["potential"]
        return PotentialSpec(p["kind"], float(p["delta"]), float(p["theta"]), float(p["theta_c"]))

    def model(self) -> SourceModel:
        s = self.sections["source"]
        if not s["enabled"]:
            return zero_model()
        return build_example_model(float(s["P"]), float(s["A"]), float(s["alpha"]), float(s["rho_S"]),
                                   self.sections["potential"]["kind"], float(s["r0"]))

    def params(self) -> ModelParams:
        f, n = self.sections["flow"], self.sections["nutrient"]
        visc = ViscosityProfile(float(f["eta0"]), float(f["eta1"]), float(f["lambda0"]), f["profile"])
        return ModelParams(float(f["nu"]), float(n["K"]), float(n["chi"]), visc, float(n["h0"]), f["mode"])

    def dt(self) -> float:
        dt = self.sections["time"]["dt"]
        return 0.1 * self.grid().h ** 2 if dt is None else float(dt)

    def to_dict(self) -> dict:
        return {"command": self.command, "seed": self.seed, "out": self.out, **copy.deepcopy(self.sections)}

    # --- validation -----------------------------------------------------------

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        try:
            self.grid()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"grid: {exc}") from None
        p = self.sections["potential"]
        if p["kind"] not in ("obstacle", "log"):
            raise ConfigError(f"potential.kind={p['kind']!r} must be 'obstacle' or 'log'")
        try:
            spec = self.potential()
        except ValueError as exc:
            raise ConfigError(f"potential: {exc}") from None
        if spec.kind == "log" and spec.delta > spec.log_delta_max:
            raise ConfigError(
                f"potential.delta={spec.delta} exceeds min(1, theta/(4 theta_c))={spec.log_delta_max:g}, "
                "the width below which the log-potential penalty bounds hold"
            )
        s = self.sections["source"]
        if s["enabled"]:
            if float(s["rho_S"]) <= abs(float(s["alpha"])):
                raise ConfigError(
                    f"source.rho_S={s['rho_S']} must exceed |source.alpha|={abs(float(s['alpha']))}: "
                    "sign condition f_phi(1) - f_v(1) < 0 < f_phi(-1) + f_v(-1) on the sources"
                )
            try:
                model = self.model()
            except ValueError as exc:
                raise ConfigError(f"source: {exc}") from None
            if spec.kind == "log":
                d0 = delta0(model)
                if spec.delta >= d0:
                    raise ConfigError(
                        f"potential.delta={spec.delta} must be below {d0:g}, the collar on which "
                        "r f_v(r) - f_phi(r) keeps the sign of r"
                    )
        f = self.sections["flow"]
        if f["mode"] not in ("brinkman", "darcy", "none"):
            raise ConfigError(f"flow.mode={f['mode']!r} must be brinkman, darcy or none")
        try:
            self.params()
        except ValueError as exc:
            raise ConfigError(f"flow: {exc}") from None
        if float(f["nu"]) <= 0:
            raise ConfigError(f"flow.nu={f['nu']} must be positive")
        n = self.sections["nutrient"]
        if float(n["K"]) <= 0:
            raise ConfigError(f"nutrient.K={n['K']} must be positive")
        if float(n["h0"]) < 0:
            raise ConfigError(f"nutrient.h0={n['h0']} must be nonnegative (consumption h >= 0)")
        t = self.sections["time"]
        if t["dt"] is not None and not float(t["dt"]) > 0:
            raise ConfigError(f"time.dt={t['dt']} must be positive")
        if int(t["steps"]) < 0:
            raise ConfigError(f"time.steps={t['steps']} must be nonnegative")
        st = self.sections["stationary"]
        if not 0 < float(st["omega"]) <= 1:
            raise ConfigError(f"stationary.omega={st['omega']} must lie in (0, 1]")
        if st["CF"] is not None and float(st["CF"]) < 0:
            raise ConfigError(f"stationary.CF={st['CF']} must be nonnegative")
        if st["strategy"] not in ("picard", "pseudotime"):
            raise ConfigError(f"stationary.strategy={st['strategy']!r} must be picard or pseudotime")
        for key in ("deltas", "log_deltas"):
            deltas = self.sections["continuation"][key]
            if not deltas or any(not 0 < float(d) < 1 for d in deltas):
                raise ConfigError(f"continuation.{key} must be a nonempty list of widths in (0, 1)")
            if any(a <= b for a, b in zip(deltas, deltas[1:])):
                raise ConfigError(f"continuation.{key} must be strictly descending")
        if self.command == "delta-continuation" and spec.kind == "log":
            d0 = delta0(self.model()) if s["enabled"] else float("inf")
            bad = [d for d in self.sections["continuation"]["log_deltas"]
                   if float(d) > spec.log_delta_max or float(d) >= d0]
            if bad:
                raise ConfigError(
                    f"continuation.log_deltas {bad} must not exceed min(1, theta/(4 theta_c))="
                    f"{spec.log_delta_max:g} and must stay below delta0={d0:g}"
                )
        init = self.sections["init"]
        if init["kind"] not in ("seed", "random", "constant"):
            raise ConfigError(f"init.kind={init['kind']!r} must be seed, random or constant")
        return self


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_config(path=None, overrides=(), command=None, out=None) -> RunConfig:
    """Load TOML (optional), apply ``key=value`` overrides, fill defaults and validate.

    Top-level keys ``command`` and ``seed`` are honoured; every other entry
    must live in one of the known sections.
    """
    cfg = RunConfig()
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        for key, value in data.items():
            if isinstance(value, dict):
                if key not in cfg.sections:
                    raise ConfigError(f"unknown configuration section [{key}]")
                for k, v in value.items():
                    cfg.set(f"{key}.{k}", v)
            elif key == "command":
                cfg.command = value
            elif key == "seed":
                cfg.seed = int(value)
            else:
                raise ConfigError(f"unknown top-level key {key!r}")
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key = key.strip()
        if key == "seed":
            cfg.seed = int(text)
        else:
            cfg.set(key, _parse_value(text.strip()))
    if command is not None:
        cfg.command = command
    if out is not None:
        cfg.out = str(out)
    for key in ("grid.lx", "grid.ly"):
        if not math.isfinite(float(cfg[key])):
            raise ConfigError(f"{key} must be finite")
    return cfg.validate()
