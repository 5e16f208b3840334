"""Run configuration read from an INI-style file.

Every key has a default; unknown sections or keys are rejected. Vectors are
comma separated. A weight matrix may be a scalar ``s`` (meaning ``s*I``), a
diagonal (``n`` values) or a full row-major matrix (``n*n`` values).
Membership breakpoints are given in degrees (``gamma_lo_deg``).

Example::

    [trajopt]
    N = 400
    x_f = 0, 0, 3, 0, 6.283185307179586, 0

    [arma]
    runs = 100
    seed = 0
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import PlantParams
from .fuzzy import FuzzyConfig
from .lincontrol import LqrWeights
from .trajopt import SolverOptions, TrajOptProblem, flip_problem


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ArmaSettings:
    runs: int = 100
    l_w: int = 5
    ridge: float = 1e-6
    seed: int = 0
    ic_halfwidth: float = 0.5
    horizon: float = 3.0
    wiring: str = "decoupled"


@dataclass(frozen=True)
class SimSettings:
    T_s: float = 1e-3
    h: float = 1e-4
    horizon: float = 3.0


@dataclass
class RunConfig:
    plant: PlantParams = field(default_factory=PlantParams)
    problem: TrajOptProblem = field(default_factory=flip_problem)
    solver: SolverOptions = field(default_factory=SolverOptions)
    lqr: LqrWeights = field(default_factory=LqrWeights)
    arma: ArmaSettings = field(default_factory=ArmaSettings)
    fuzzy: FuzzyConfig = field(default_factory=FuzzyConfig)
    sim: SimSettings = field(default_factory=SimSettings)


def _float(s):
    s = s.strip().lower()
    if s in ("inf", "+inf"):
        return math.inf
    if s == "-inf":
        return -math.inf
    if s == "pi":
        return math.pi
    if s == "2pi":
        return 2 * math.pi
    return float(s)


def _vector(s, n):
    v = np.array([_float(p) for p in s.split(",")])
    if len(v) != n:
        raise ValueError(f"expected {n} values, got {len(v)}")
    return v


def _matrix(s, n):
    v = np.array([_float(p) for p in s.split(",")])
    if len(v) == 1:
        return v[0] * np.eye(n)
    if len(v) == n:
        return np.diag(v)
    if len(v) == n * n:
        return v.reshape(n, n)
    raise ValueError(f"expected 1, {n} or {n * n} values, got {len(v)}")


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"not an integer: {s}")
    return int(v)


def _bool(s):
    s = s.strip().lower()
    if s in ("true", "yes", "1"):
        return True
    if s in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {s}")


SCHEMA = {
    "plant": {"g": _float, "m": _float, "J": _float},
    "trajopt": {
        "N": _int, "x_i": lambda s: _vector(s, 6), "x_f": lambda s: _vector(s, 6),
        "u_f": lambda s: _vector(s, 2), "Q_x": lambda s: _matrix(s, 6),
        "Q_u": lambda s: _matrix(s, 2), "x_lo": lambda s: _vector(s, 6),
        "x_hi": lambda s: _vector(s, 6), "u_lo": lambda s: _vector(s, 2),
        "u_hi": lambda s: _vector(s, 2), "T_init": _float, "T_min": _float,
    },
    "solver": {
        "eq_tol": _float, "stat_tol": _float, "max_outer": _int, "max_inner": _int,
        "rho0": _float, "inner": str.strip, "lbfgs_memory": _int,
    },
    "lqr": {"R1": lambda s: _matrix(s, 6), "R2": lambda s: _matrix(s, 2)},
    "arma": {
        "runs": _int, "l_w": _int, "ridge": _float, "seed": _int, "ic_halfwidth": _float,
        "horizon": _float, "wiring": str.strip,
    },
    "fuzzy": {"gamma_lo_deg": _float, "gamma_hi_deg": _float},
    "sim": {"T_s": _float, "h": _float, "horizon": _float},
}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str  # keys are case sensitive (Q_x, T_s)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None

    values: dict = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{section}.{key}'")
            try:
                values[(section, key)] = SCHEMA[section][key](raw)
            except ValueError as e:
                raise ConfigError(f"{source}: bad value for '{section}.{key}': {e}") from None

    def sect(name):
        return {k: v for (s, k), v in values.items() if s == name}

    def build(name, fn):
        try:
            return fn()
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{source}: invalid [{name}] settings: {e}") from None

    plant = build("plant", lambda: PlantParams(**sect("plant")))
    tro = sect("trajopt")
    tro.setdefault("u_f", np.array([plant.g, 0.0]))
    problem = build("trajopt", lambda: flip_problem(params=plant, **tro))
    solver = build("solver", lambda: SolverOptions(**sect("solver")))
    lqr = build("lqr", lambda: LqrWeights(**sect("lqr")))
    arma_kw = sect("arma")
    arma = build("arma", lambda: _check_arma(ArmaSettings(**arma_kw)))
    fz = sect("fuzzy")
    fuzzy = build("fuzzy", lambda: FuzzyConfig.from_degrees(
        fz.get("gamma_lo_deg", 20.0), fz.get("gamma_hi_deg", 60.0)))
    sim = build("sim", lambda: _check_sim(SimSettings(**sect("sim"))))
    return RunConfig(plant, problem, solver, lqr, arma, fuzzy, sim)


def _check_arma(a: ArmaSettings) -> ArmaSettings:
    if a.runs < 0:
        raise ValueError("runs must be >= 0")
    if a.l_w < 1:
        raise ValueError("l_w must be >= 1")
    if a.ridge < 0:
        raise ValueError("ridge must be >= 0")
    if a.ic_halfwidth < 0 or a.horizon <= 0:
        raise ValueError("ic_halfwidth must be >= 0 and horizon > 0")
    if a.wiring not in ("decoupled", "position_both"):
        raise ValueError(f"unknown wiring {a.wiring!r}")
    return a


def _check_sim(s: SimSettings) -> SimSettings:
    if not (s.T_s > 0 and s.h > 0 and s.horizon > 0):
        raise ValueError("T_s, h and horizon must be positive")
    r = s.T_s / s.h
    if abs(r - round(r)) > 1e-9 * r:
        raise ValueError("T_s must be an integer multiple of h")
    return s


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text, str(path))


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **kw)
