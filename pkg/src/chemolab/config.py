"""Strict ``[section]`` / ``key=value`` scenario configuration.

Every key must be listed in :data:`SCHEMA`; misspellings are errors, and
only keys with a documented default may be omitted.  ``#`` starts a comment.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ChemolabError, ConfigError
from .model import (Constant, DecaySignal, Grid, HomogeneousPeriodic, ModelParams,
                    PeriodicSignal, SeparablePerturbed)

SCENARIOS = ("steady_state", "ode_only", "convergence", "periodic_a0",
             "periodic_probe_a_pos", "sweep")

REQUIRED = object()


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _range(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError("expected 'low,high,count'")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    if n < 2 or not hi > lo:
        raise ValueError("need high > low and count >= 2")
    return lo, hi, n


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _choice(*options):
    def parse(text):
        text = text.strip()
        if text not in options:
            raise ValueError(f"{text!r} is not one of {', '.join(options)}")
        return text
    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "scenario": {
        "name": (_choice(*SCENARIOS), REQUIRED),
        "sweep_plane": (_choice("r_f0", "r_a"), "r_f0"),
        "sweep_r": (_range, "0.5,3,21"),
        "sweep_y": (_range, "0.5,3,21"),
        "sweep_f0": (float, "1.0"),
        "sweep_mode": (_choice("pde", "ode"), "pde"),
        "workers": (int, "0"),
    },
    "params": {
        "D": (float, REQUIRED),
        "chi": (float, REQUIRED),
        "r": (float, REQUIRED),
        "a": (float, "0"),
    },
    "source": {
        "type": (_choice("constant", "periodic", "separable"), "constant"),
        "f0": (float, "none"),
        "mean": (float, "none"),
        "amplitude": (float, "0"),
        "period": (float, "1"),
        "phase": (float, "0"),
        "p_scale": (float, "1"),
        "p_rate": (float, "1"),
        "q_mode": (int, "1"),
        "q_amplitude": (float, "1"),
    },
    "grid": {
        "dim": (int, "1"),
        "n": (int, "none"),
        "nx": (int, "none"),
        "ny": (int, "none"),
        "lx": (float, "1"),
    },
    "initial": {
        "family": (_choice("constant", "cosine", "random", "equilibrium"), "cosine"),
        "u0": (float, "0.5"),
        "v0": (float, "0.5"),
        "eps": (float, "0.1"),
        "mode": (int, "1"),
        "seed": (int, "0"),
    },
    "run": {
        "t_end": (float, REQUIRED),
        "dt": (float, "1e-3"),
        "sample_every": (float, "1.0"),
        "cfl_safety": (float, "0.5"),
        "adaptive_dt": (_bool, "false"),
        "track_split": (_bool, "false"),
        "backend": (_choice("auto", "numba", "numpy"), "auto"),
        "wall_clock_limit": (_opt_float, "none"),
    },
    "tolerances": {
        "linf": (float, "1e-3"),
        "l2": (float, "1e-2"),
        "window": (_opt_float, "none"),
        "tail_tol": (float, "1e-4"),
        "plateau_slope": (float, "1e-5"),
        "mass_floor": (float, "1e-3"),
        "residual": (float, "1e-8"),
        "persistence": (float, "1e-3"),
        "bound_slack": (float, "1e-9"),
        "survival": (float, "1e-3"),
        "probe_tol": (float, "1e-9"),
        "probe_max_iters": (int, "50"),
        "ode_rtol": (float, "1e-9"),
        "ode_atol": (float, "1e-12"),
    },
}


@dataclass(frozen=True)
class InitialData:
    family: str = "cosine"
    u0: float = 0.5
    v0: float = 0.5
    eps: float = 0.1
    mode: int = 1
    seed: int = 0


@dataclass(frozen=True)
class SweepSpec:
    plane: str = "r_f0"
    r_range: tuple = (0.5, 3.0, 21)
    y_range: tuple = (0.5, 3.0, 21)
    f0: float = 1.0
    mode: str = "pde"
    workers: int = 0


@dataclass(frozen=True)
class RunSettings:
    t_end: float
    dt: float = 1e-3
    sample_every: float = 1.0
    cfl_safety: float = 0.5
    adaptive_dt: bool = False
    track_split: bool = False
    backend: str = "auto"
    wall_clock_limit: Optional[float] = None


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    scenario: str
    params: ModelParams
    source: object
    grid: Grid
    initial: InitialData
    run: RunSettings
    tolerances: dict
    sweep: Optional[SweepSpec] = None
    output_dir: Optional[Path] = None
    source_options: dict = field(default_factory=dict)

    @property
    def t_end(self):
        return self.run.t_end

    @property
    def dt(self):
        return self.run.dt

    @property
    def sample_every(self):
        return self.run.sample_every


def _tokenize(text):
    """Yield ``(line_no, section, key, value)``; raise on malformed lines."""
    section = None
    seen = set()
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", no)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", no)
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}", no)
        if section is None:
            raise ConfigError("key outside of any [section]", no)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", no, key)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", no, key)
        seen.add((section, key))
        yield no, section, key, value


def parse_values(text):
    """Parse ``text`` into ``{section: {key: value}}`` with defaults filled in."""
    raw = {}
    for no, section, key, value in _tokenize(text):
        parser = SCHEMA[section][key][0]
        try:
            raw.setdefault(section, {})[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: {exc}", no, key) from None
    values = {}
    for section, keys in SCHEMA.items():
        got = raw.get(section, {})
        out = values[section] = {}
        for key, (parser, default) in keys.items():
            if key in got:
                out[key] = got[key]
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {section}.{key}", key=key)
            elif default == "none":
                out[key] = None
            else:
                out[key] = parser(default)
    return values


def _build_grid(g):
    if g["dim"] == 1:
        if g["n"] is None:
            raise ConfigError("grid.n is required for dim=1", key="n")
        if g["n"] < 3:
            raise ConfigError("grid.n must be >= 3", key="n")
        return Grid.interval(g["n"])
    if g["dim"] == 2:
        if g["nx"] is None or g["ny"] is None:
            raise ConfigError("grid.nx and grid.ny are required for dim=2", key="nx")
        if min(g["nx"], g["ny"]) < 3:
            raise ConfigError("grid.nx and grid.ny must be >= 3", key="nx")
        return Grid.rectangle(g["nx"], g["ny"], g["lx"])
    raise ConfigError("grid.dim must be 1 or 2", key="dim")


def build_source(s, grid):
    kind = s["type"]
    if kind == "constant":
        if s["f0"] is None:
            raise ConfigError("source.f0 is required for type=constant", key="f0")
        return Constant(s["f0"])
    if s["mean"] is None:
        raise ConfigError(f"source.mean is required for type={kind}", key="mean")
    ftilde = PeriodicSignal(s["mean"], s["amplitude"], s["period"], s["phase"])
    if kind == "periodic":
        return HomogeneousPeriodic(ftilde)
    x = grid.centers()[0]
    q = s["q_amplitude"] * np.cos(s["q_mode"] * np.pi * x / grid.lengths[0])
    return SeparablePerturbed(ftilde, DecaySignal(s["p_scale"], s["p_rate"]), q, grid)


def parse_config(text: str, output_dir=None) -> ScenarioConfig:
    """Parse and validate a configuration document."""
    values = parse_values(text)
    sc = values["scenario"]
    try:
        params = ModelParams(**values["params"])
        grid = _build_grid(values["grid"])
        source = build_source(values["source"], grid)
    except ConfigError:
        raise
    except (ChemolabError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    run = RunSettings(**values["run"])
    for key in ("t_end", "dt", "sample_every"):
        if not getattr(run, key) > 0:
            raise ConfigError(f"{key} must be > 0", key=key)
    if run.sample_every < run.dt:
        raise ConfigError("sample_every must be >= dt", key="sample_every")
    if not 0 < run.cfl_safety <= 1:
        raise ConfigError("cfl_safety must lie in (0, 1]", key="cfl_safety")

    init = InitialData(**values["initial"])
    if init.u0 < 0 or init.v0 < 0:
        raise ConfigError("initial u0 and v0 must be >= 0", key="u0")
    if not 0 <= init.eps < 1:
        raise ConfigError("initial eps must lie in [0, 1)", key="eps")

    tol = dict(values["tolerances"])
    if tol["window"] is None:
        tol["window"] = 0.1 * run.t_end
    for key, value in tol.items():
        if not value > 0:
            raise ConfigError(f"tolerance {key} must be > 0", key=key)

    sweep = None
    if sc["name"] == "sweep":
        sweep = SweepSpec(sc["sweep_plane"], sc["sweep_r"], sc["sweep_y"], sc["sweep_f0"],
                          sc["sweep_mode"], sc["workers"])
        if sweep.r_range[0] <= 0:
            raise ConfigError("sweep r values must be > 0", key="sweep_r")
        if sweep.y_range[0] < 0:
            raise ConfigError("sweep y values must be >= 0", key="sweep_y")
    return ScenarioConfig(sc["name"], params, source, grid, init, run, tol, sweep,
                          None if output_dir is None else Path(output_dir),
                          dict(values["source"]))


def load_config(path, output_dir=None) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, output_dir)


def initial_fields(init: InitialData, grid: Grid, params: ModelParams, source, seed=None):
    """Cell fields (u0, v0) for the configured initial-data family.

    ``random`` adds a seeded 8-mode cosine series with coefficients uniform
    in [-eps, eps]; the other families are deterministic.
    """
    coords = grid.centers()
    x = coords[0] / grid.lengths[0]
    if init.family == "constant":
        return np.full(grid.shape, init.u0), np.full(grid.shape, init.v0)
    if init.family in ("cosine", "equilibrium"):
        u_base, v_base = init.u0, init.v0
        if init.family == "equilibrium":
            if not isinstance(source, Constant):
                raise ConfigError("family=equilibrium needs a constant source", key="family")
            from .ode import equilibrium_constant_f
            u_base, v_base = equilibrium_constant_f(params, source.f0).stable
        bump = init.eps * np.cos(init.mode * np.pi * x)
        return u_base * (1 + bump), v_base * (1 + bump)
    rng = np.random.default_rng(init.seed if seed is None else seed)
    if grid.dimension == 1:
        modes = [(k, 0) for k in range(1, 9)]
    else:
        modes = [(k % 3, k // 3) for k in range(1, 9)]
    y = coords[1] / grid.lengths[1] if grid.dimension == 2 else 0.0
    fields = []
    for base in (init.u0, init.v0):
        coef = rng.uniform(-init.eps, init.eps, size=len(modes))
        series = sum(c * np.cos(kx * np.pi * x) * np.cos(ky * np.pi * y)
                     for c, (kx, ky) in zip(coef, modes))
        fields.append(base * (1 + series) * np.ones(grid.shape))
    if min(f.min() for f in fields) < 0:
        raise ConfigError("random initial data went negative; reduce eps", key="eps")
    return fields[0], fields[1]


def sweep_axis(spec):
    lo, hi, n = spec
    return np.linspace(lo, hi, n)


def cell_size(spec):
    lo, hi, n = spec
    return (hi - lo) / (n - 1)

