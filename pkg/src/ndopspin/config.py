"""Declarative run configuration (TOML): parse, validate, serialize, build.

The config file has sections [grid], [velocity], [diffusivity], [model],
[model.insolation], [solver], [run]. parse_config(serialize_config(cfg))
returns an equal config, which cmd-level determinism relies on.
"""

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import transport
from .grid import Grid, build_grid
from .reactions import InsolationSpec, PO4DOPModel, PO4DOPParams
from .solver import SolveConfig


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class GridSection:
    nx: int = 4
    ny: int = 4
    dx: float = 1.0e4
    dy: float = 1.0e4
    h_bar_e: float = 100.0
    depths: list = field(default_factory=lambda: [])   # m, row-major (j*nx+i)
    depths_csv: str = ""
    layer_thicknesses: list = field(default_factory=lambda: [])
    n_layers: int = 8


@dataclass
class VelocitySection:
    kind: str = "overturning"   # overturning | zero | csv
    amplitude: float = 3.0e4    # m^3/s stream-function peak
    seasonal: float = 0.0       # relative modulation amplitude in [0, 1)
    csv: str = ""


@dataclass
class DiffusivitySection:
    kappa_vertical: float = 1.0e-4    # m^2/s
    kappa_horizontal: float = 5.0e2


@dataclass
class InsolationSection:
    kind: str = "diurnal"       # diurnal | smooth | constant | csv
    surface_value: float = 200.0  # W/m^2
    attenuation: float = 0.02     # 1/m
    csv: str = ""


@dataclass
class ModelSection:
    kind: str = "po4dop"
    max_uptake: float = 1.5e-8      # mmol P m^-3 s^-1
    k_nutrient: float = 0.5         # mmol P m^-3
    k_light: float = 30.0           # W m^-2
    dop_fraction: float = 0.67
    sinking_exponent: float = 0.858
    remin_rate: float = 1.6e-8      # 1/s
    insolation: InsolationSection = field(default_factory=InsolationSection)


@dataclass
class SolverSection:
    total_mass: float = -1.0          # mmol P; < 0 means "use mean_concentration"
    mean_concentration: float = 1.0   # mmol P m^-3
    period: float = 3.1104e7          # s (360 days)
    n_time_steps: int = 96
    theta: float = 1.0
    outer_tol: float = 1.0e-8
    outer_max_iter: int = 60
    damping: float = 0.5
    inner_tol: float = 1.0e-12
    advection: str = "upwind"
    init_state: str = ""              # optional .npz restart snapshot


@dataclass
class RunSection:
    out_dir: str = "out"
    seed: int = 0
    reproducible: bool = True


@dataclass
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    velocity: VelocitySection = field(default_factory=VelocitySection)
    diffusivity: DiffusivitySection = field(default_factory=DiffusivitySection)
    model: ModelSection = field(default_factory=ModelSection)
    solver: SolverSection = field(default_factory=SolverSection)
    run: RunSection = field(default_factory=RunSection)


_SECTIONS = {"grid": GridSection, "velocity": VelocitySection,
             "diffusivity": DiffusivitySection, "model": ModelSection,
             "solver": SolverSection, "run": RunSection}


def _fill(cls, data: dict, where: str):
    obj = cls()
    for key, val in data.items():
        if not hasattr(obj, key):
            raise ConfigError(f"unknown key {key!r} in [{where}]")
        cur = getattr(obj, key)
        if key == "insolation":
            setattr(obj, key, _fill(InsolationSection, val, "model.insolation"))
            continue
        if isinstance(cur, bool):
            if not isinstance(val, bool):
                raise ConfigError(f"{where}.{key} must be a boolean")
        elif isinstance(cur, int) and not isinstance(val, bool):
            if not isinstance(val, int):
                raise ConfigError(f"{where}.{key} must be an integer")
        elif isinstance(cur, float):
            if not isinstance(val, (int, float)):
                raise ConfigError(f"{where}.{key} must be a number")
            val = float(val)
        elif isinstance(cur, str):
            if not isinstance(val, str):
                raise ConfigError(f"{where}.{key} must be a string")
        elif isinstance(cur, list):
            if not isinstance(val, list):
                raise ConfigError(f"{where}.{key} must be an array")
            val = [float(v) for v in val]
        setattr(obj, key, val)
    return obj


def parse_config_text(text: str) -> RunConfig:
    data = tomllib.loads(text)
    cfg = RunConfig()
    for name, payload in data.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        setattr(cfg, name, _fill(_SECTIONS[name], payload, name))
    _validate(cfg)
    return cfg


def parse_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode()
    return parse_config_text(text)


def _toml_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, (int, float)):
        return repr(val)
    if isinstance(val, str):
        return json.dumps(val)
    if isinstance(val, list):
        return "[" + ", ".join(_toml_value(v) for v in val) + "]"
    raise ConfigError(f"cannot serialize value {val!r}")


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for name in _SECTIONS:
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        sub = []
        for key, val in asdict(section).items():
            if isinstance(val, dict):
                sub.append((f"{name}.{key}", val))
                continue
            lines.append(f"{key} = {_toml_value(val)}")
        lines.append("")
        for sub_name, payload in sub:
            lines.append(f"[{sub_name}]")
            for key, val in payload.items():
                lines.append(f"{key} = {_toml_value(val)}")
            lines.append("")
    return "\n".join(lines)


def _validate(cfg: RunConfig) -> None:
    g = cfg.grid
    if g.nx < 1 or g.ny < 1 or g.dx <= 0 or g.dy <= 0:
        raise ConfigError("grid extents must be positive")
    if g.h_bar_e <= 0:
        raise ConfigError("grid.h_bar_e must be positive")
    if bool(g.depths) and bool(g.depths_csv):
        raise ConfigError("give grid.depths or grid.depths_csv, not both")
    if not g.depths and not g.depths_csv:
        raise ConfigError("grid needs depths or depths_csv")
    if cfg.velocity.kind not in ("overturning", "zero", "csv"):
        raise ConfigError(f"unknown velocity.kind {cfg.velocity.kind!r}")
    if cfg.velocity.kind == "csv" and not cfg.velocity.csv:
        raise ConfigError("velocity.kind = 'csv' needs velocity.csv")
    if not 0.0 <= cfg.velocity.seasonal < 1.0:
        raise ConfigError("velocity.seasonal must lie in [0, 1)")
    if cfg.diffusivity.kappa_vertical <= 0 or cfg.diffusivity.kappa_horizontal <= 0:
        raise ConfigError("diffusivities must be strictly positive")
    if cfg.model.kind != "po4dop":
        raise ConfigError(
            f"unknown model.kind {cfg.model.kind!r}; plug-in models are wired "
            f"in programmatically via reactions.ReactionModel")
    s = cfg.solver
    if s.total_mass < 0 and s.mean_concentration < 0:
        raise ConfigError("solver needs total_mass >= 0 or mean_concentration >= 0")
    if s.advection not in ("upwind", "centered"):
        raise ConfigError(f"unknown solver.advection {s.advection!r}")
    if not 0.5 <= s.theta <= 1.0:
        raise ConfigError("solver.theta must lie in [1/2, 1]")
    if not 0.0 < s.damping <= 1.0:
        raise ConfigError("solver.damping must lie in (0, 1]")


def _load_depths(cfg: RunConfig, base_dir: str) -> np.ndarray:
    g = cfg.grid
    if g.depths_csv:
        path = os.path.join(base_dir, g.depths_csv)
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        depths = np.zeros(g.nx * g.ny)
        for i, j, d in rows:
            depths[int(j) * g.nx + int(i)] = d
        return depths
    if len(g.depths) == 1:
        return np.full(g.nx * g.ny, g.depths[0])
    return np.asarray(g.depths, dtype=float)


def _load_face_csv(path, n_nodes: int, n_faces: int) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    arr = np.zeros((n_nodes, n_faces))
    for t, f, val in rows:
        arr[int(t), int(f)] = val
    return arr


@dataclass
class Problem:
    """Everything a run needs, assembled from one RunConfig."""

    config: RunConfig
    grid: Grid
    velocity: transport.VelocityField
    operator: transport.TransportOperator
    model: PO4DOPModel
    solve_config: SolveConfig
    params: PO4DOPParams


def build_problem(cfg: RunConfig, base_dir: str = ".") -> Problem:
    """Materialize grid, transport operator, model, and solver controls."""
    g = cfg.grid
    depths = _load_depths(cfg, base_dir)
    layers = g.layer_thicknesses if g.layer_thicknesses else g.n_layers
    grid = build_grid((g.nx, g.ny, g.dx, g.dy), depths, g.h_bar_e, layers)

    s = cfg.solver
    n_t = s.n_time_steps
    period = s.period
    if cfg.velocity.kind == "overturning":
        vel = transport.overturning_velocity(grid, period, n_t,
                                             cfg.velocity.amplitude,
                                             cfg.velocity.seasonal)
    elif cfg.velocity.kind == "zero":
        vel = transport.zero_velocity(grid, period, n_t)
    else:
        flux = _load_face_csv(os.path.join(base_dir, cfg.velocity.csv),
                              n_t + 1, grid.n_faces)
        vel = transport.VelocityField(grid, period, n_t, flux)
    diff = transport.uniform_diffusivity(grid, period, n_t,
                                         cfg.diffusivity.kappa_vertical,
                                         cfg.diffusivity.kappa_horizontal)
    op = transport.assemble_transport(grid, vel, diff, advection=s.advection)

    m = cfg.model
    ins = m.insolation
    spec = InsolationSpec(kind=ins.kind, surface_value=ins.surface_value,
                          attenuation=ins.attenuation,
                          csv_path=os.path.join(base_dir, ins.csv) if ins.csv else "")
    params = PO4DOPParams(max_uptake=m.max_uptake, k_nutrient=m.k_nutrient,
                          k_light=m.k_light, dop_fraction=m.dop_fraction,
                          sinking_exponent=m.sinking_exponent,
                          remin_rate=m.remin_rate, insolation=spec)
    model = PO4DOPModel(grid, params, period)

    total_mass = s.total_mass if s.total_mass >= 0 \
        else s.mean_concentration * grid.total_volume
    solve_cfg = SolveConfig(total_mass=total_mass, period=period,
                            n_time_steps=n_t, theta=s.theta,
                            outer_tol=s.outer_tol, outer_max_iter=s.outer_max_iter,
                            damping=s.damping, inner_tol=s.inner_tol,
                            seed=cfg.run.seed)
    return Problem(config=cfg, grid=grid, velocity=vel, operator=op,
                   model=model, solve_config=solve_cfg, params=params)


_SCHEMA_NOTES = {
    "grid": [("nx, ny", "surface mesh cells (row-major columns, id = j*nx + i)"),
             ("dx, dy", "horizontal cell size, m"),
             ("h_bar_e", "maximum euphotic depth, m; must be a layer interface "
                         "wherever a column is deeper"),
             ("depths", "bottom depth per column, m (array, single value, or "
                        "depths_csv with header i,j,depth_m)"),
             ("layer_thicknesses", "global layer template, m; or n_layers to "
                                   "derive one aligned with all depths")],
    "velocity": [("kind", "overturning (built-in divergence-free stream "
                          "function), zero, or csv"),
                 ("amplitude", "stream-function peak, m^3/s"),
                 ("seasonal", "relative seasonal flux modulation, [0, 1)"),
                 ("csv", "face fluxes with header t_index,face_id,flux_m3_s")],
    "diffusivity": [("kappa_vertical", "z-face diffusivity, m^2/s"),
                    ("kappa_horizontal", "x/y-face diffusivity, m^2/s")],
    "model": [("kind", "po4dop (reference model)"),
              ("max_uptake", "maximum uptake rate, mmol P m^-3 s^-1"),
              ("k_nutrient", "nutrient half saturation, mmol P m^-3"),
              ("k_light", "light half saturation, W m^-2"),
              ("dop_fraction", "uptake fraction routed to DOP, [0, 1]"),
              ("sinking_exponent", "export-profile power, > 0"),
              ("remin_rate", "DOP remineralization rate, 1/s")],
    "model.insolation": [("kind", "diurnal | smooth | constant | csv"),
                         ("surface_value", "surface insolation, W m^-2"),
                         ("attenuation", "light attenuation, 1/m"),
                         ("csv", "per-cell values with header cell_id,value")],
    "solver": [("total_mass", "prescribed total mass C, mmol P (or set "
                              "mean_concentration, mmol P m^-3)"),
               ("period", "period T, s"),
               ("n_time_steps", "theta-scheme steps per period"),
               ("theta", "time scheme parameter in [1/2, 1]"),
               ("outer_tol / outer_max_iter", "fixed-point stopping controls"),
               ("damping", "fixed-point damping in (0, 1]"),
               ("inner_tol", "Krylov tolerance of the periodic solves"),
               ("advection", "upwind | centered"),
               ("init_state", "optional .npz snapshot to start from")],
    "run": [("out_dir", "output directory"),
            ("seed", "seed for randomized initial guesses"),
            ("reproducible", "record-keeping flag; runs are deterministic")],
}


def config_schema() -> str:
    """Printable schema: defaults plus per-key notes."""
    out = ["# Configuration schema (TOML). Defaults shown below, notes after.",
           "", serialize_config(RunConfig()), "# Notes:"]
    for section, notes in _SCHEMA_NOTES.items():
        out.append(f"#   [{section}]")
        for key, text in notes:
            out.append(f"#     {key}: {text}")
    return "\n".join(out)
