"""Reaction terms for two-tracer ecosystem models; PO4-DOP as reference.

A reaction model maps a state (two tracer fields, a time) to volume rates
d1, d2 (mmol P m^-3 s^-1, one per cell) and boundary rates b1, b2
(mmol P m^-2 s^-1, one per boundary face), declares pointwise bound fields
for both, and satisfies the discrete mass identity

    sum_cells volume * (d1 + d2) + sum_faces area * (b1 + b2) = 0

for every state and time. The identity is what pins the total tracer mass
of the solved system to a constant.

The PO4-DOP model: saturating uptake of nutrient in the euphotic zone, a
fraction nu routed to DOP in place, the remainder exported downward along a
power-law profile. Export deposited below the euphotic zone uses the exact
cell integrals of the profile (telescoping weights), so the mass identity
holds to machine precision; whatever reaches the water-body floor enters as
a boundary rate there.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import APHOTIC, EUPHOTIC, Grid, GridMismatchError

_REL_TOL = 1e-12


def uptake_G(y1, light, alpha: float, k_nutrient: float, k_light: float):
    """Saturating uptake rate; |result| <= alpha for any inputs.

    Defined for negative arguments too (the absolute values keep the
    denominators away from zero), monotone in y1 for y1 >= 0, and zero
    whenever the light is zero.
    """
    y1 = np.asarray(y1, dtype=float)
    light = np.asarray(light, dtype=float)
    out = (alpha * y1 / (np.abs(y1) + k_nutrient)
           * light / (np.abs(light) + k_light))
    return float(out) if out.ndim == 0 else out


def sinking_weights(intervals, beta: float, h_bar_e: float):
    """Exact export-profile integrals over the aphotic cells of one column.

    intervals: contiguous (top, bottom) depth pairs starting at h_bar_e.
    Returns (cell_weights, bottom_weight). The weight of a cell [a, b] is
    (a/h_bar_e)**-beta - (b/h_bar_e)**-beta; the bottom weight is the
    telescoped complement, equal to (h/h_bar_e)**-beta up to roundoff, so
    the weights plus the bottom weight sum to 1 exactly.
    """
    if beta <= 0:
        raise ValueError("sinking exponent must be positive")
    intervals = [(float(a), float(b)) for a, b in intervals]
    if not intervals:
        return np.zeros(0), 1.0
    tol = 1e-9 * max(h_bar_e, 1.0)
    if abs(intervals[0][0] - h_bar_e) > tol:
        raise ValueError(
            f"column starts at {intervals[0][0]:g} m, not at h_bar_e={h_bar_e:g} m")
    edges = [intervals[0][0]]
    for a, b in intervals:
        if abs(a - edges[-1]) > tol or b <= a:
            raise ValueError("intervals must be contiguous and increasing")
        edges.append(b)
    u = np.power(np.asarray(edges) / h_bar_e, -beta)
    w = u[:-1] - u[1:]
    bottom = 1.0 - math.fsum(w)
    return w, bottom


@dataclass(frozen=True)
class InsolationSpec:
    """Light field description: nonnegative, periodic, zero in the aphotic zone.

    kind: "diurnal" (clipped cosine over the period), "smooth" (raised sine,
    differentiable, for high-accuracy time integration), "constant", or
    "csv" (per-cell values from a file, constant in time).
    surface_value: I0 (W m^-2); attenuation: exponential decay rate (1/m).
    """

    kind: str = "diurnal"
    surface_value: float = 200.0
    attenuation: float = 0.02
    csv_path: str = ""

    def __post_init__(self):
        if self.kind not in ("diurnal", "smooth", "constant", "csv"):
            raise ValueError(f"unknown insolation kind {self.kind!r}")
        if self.surface_value < 0 or self.attenuation < 0:
            raise ValueError("insolation parameters must be nonnegative")

    def time_factor(self, phase: float) -> float:
        """Periodic factor in [0, 1+]; phase is t/T mod 1."""
        if self.kind == "diurnal":
            return max(0.0, math.cos(2.0 * math.pi * phase))
        if self.kind == "smooth":
            return 0.5 * (1.0 + math.sin(2.0 * math.pi * phase))
        return 1.0

    def cell_profile(self, grid: Grid) -> np.ndarray:
        """Per-cell base values before the time factor; zero below h_bar_e."""
        if self.kind == "csv":
            vals = np.loadtxt(self.csv_path, delimiter=",", skiprows=1, ndmin=2)
            prof = np.zeros(grid.n_cells)
            prof[vals[:, 0].astype(int)] = vals[:, 1]
            if np.any(prof < 0):
                raise ValueError("insolation CSV contains negative values")
            if np.any(prof[grid.cell_zone == APHOTIC] != 0.0):
                raise ValueError("insolation CSV is nonzero in the aphotic zone")
            return prof
        prof = self.surface_value * np.exp(-self.attenuation * grid.cell_z_center)
        prof[grid.cell_zone == APHOTIC] = 0.0
        return prof


@dataclass(frozen=True)
class PO4DOPParams:
    """Parameters of the PO4-DOP reference model.

    Defaults are representative magnitudes for an annual-period setup
    (concentrations around 1 mmol P m^-3); they are implementation choices,
    tune them per application via the config file.
    """

    max_uptake: float = 1.5e-8        # alpha, mmol P m^-3 s^-1
    k_nutrient: float = 0.5           # K_P, mmol P m^-3
    k_light: float = 30.0             # K_I, W m^-2
    dop_fraction: float = 0.67        # nu, routed to DOP in place
    sinking_exponent: float = 0.858   # beta, export-profile power
    remin_rate: float = 1.6e-8        # lambda, 1/s
    insolation: InsolationSpec = field(default_factory=InsolationSpec)

    def __post_init__(self):
        if min(self.max_uptake, self.k_nutrient, self.k_light,
               self.sinking_exponent, self.remin_rate) <= 0:
            raise ValueError("PO4-DOP rate parameters must be strictly positive")
        if not 0.0 <= self.dop_fraction <= 1.0:
            raise ValueError("dop_fraction must lie in [0, 1]")


class ReactionModel:
    """Contract for pluggable reaction terms.

    Subclasses bind a grid and must provide lambda_remin (> 0), bound_d
    (per-cell bound on |d_j|), bound_b (per-boundary-face bound on |b_j|),
    and evaluate(y1, y2, t) -> (d1, d2, b1, b2). Evaluation must be pure.
    """

    grid: Grid
    lambda_remin: float
    bound_d: np.ndarray
    bound_b: np.ndarray

    def evaluate(self, y1: np.ndarray, y2: np.ndarray, t: float):
        raise NotImplementedError


class PO4DOPModel(ReactionModel):
    """PO4-DOP reaction terms bound to a grid and a period."""

    def __init__(self, grid: Grid, params: PO4DOPParams, period: float):
        self.grid = grid
        self.params = params
        self.period = float(period)
        self.lambda_remin = params.remin_rate

        # exact export-profile integrals per aphotic cell, complement at the floor
        n_cols = grid.n_cols
        self._w_cell = np.zeros(grid.n_cells)
        self._w_bottom = np.ones(n_cols)
        beta, hbe = params.sinking_exponent, grid.h_bar_e
        for c in range(n_cols):
            s, e = grid.col_start[c], grid.col_start[c + 1]
            ne = grid.col_euphotic[c]
            if ne == e - s:
                continue  # shallow column: everything lands on the floor
            cells = np.arange(s + ne, e)
            ivals = list(zip(grid.cell_z_top[cells], grid.cell_z_bottom[cells]))
            w, wb = sinking_weights(ivals, beta, hbe)
            self._w_cell[cells] = w
            self._w_bottom[c] = wb

        self._light_profile = params.insolation.cell_profile(grid)
        self._dz = grid.cell_dz
        self._n_eu = grid.col_euphotic.astype(np.int64)

        nu, alpha = params.dop_fraction, params.max_uptake
        euph = grid.cell_zone == EUPHOTIC
        self.bound_d = np.where(
            euph, alpha,
            (1.0 - nu) * alpha * hbe * self._w_cell / np.maximum(self._dz, 1e-300))
        self.bound_b = np.full(grid.n_bfaces, (1.0 - nu) * alpha * hbe)

    def light_at(self, t: float) -> np.ndarray:
        phase = t / self.period - math.floor(t / self.period)
        return self._light_profile * self.params.insolation.time_factor(phase)

    def evaluate(self, y1, y2, t):
        g = self.grid
        y1 = np.asarray(y1, dtype=float)
        if y1.shape != (g.n_cells,):
            raise GridMismatchError("state size does not match model grid")
        p = self.params
        d1 = np.empty(g.n_cells)
        d2 = np.empty(g.n_cells)
        b1_bottom = np.empty(g.n_cols)
        _kernels.po4dop_terms(y1, self.light_at(t), self._dz, g.col_start,
                              self._n_eu, self._w_cell, self._w_bottom,
                              p.max_uptake, p.k_nutrient, p.k_light,
                              p.dop_fraction, d1, d2, b1_bottom)
        b1 = np.concatenate([np.zeros(g.n_cols), b1_bottom])
        b2 = np.zeros(g.n_bfaces)
        return d1, d2, b1, b2


def random_states(grid: Grid, n: int, rng, scale: float = 2.0,
                  include_negative: bool = True, period: float = 1.0):
    """Random probe states (y1, y2, t) for the check routines."""
    out = []
    for _ in range(n):
        y1 = scale * rng.standard_normal(grid.n_cells)
        y2 = scale * rng.standard_normal(grid.n_cells)
        if not include_negative:
            y1, y2 = np.abs(y1), np.abs(y2)
        out.append((y1, y2, float(rng.uniform(0.0, period))))
    return out


@dataclass
class BoundsReport:
    """Pointwise bound-check outcomes over probe states; report-only."""

    n_samples: int
    n_violations: int
    max_d_ratio: float           # max over samples of |d_j| / bound_d
    max_b_ratio: float
    violations: list             # (sample, kind, index, value, bound)

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def check_bounds(model: ReactionModel, grid: Grid, samples,
                 rel_slack: float = _REL_TOL) -> BoundsReport:
    """Verify |d_j| <= bound_d and |b_j| <= bound_b for every probe state."""
    viol = []
    max_d = 0.0
    max_b = 0.0
    d_cap = model.bound_d * (1.0 + rel_slack) + 1e-300
    b_cap = model.bound_b * (1.0 + rel_slack) + 1e-300
    for s_idx, (y1, y2, t) in enumerate(samples):
        d1, d2, b1, b2 = model.evaluate(y1, y2, t)
        for kind, arr, cap, bound in (("d1", d1, d_cap, model.bound_d),
                                      ("d2", d2, d_cap, model.bound_d),
                                      ("b1", b1, b_cap, model.bound_b),
                                      ("b2", b2, b_cap, model.bound_b)):
            a = np.abs(arr)
            ratio = a / np.maximum(bound, 1e-300)
            if kind[0] == "d":
                max_d = max(max_d, float(ratio.max()))
            else:
                max_b = max(max_b, float(ratio.max()))
            bad = np.nonzero(a > cap)[0]
            for i in bad:
                viol.append((s_idx, kind, int(i), float(arr[i]), float(bound[i])))
    return BoundsReport(n_samples=len(samples), n_violations=len(viol),
                        max_d_ratio=max_d, max_b_ratio=max_b, violations=viol)


@dataclass
class MassIdentityReport:
    """Discrete mass-identity residuals over probe states; report-only."""

    rel_residuals: np.ndarray
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.rel_residuals.max() <= self.tolerance) \
            if self.rel_residuals.size else True


def check_mass_identity(model: ReactionModel, grid: Grid, samples,
                        tol: float = _REL_TOL) -> MassIdentityReport:
    """Residual of sum_j [sum_cells vol*d_j + sum_faces area*b_j] per sample,
    relative to the volume-weighted magnitude of d1."""
    res = np.zeros(len(samples))
    for s_idx, (y1, y2, t) in enumerate(samples):
        d1, d2, b1, b2 = model.evaluate(y1, y2, t)
        total = (np.dot(grid.cell_volume, d1 + d2)
                 + np.dot(grid.bface_area, b1 + b2))
        scale = np.dot(grid.cell_volume, np.abs(d1))
        res[s_idx] = abs(total) / max(scale, 1e-300)
    return MassIdentityReport(rel_residuals=res, tolerance=tol)


def reaction_diagnostics_csv(bounds: BoundsReport, identity: MassIdentityReport,
                             path) -> None:
    """Per-sample residual/violation summary (dimensionless ratios)."""
    with open(path, "w") as fh:
        fh.write("sample,mass_identity_rel_residual\n")
        for i, r in enumerate(identity.rel_residuals):
            fh.write("%d,%.17g\n" % (i, r))
        fh.write("# bound_violations,%d\n" % bounds.n_violations)
        fh.write("# max_d_ratio,%.17g\n" % bounds.max_d_ratio)
        fh.write("# max_b_ratio,%.17g\n" % bounds.max_b_ratio)
        for v in bounds.violations[:100]:
            fh.write("# violation,%d,%s,%d,%.17g,%.17g\n" % v)
