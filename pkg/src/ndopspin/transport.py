"""Discrete advection-diffusion operator on the box grid.

The operator acts on concentrations: with V the diagonal of cell volumes,
the semi-discrete tracer equation reads dy/dt + B(t) y = f. B is assembled
per time node from face data; diffusion uses two-point face fluxes, advection
either first-order upwind (default, unconditionally monotone) or centered
face averages. Boundary faces carry no transport flux; boundary exchange
enters through the reaction terms only.

Discrete counterparts of the operator's structural properties, all checked
by check_operator_properties: volume-weighted column sums vanish (mass
conservation), constants are in the kernel, the volume-weighted quadratic
form is positive semidefinite, and for pure diffusion it dominates
kappa_min times the squared gradient seminorm.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import Grid, GridMismatchError, TracerField

DIV_TOL = 1e-12


class AssemblyError(ValueError):
    """Velocity field rejected at assembly; carries per-cell residuals."""

    def __init__(self, msg, cell_residuals=None):
        super().__init__(msg)
        self.cell_residuals = cell_residuals


@dataclass(frozen=True)
class VelocityField:
    """Normal volume fluxes (m^3 s^-1) on interior faces, per time node.

    fluxes[k, f] is the flux through face f during step k, positive from the
    face's low-side cell to its high-side cell. Row n_time_steps must equal
    row 0 (periodic). Boundary faces are not represented, so the zero
    normal-flux condition holds structurally.
    """

    grid: Grid
    period: float
    n_time_steps: int
    fluxes: np.ndarray  # (n_time_steps + 1, n_faces)

    def __post_init__(self):
        if self.fluxes.shape != (self.n_time_steps + 1, self.grid.n_faces):
            raise ValueError("flux array shape does not match grid/time nodes")
        if not np.array_equal(self.fluxes[0], self.fluxes[-1]):
            raise ValueError("velocity is not periodic: node 0 != node n")


@dataclass(frozen=True)
class DiffusivityField:
    """Face diffusivities kappa (m^2 s^-1) per time node, with a positive floor."""

    grid: Grid
    period: float
    n_time_steps: int
    kappa: np.ndarray  # (n_time_steps + 1, n_faces)

    def __post_init__(self):
        if self.kappa.shape != (self.n_time_steps + 1, self.grid.n_faces):
            raise ValueError("kappa array shape does not match grid/time nodes")
        if np.any(self.kappa <= 0):
            raise ValueError("kappa must be strictly positive everywhere")
        if not np.array_equal(self.kappa[0], self.kappa[-1]):
            raise ValueError("diffusivity is not periodic: node 0 != node n")

    @property
    def kappa_min(self) -> float:
        return float(self.kappa.min())


def _seasonal_factor(k: int, n: int, seasonal: float) -> float:
    # k % n makes node n bit-identical to node 0
    return 1.0 + seasonal * np.sin(2.0 * np.pi * (k % n) / n)


def overturning_velocity(grid: Grid, period: float, n_time_steps: int,
                         amplitude: float, seasonal: float = 0.0) -> VelocityField:
    """Built-in overturning circulation, exactly divergence-free.

    A volume stream function (m^3 s^-1) is prescribed at the cell corners of
    every x-z slice and zeroed on all corners touching the boundary or dry
    cells; face fluxes are corner differences, so the discrete divergence of
    every cell telescopes to zero and no boundary face carries flux. The
    amplitude is modulated across slices and, when seasonal > 0, in time.
    """
    nx, ny = grid.nx, grid.ny
    edges = grid.layer_edges
    h_max = grid.h_max
    n_faces = grid.n_faces
    kmax = edges.size - 1

    base = np.zeros(n_faces)
    # corner stream function per slice, masked to the wet interior
    for j in range(ny):
        layers = grid.col_layers[j * nx:(j + 1) * nx]
        psi = np.zeros((nx + 1, kmax + 1))
        amp_j = amplitude * np.sin(np.pi * (j + 0.5) / ny)
        for i in range(1, nx):
            lmax = min(layers[i - 1], layers[i])  # corners need wet cells both sides
            for l in range(1, lmax):
                psi[i, l] = (amp_j * np.sin(np.pi * i / nx)
                             * np.sin(np.pi * edges[l] / h_max))
        # z-faces: low cell at layer l, interface l+1, positive downward
        zsel = (grid.face_axis == 0) & (grid.face_j == j)
        fi, fl = grid.face_i[zsel], grid.face_l[zsel]
        base[zsel] = psi[fi, fl + 1] - psi[fi + 1, fl + 1]
        # x-faces: low cell i, interface i+1, positive in +x
        xsel = (grid.face_axis == 1) & (grid.face_j == j)
        fi, fl = grid.face_i[xsel], grid.face_l[xsel]
        base[xsel] = psi[fi + 1, fl + 1] - psi[fi + 1, fl]
        # y-faces stay zero: slices do not exchange volume

    n = n_time_steps
    if seasonal == 0.0:
        flux = np.broadcast_to(base, (n + 1, n_faces)).copy()
    else:
        flux = np.empty((n + 1, n_faces))
        for k in range(n + 1):
            flux[k] = base * _seasonal_factor(k, n, seasonal)
    return VelocityField(grid=grid, period=period, n_time_steps=n, fluxes=flux)


def zero_velocity(grid: Grid, period: float, n_time_steps: int) -> VelocityField:
    return VelocityField(grid=grid, period=period, n_time_steps=n_time_steps,
                         fluxes=np.zeros((n_time_steps + 1, grid.n_faces)))


def uniform_diffusivity(grid: Grid, period: float, n_time_steps: int,
                        kappa_vertical: float, kappa_horizontal: float) -> DiffusivityField:
    """Constant-in-time diffusivity: one value on z-faces, one on x/y-faces."""
    kap = np.where(grid.face_axis == 0, kappa_vertical, kappa_horizontal)
    kap = np.broadcast_to(kap, (n_time_steps + 1, grid.n_faces)).copy()
    return DiffusivityField(grid=grid, period=period, n_time_steps=n_time_steps,
                            kappa=kap)


@dataclass
class VelocityReport:
    """Divergence residuals of a velocity field; report-only."""

    max_rel_divergence: float
    cell_rel_divergence: np.ndarray  # (n_nodes, n_cells)
    max_boundary_flux: float         # structurally 0: boundary faces carry none
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_divergence <= self.tolerance

    def worst_cells(self, count=5):
        flat = self.cell_rel_divergence.max(axis=0)
        order = np.argsort(flat)[::-1][:count]
        return [(int(c), float(flat[c])) for c in order]


def _divergence(grid: Grid, flux_row: np.ndarray) -> np.ndarray:
    div = np.zeros(grid.n_cells)
    np.add.at(div, grid.face_cells[:, 0], flux_row)
    np.subtract.at(div, grid.face_cells[:, 1], flux_row)
    return div


def verify_velocity(grid: Grid, vel: VelocityField, tol: float = DIV_TOL) -> VelocityReport:
    """Per-cell, per-node relative divergence residuals against tol."""
    n_nodes = vel.n_time_steps + 1
    rel = np.zeros((n_nodes, grid.n_cells))
    for k in range(n_nodes):
        q = vel.fluxes[k]
        div = _divergence(grid, q)
        scale = np.zeros(grid.n_cells)
        np.add.at(scale, grid.face_cells[:, 0], np.abs(q))
        np.add.at(scale, grid.face_cells[:, 1], np.abs(q))
        rel[k] = np.abs(div) / np.maximum(scale, 1e-300)
        rel[k][scale == 0.0] = 0.0
    return VelocityReport(max_rel_divergence=float(rel.max()),
                          cell_rel_divergence=rel,
                          max_boundary_flux=0.0, tolerance=tol)


@dataclass(frozen=True)
class TransportOperator:
    """Time-indexed sparse operator B; immutable, apply() is pure."""

    grid: Grid
    period: float
    n_time_steps: int
    matrices: tuple            # n_time_steps + 1 CSR matrices; [n] is [0]
    kappa_min: float
    advective: bool
    advection: str

    def apply(self, t_index: int, y) -> np.ndarray:
        if not 0 <= t_index <= self.n_time_steps:
            raise IndexError(f"time index {t_index} outside 0..{self.n_time_steps}")
        vals = y.values if isinstance(y, TracerField) else np.asarray(y)
        if vals.shape != (self.grid.n_cells,):
            raise GridMismatchError("field size does not match operator grid")
        return self.matrices[t_index] @ vals

    def inf_norms(self) -> np.ndarray:
        return np.array([abs(m).sum(axis=1).max() for m in self.matrices])


def _assemble_node(grid: Grid, q: np.ndarray, kap: np.ndarray, advection: str):
    a = grid.face_cells[:, 0]
    b = grid.face_cells[:, 1]
    g = kap * grid.face_area / grid.face_dist
    rows = [a, a, b, b]
    cols = [a, b, a, b]
    data = [g, -g, -g, g]
    if advection == "upwind":
        qp = np.maximum(q, 0.0)
        qm = np.maximum(-q, 0.0)
        rows += [a, a, b, b]
        cols += [a, b, b, a]
        data += [qp, -qm, qm, -qp]
    elif advection == "centered":
        half = 0.5 * q
        rows += [a, a, b, b]
        cols += [a, b, a, b]
        data += [half, half, -half, -half]
    else:
        raise ValueError(f"unknown advection scheme {advection!r}")
    n = grid.n_cells
    w = sp.coo_matrix((np.concatenate(data),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    inv_v = sp.diags(1.0 / grid.cell_volume)
    m = (inv_v @ w).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def assemble_transport(grid: Grid, vel: VelocityField, diff: DiffusivityField,
                       advection: str = "upwind",
                       check_divergence: bool = True) -> TransportOperator:
    """Assemble B(t) for every time node.

    Refuses non-divergence-free velocities (carrying the per-cell residual
    report) unless check_divergence is disabled. Nodes with identical face
    data share one matrix object, so B at node n equals B at node 0
    bit-for-bit and steady fields cost a single assembly.
    """
    if vel.grid is not grid or diff.grid is not grid:
        raise GridMismatchError("velocity/diffusivity grid does not match")
    if vel.n_time_steps != diff.n_time_steps:
        raise ValueError("velocity and diffusivity disagree on time steps")
    if check_divergence:
        rep = verify_velocity(grid, vel)
        if not rep.passed:
            raise AssemblyError(
                f"velocity not divergence-free: max relative residual "
                f"{rep.max_rel_divergence:.3e} > {rep.tolerance:g} "
                f"(worst cells {rep.worst_cells()})",
                cell_residuals=rep.cell_rel_divergence)

    n = vel.n_time_steps
    matrices = []
    seen = {}
    for k in range(n + 1):
        key = (vel.fluxes[k].tobytes(), diff.kappa[k].tobytes())
        if key not in seen:
            seen[key] = _assemble_node(grid, vel.fluxes[k], diff.kappa[k], advection)
        matrices.append(seen[key])
    return TransportOperator(grid=grid, period=vel.period, n_time_steps=n,
                             matrices=tuple(matrices), kappa_min=diff.kappa_min,
                             advective=bool(np.any(vel.fluxes != 0.0)),
                             advection=advection)


def gradient_seminorm_sq(grid: Grid, y: np.ndarray) -> float:
    """Discrete squared gradient seminorm: sum over faces of A/d (dy)^2."""
    dy = y[grid.face_cells[:, 1]] - y[grid.face_cells[:, 0]]
    return float(np.sum(grid.face_area / grid.face_dist * dy * dy))


@dataclass
class OperatorCheckReport:
    """Structural checks of an assembled operator; report-only."""

    colsum_rel: np.ndarray        # (n_nodes,) mass-conservation residual
    const_kernel_rel: np.ndarray  # (n_nodes,) ||B 1|| / ||B||
    min_quadform: float           # min over battery of y'VBy / (y'Vy ||B||)
    min_coercivity_gap: float     # min of (y'VBy - kmin*|grad y|^2), pure diffusion only
    norms: np.ndarray             # (n_nodes,) inf-norms of B
    tolerance: float
    coercivity_checked: bool

    @property
    def passed(self) -> bool:
        ok = (self.colsum_rel.max() <= self.tolerance
              and self.const_kernel_rel.max() <= self.tolerance
              and self.min_quadform >= -self.tolerance)
        if self.coercivity_checked:
            ok = ok and self.min_coercivity_gap >= -self.tolerance
        return ok


def check_operator_properties(op: TransportOperator, n_random: int = 100,
                              seed: int = 0, tol: float = DIV_TOL) -> OperatorCheckReport:
    """Verify conservation, constant kernel, monotonicity, and (for pure
    diffusion) the kappa_min coercivity bound, on a random-vector battery."""
    g = op.grid
    v = g.cell_volume
    rng = np.random.default_rng(seed)
    norms = op.inf_norms()
    n_nodes = op.n_time_steps + 1

    colsum_rel = np.zeros(n_nodes)
    const_rel = np.zeros(n_nodes)
    min_quad = np.inf
    min_gap = np.inf
    ones = np.ones(g.n_cells)
    ys = rng.standard_normal((n_random, g.n_cells))
    for k in range(n_nodes):
        m = op.matrices[k]
        vb = sp.diags(v) @ m
        col = np.asarray(vb.sum(axis=0)).ravel()
        col_scale = np.asarray(abs(vb).sum(axis=0)).ravel().max()
        colsum_rel[k] = np.abs(col).max() / max(col_scale, 1e-300)
        const_rel[k] = np.abs(m @ ones).max() / max(norms[k], 1e-300)
        for y in ys:
            by = m @ y
            quad = float(np.dot(y * v, by))
            yv = float(np.dot(y * v, y))
            min_quad = min(min_quad, quad / (yv * max(norms[k], 1e-300)))
            if not op.advective:
                gap = quad - op.kappa_min * gradient_seminorm_sq(g, y)
                min_gap = min(min_gap, gap / max(abs(quad), 1e-300))
    return OperatorCheckReport(colsum_rel=colsum_rel, const_kernel_rel=const_rel,
                               min_quadform=float(min_quad),
                               min_coercivity_gap=float(min_gap if not op.advective else 0.0),
                               norms=norms, tolerance=tol,
                               coercivity_checked=not op.advective)


def operator_diagnostics_csv(rep: OperatorCheckReport, path) -> None:
    """Per-node diagnostics table (dimensionless residuals, 1/s norms)."""
    with open(path, "w") as fh:
        fh.write("t_index,colsum_rel,const_kernel_rel,inf_norm_per_s\n")
        for k in range(rep.norms.size):
            fh.write("%d,%.17g,%.17g,%.17g\n"
                     % (k, rep.colsum_rel[k], rep.const_kernel_rel[k], rep.norms[k]))
        fh.write("# min_quadform_normalized,%.17g\n" % rep.min_quadform)
        if rep.coercivity_checked:
            fh.write("# min_coercivity_gap_rel,%.17g\n" % rep.min_coercivity_gap)
