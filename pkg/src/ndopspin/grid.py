"""Layered 3D box grid of a water body with a euphotic/aphotic split.

The domain is a structured nx-by-ny horizontal mesh of columns; each column
is a stack of boxes cut from one global set of layer interfaces and reaches
down to its own bottom depth h. Cells above the euphotic depth are EUPHOTIC,
cells below are APHOTIC; the euphotic depth of a column is min(h_bar_e, h),
so shallow columns are euphotic all the way down.

Cell ids are contiguous per column, top to bottom, columns in row-major
(j * nx + i) order. Interior faces are enumerated z-faces first (per column,
top to bottom), then x-faces (j, then i, then layer), then y-faces.
"""

from dataclasses import dataclass, field

import numpy as np

# zone codes per cell
EUPHOTIC = 0
APHOTIC = 1
ZONE_NAMES = {EUPHOTIC: "EUPHOTIC", APHOTIC: "APHOTIC"}

# boundary face classes
SURFACE = 0
EUPHOTIC_BOTTOM = 1
APHOTIC_BOTTOM = 2
BOUNDARY_NAMES = {SURFACE: "SURFACE", EUPHOTIC_BOTTOM: "EUPHOTIC_BOTTOM",
                  APHOTIC_BOTTOM: "APHOTIC_BOTTOM"}

_ALIGN_RTOL = 1e-9


class GridConstructionError(ValueError):
    """Raised when a grid specification is inconsistent."""


class GridMismatchError(ValueError):
    """Raised when fields living on different grids are combined."""


@dataclass(frozen=True)
class Grid:
    """Immutable box grid; safe to share read-only across workers."""

    nx: int
    ny: int
    dx: float
    dy: float
    h_bar_e: float
    layer_edges: np.ndarray      # (K+1,) global interface depths, layer_edges[0] == 0
    col_depth: np.ndarray        # (n_cols,) bottom depth h per column
    col_layers: np.ndarray       # (n_cols,) cells per column
    col_euphotic: np.ndarray     # (n_cols,) euphotic cells per column
    col_start: np.ndarray        # (n_cols+1,) prefix offsets into cell arrays
    cell_column: np.ndarray      # (n_cells,)
    cell_layer: np.ndarray       # (n_cells,)
    cell_volume: np.ndarray      # (n_cells,) m^3
    cell_zone: np.ndarray        # (n_cells,) EUPHOTIC / APHOTIC
    face_cells: np.ndarray       # (n_faces, 2) interior faces, low-side cell first
    face_area: np.ndarray        # (n_faces,) m^2
    face_dist: np.ndarray        # (n_faces,) center-to-center distance, m
    face_axis: np.ndarray        # (n_faces,) 0=z (downward), 1=x, 2=y
    face_i: np.ndarray           # (n_faces,) low-side surface-cell i index
    face_j: np.ndarray           # (n_faces,) low-side surface-cell j index
    face_l: np.ndarray           # (n_faces,) low-side layer index
    bface_cell: np.ndarray       # (2*n_cols,) adjacent cell per boundary face
    bface_area: np.ndarray       # (2*n_cols,) m^2
    bface_class: np.ndarray      # (2*n_cols,) SURFACE / EUPHOTIC_BOTTOM / APHOTIC_BOTTOM
    total_volume: float = field(init=False, default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "total_volume", float(self.cell_volume.sum()))

    @property
    def n_cols(self) -> int:
        return self.nx * self.ny

    @property
    def n_cells(self) -> int:
        return self.cell_volume.size

    @property
    def n_faces(self) -> int:
        return self.face_area.size

    @property
    def n_bfaces(self) -> int:
        return self.bface_area.size

    @property
    def layer_dz(self) -> np.ndarray:
        return np.diff(self.layer_edges)

    @property
    def h_max(self) -> float:
        return float(self.layer_edges[-1])

    @property
    def col_h_e(self) -> np.ndarray:
        """Euphotic depth per column, min(h_bar_e, h)."""
        return np.minimum(self.h_bar_e, self.col_depth)

    @property
    def cell_z_top(self) -> np.ndarray:
        return self.layer_edges[self.cell_layer]

    @property
    def cell_z_bottom(self) -> np.ndarray:
        return self.layer_edges[self.cell_layer + 1]

    @property
    def cell_dz(self) -> np.ndarray:
        return self.cell_z_bottom - self.cell_z_top

    @property
    def cell_z_center(self) -> np.ndarray:
        return 0.5 * (self.cell_z_top + self.cell_z_bottom)

    @property
    def horizontal_area(self) -> float:
        return self.dx * self.dy

    def column_cells(self, col: int) -> np.ndarray:
        """Cell ids of one column, top to bottom."""
        return np.arange(self.col_start[col], self.col_start[col + 1])

    def bottom_cells(self) -> np.ndarray:
        """Deepest cell of every column."""
        return self.col_start[1:] - 1

    def summary_rows(self):
        """One row per cell: (id, i, j, layer, z_top, z_bot, volume, zone)."""
        cols = self.cell_column
        for cid in range(self.n_cells):
            c = cols[cid]
            yield (cid, int(c % self.nx), int(c // self.nx),
                   int(self.cell_layer[cid]),
                   float(self.cell_z_top[cid]), float(self.cell_z_bottom[cid]),
                   float(self.cell_volume[cid]), ZONE_NAMES[int(self.cell_zone[cid])])


@dataclass(frozen=True)
class TracerField:
    """Per-cell concentration field (mmol P m^-3) bound to its grid."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.n_cells,):
            raise GridMismatchError(
                f"field has {vals.shape} values, grid has {self.grid.n_cells} cells")
        if not np.all(np.isfinite(vals)):
            raise ValueError("tracer field contains non-finite values")


def _match_grid(*fields: TracerField) -> Grid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid is not g:
            raise GridMismatchError("fields live on different grids")
    return g


def mass(fields) -> float:
    """Total mass (mmol P): volume-weighted sum over all given components."""
    if isinstance(fields, TracerField):
        fields = (fields,)
    g = _match_grid(*fields)
    return float(sum(np.dot(g.cell_volume, f.values) for f in fields))


def project_zero_mass(fld: TracerField) -> TracerField:
    """Remove the volume-mean so the result has zero total mass; idempotent."""
    shift = mass(fld) / fld.grid.total_volume
    return TracerField(fld.values - shift, fld.grid)


def auto_layer_thicknesses(depths, h_bar_e: float, n_layers: int) -> np.ndarray:
    """Build a global layer-thickness template aligned with every depth.

    Breakpoints are the distinct column depths plus h_bar_e; each breakpoint
    interval is subdivided evenly so the total layer count is close to
    n_layers. Every column depth and the euphotic depth land exactly on an
    interface, which build_grid requires.
    """
    depths = np.atleast_1d(np.asarray(depths, dtype=float)).ravel()
    if np.any(depths <= 0):
        raise GridConstructionError("depths must be positive")
    if h_bar_e <= 0:
        raise GridConstructionError("h_bar_e must be positive")
    h_max = depths.max()
    marks = {float(d) for d in depths}
    if h_max > h_bar_e:
        marks.add(float(h_bar_e))
    edges = np.array(sorted(marks | {0.0}))
    if n_layers < edges.size - 1:
        n_layers = edges.size - 1
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        n_sub = max(1, int(round(n_layers * (b - a) / h_max)))
        out.extend([(b - a) / n_sub] * n_sub)
    return np.array(out)


def _resolve_layers(layers, depths: np.ndarray, h_bar_e: float) -> np.ndarray:
    if np.isscalar(layers):
        return auto_layer_thicknesses(depths, h_bar_e, int(layers))
    dz = np.asarray(layers, dtype=float)
    if dz.ndim != 1 or dz.size == 0 or np.any(dz <= 0):
        raise GridConstructionError("layer thicknesses must be a 1D positive sequence")
    return dz


def _edge_index(edges: np.ndarray, depth: float) -> int:
    """Index of the interface equal to `depth` (within tolerance), else -1."""
    k = int(np.argmin(np.abs(edges - depth)))
    if abs(edges[k] - depth) <= _ALIGN_RTOL * max(depth, 1.0):
        return k
    return -1


def build_grid(surface_spec, depth_map, h_bar_e: float, layers) -> Grid:
    """Construct a Grid.

    surface_spec: (nx, ny, dx, dy) horizontal mesh description.
    depth_map: bottom depth per surface cell, scalar or (ny, nx) array or
        flat array in row-major (j * nx + i) order; each depth must coincide
        with a layer interface.
    h_bar_e: maximum euphotic depth (m); must be a layer interface wherever
        a column is deeper than it.
    layers: global layer-thickness sequence, or an int layer-count hint from
        which a template is derived (auto_layer_thicknesses).
    """
    nx, ny, dx, dy = surface_spec
    nx, ny = int(nx), int(ny)
    dx, dy = float(dx), float(dy)
    if nx < 1 or ny < 1 or dx <= 0 or dy <= 0:
        raise GridConstructionError("surface mesh must have positive extent")
    if h_bar_e <= 0:
        raise GridConstructionError("h_bar_e must be positive")

    n_cols = nx * ny
    if np.isscalar(depth_map):
        depths = np.full(n_cols, float(depth_map))
    else:
        depths = np.asarray(depth_map, dtype=float)
        if depths.shape == (ny, nx):
            depths = depths.ravel()
        elif depths.shape != (n_cols,):
            raise GridConstructionError(
                f"depth_map shape {depths.shape} does not match {ny}x{nx} surface mesh")
        depths = depths.copy()
    if np.any(depths <= 0):
        raise GridConstructionError("column depths must be positive")

    dz = _resolve_layers(layers, depths, h_bar_e)
    edges = np.concatenate([[0.0], np.cumsum(dz)])
    if depths.max() > edges[-1] * (1 + _ALIGN_RTOL):
        raise GridConstructionError(
            f"deepest column ({depths.max():g} m) exceeds layer template "
            f"({edges[-1]:g} m)")

    he_edge = _edge_index(edges, h_bar_e)
    col_layers = np.empty(n_cols, dtype=np.int64)
    col_euphotic = np.empty(n_cols, dtype=np.int64)
    for c in range(n_cols):
        k = _edge_index(edges, depths[c])
        if k < 1:
            raise GridConstructionError(
                f"column {c}: depth {depths[c]:g} m is not a layer interface")
        col_layers[c] = k
        if depths[c] <= h_bar_e * (1 + _ALIGN_RTOL):
            col_euphotic[c] = k
        else:
            if he_edge < 1:
                raise GridConstructionError(
                    f"column {c}: h_bar_e={h_bar_e:g} m is not a layer interface "
                    f"but the column is {depths[c]:g} m deep")
            col_euphotic[c] = he_edge
    depths = edges[col_layers]  # snap to interfaces

    col_start = np.zeros(n_cols + 1, dtype=np.int64)
    np.cumsum(col_layers, out=col_start[1:])
    n_cells = int(col_start[-1])

    cell_column = np.repeat(np.arange(n_cols), col_layers)
    cell_layer = np.concatenate([np.arange(k) for k in col_layers])
    cell_volume = dx * dy * dz[cell_layer]
    cell_zone = np.where(cell_layer < col_euphotic[cell_column], EUPHOTIC, APHOTIC)
    cell_zone = cell_zone.astype(np.uint8)

    # interior faces: z first, then x, then y
    fc, fa, fd, fx, fi, fj, fl = [], [], [], [], [], [], []

    def add(a, b, area, dist, axis, i, j, l):
        fc.append((a, b)); fa.append(area); fd.append(dist)
        fx.append(axis); fi.append(i); fj.append(j); fl.append(l)

    for c in range(n_cols):
        i, j = c % nx, c // nx
        s = col_start[c]
        for l in range(col_layers[c] - 1):
            add(s + l, s + l + 1, dx * dy, 0.5 * (dz[l] + dz[l + 1]), 0, i, j, l)
    for j in range(ny):
        for i in range(nx - 1):
            ca, cb = j * nx + i, j * nx + i + 1
            for l in range(min(col_layers[ca], col_layers[cb])):
                add(col_start[ca] + l, col_start[cb] + l, dy * dz[l], dx, 1, i, j, l)
    for j in range(ny - 1):
        for i in range(nx):
            ca, cb = j * nx + i, (j + 1) * nx + i
            for l in range(min(col_layers[ca], col_layers[cb])):
                add(col_start[ca] + l, col_start[cb] + l, dx * dz[l], dy, 2, i, j, l)

    face_cells = np.array(fc, dtype=np.int64).reshape(-1, 2)
    # boundary faces: 0..n_cols-1 surface, n_cols..2n_cols-1 bottom
    bface_cell = np.concatenate([col_start[:-1], col_start[1:] - 1])
    bface_area = np.full(2 * n_cols, dx * dy)
    bot_class = np.where(depths <= h_bar_e * (1 + _ALIGN_RTOL),
                         EUPHOTIC_BOTTOM, APHOTIC_BOTTOM)
    bface_class = np.concatenate([np.full(n_cols, SURFACE), bot_class]).astype(np.uint8)

    g = Grid(nx=nx, ny=ny, dx=dx, dy=dy, h_bar_e=float(h_bar_e),
             layer_edges=edges, col_depth=depths, col_layers=col_layers,
             col_euphotic=col_euphotic, col_start=col_start,
             cell_column=cell_column, cell_layer=cell_layer,
             cell_volume=cell_volume, cell_zone=cell_zone,
             face_cells=face_cells,
             face_area=np.array(fa), face_dist=np.array(fd),
             face_axis=np.array(fx, dtype=np.uint8),
             face_i=np.array(fi, dtype=np.int64),
             face_j=np.array(fj, dtype=np.int64),
             face_l=np.array(fl, dtype=np.int64),
             bface_cell=bface_cell, bface_area=bface_area, bface_class=bface_class)

    column_volume = dx * dy * depths.sum()
    if abs(g.total_volume - column_volume) > 1e-12 * column_volume:
        raise GridConstructionError("cell volumes do not sum to the column volume")
    return g


def grid_summary_csv(g: Grid, path) -> None:
    """Write the per-cell summary table; units are m and m^3."""
    with open(path, "w") as fh:
        fh.write("cell_id,i,j,layer,z_top_m,z_bottom_m,volume_m3,zone\n")
        for row in g.summary_rows():
            fh.write("%d,%d,%d,%d,%.17g,%.17g,%.17g,%s\n" % row)
