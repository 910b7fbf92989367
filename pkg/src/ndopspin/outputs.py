"""Result files: trajectory CSV, binary restart snapshots, plots."""

import numpy as np

from .grid import Grid
from .solver import SolveReport, TracerState
from .svgplot import line_plot


def write_trajectory_csv(state: TracerState, path) -> None:
    """Long-format trajectory: one row per (time node, cell)."""
    with open(path, "w") as fh:
        fh.write("time_node,time_s,cell_id,nutrient_mmolP_m3,dop_mmolP_m3\n")
        dt = state.dt
        for k in range(state.n_nodes):
            t = k * dt
            y1k = state.y1[k]
            y2k = state.y2[k]
            for c in range(state.grid.n_cells):
                fh.write("%d,%.17g,%d,%.17g,%.17g\n" % (k, t, c, y1k[c], y2k[c]))


def save_state(state: TracerState, path) -> None:
    """Binary snapshot for restarts."""
    np.savez(path, y1=state.y1, y2=state.y2,
             period=state.period, n_time_steps=state.n_time_steps)


def load_state(path, grid: Grid) -> TracerState:
    with np.load(path) as data:
        y1 = data["y1"]
        y2 = data["y2"]
        period = float(data["period"])
        n_time_steps = int(data["n_time_steps"])
    if y1.shape != (n_time_steps + 1, grid.n_cells):
        raise ValueError(f"snapshot shape {y1.shape} does not match the grid/steps")
    return TracerState(grid, period, n_time_steps, y1, y2)


def write_mass_plot(state: TracerState, total_mass: float, path) -> None:
    t_days = np.arange(state.n_nodes) * state.dt / 86400.0
    series = [("mass(y(t)) - C", t_days, state.mass_series() - total_mass)]
    line_plot(path, series, title="Total mass drift over one period",
              xlabel="time (days)", ylabel="mass drift (mmol P)")


def write_residual_plot(report: SolveReport, path) -> None:
    its = np.arange(len(report.outer_history))
    line_plot(path, [("fixed-point residual", its, np.array(report.outer_history))],
              title="Outer iteration history", xlabel="iteration",
              ylabel="relative residual", logy=True)


def horizontal_mean_profiles(state: TracerState) -> tuple:
    """Volume-weighted horizontal average per layer, time-averaged: (z, y1, y2)."""
    g = state.grid
    n_layers = g.layer_dz.size
    vol_per_layer = np.zeros(n_layers)
    np.add.at(vol_per_layer, g.cell_layer, g.cell_volume)
    y1m = np.zeros(n_layers)
    y2m = np.zeros(n_layers)
    y1t = state.y1[:-1].mean(axis=0)
    y2t = state.y2[:-1].mean(axis=0)
    np.add.at(y1m, g.cell_layer, g.cell_volume * y1t)
    np.add.at(y2m, g.cell_layer, g.cell_volume * y2t)
    wet = vol_per_layer > 0
    z = 0.5 * (g.layer_edges[:-1] + g.layer_edges[1:])[wet]
    return z, y1m[wet] / vol_per_layer[wet], y2m[wet] / vol_per_layer[wet]


def write_profile_plot(state: TracerState, path) -> None:
    z, y1m, y2m = horizontal_mean_profiles(state)
    line_plot(path, [("nutrient", z, y1m), ("DOP", z, y2m)],
              title="Horizontally averaged tracers (period mean)",
              xlabel="depth (m)", ylabel="concentration (mmol P m^-3)")
