"""Shared helpers: seeded random grids and standard small problems."""

import numpy as np
import pytest

from ndopspin.grid import Grid, build_grid
from ndopspin.transport import (assemble_transport, overturning_velocity,
                                uniform_diffusivity)

PERIOD = 3.1104e7  # 360 days in seconds


def random_grid(rng, nx_max=16, ny_max=16, n_layers_max=15,
                h_bar_e=100.0, require_shallow=False) -> Grid:
    """Random valid grid: global layer template, depths snapped to interfaces."""
    nx = int(rng.integers(1, nx_max + 1))
    ny = int(rng.integers(1, ny_max + 1))
    n_layers = int(rng.integers(2, n_layers_max + 1))
    # template: a couple of euphotic layers summing to h_bar_e, growing below
    n_eu = min(int(rng.integers(1, 3)), n_layers - 1)
    dz = [h_bar_e / n_eu] * n_eu
    grow = float(rng.uniform(1.1, 1.6))
    step = float(rng.uniform(0.5, 2.0)) * h_bar_e
    for _ in range(n_layers - n_eu):
        dz.append(step)
        step *= grow
    dz = np.asarray(dz)
    edges = np.concatenate([[0.0], np.cumsum(dz)])
    # depths: random interface at or below h_bar_e's index is allowed too
    idx = rng.integers(1, n_layers + 1, size=nx * ny)
    if require_shallow:
        idx[rng.integers(0, nx * ny)] = max(1, n_eu - 1) if n_eu > 1 else 1
        idx[rng.integers(0, nx * ny)] = n_eu  # exactly h_bar_e deep
    depths = edges[idx]
    dx = float(rng.uniform(5e3, 2e4))
    dy = float(rng.uniform(5e3, 2e4))
    return build_grid((nx, ny, dx, dy), depths, h_bar_e, dz)


def standard_operator(grid, n_time_steps=8, seasonal=0.3, amplitude=2e4,
                      kappa_v=1e-4, kappa_h=5e2, advection="upwind"):
    vel = overturning_velocity(grid, PERIOD, n_time_steps, amplitude, seasonal)
    diff = uniform_diffusivity(grid, PERIOD, n_time_steps, kappa_v, kappa_h)
    return assemble_transport(grid, vel, diff, advection=advection)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_grid():
    """2x2 columns, mixed shallow/deep, the hand-checked classification case."""
    depths = [80.0, 120.0, 200.0, 300.0]
    layers = [50.0, 30.0, 20.0, 20.0, 80.0, 100.0]
    return build_grid((2, 2, 1e4, 1e4), depths, 100.0, layers)


@pytest.fixture
def two_cell_grid():
    """Single column with one euphotic and one aphotic box."""
    return build_grid((1, 1, 1e4, 1e4), 400.0, 100.0, [100.0, 300.0])
