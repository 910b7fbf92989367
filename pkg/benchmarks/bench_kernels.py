"""Benchmark the numba kernels against their pure-numpy/python fallbacks.

Run:  python benchmarks/bench_kernels.py
The same selection is exposed at runtime through NDOPSPIN_NUMBA=0, which
forces the whole package onto the fallback path.
"""

import math
import time

import numpy as np

from ndopspin import _accel, _kernels
from ndopspin.grid import build_grid
from ndopspin.reactions import PO4DOPModel, PO4DOPParams


def timeit(fn, repeat):
    fn()  # warm-up (JIT compile / cache load)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_reaction_terms():
    layers = [50.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0,
              450.0, 500.0, 550.0, 600.0, 650.0, 700.0]
    edges = np.concatenate([[0.0], np.cumsum(layers)])
    rng = np.random.default_rng(0)
    depths = edges[rng.integers(2, 16, size=16 * 16)]
    g = build_grid((16, 16, 1e4, 1e4), depths, 100.0, layers)
    model = PO4DOPModel(g, PO4DOPParams(), 3.1104e7)
    p = model.params
    y1 = rng.uniform(0.0, 2.0, g.n_cells)
    light = model.light_at(1e6)
    d1 = np.empty(g.n_cells)
    d2 = np.empty(g.n_cells)
    b1 = np.empty(g.n_cols)
    args = (y1, light, model._dz, g.col_start, model._n_eu, model._w_cell,
            model._w_bottom, p.max_uptake, p.k_nutrient, p.k_light,
            p.dop_fraction, d1, d2, b1)
    rows = []
    if _accel.USE_NUMBA:
        rows.append(("reaction terms, numba",
                     timeit(lambda: _kernels.po4dop_terms(*args), 200)))
    rows.append(("reaction terms, numpy",
                 timeit(lambda: _kernels.po4dop_terms_numpy(*args), 200)))
    rows.append(("reaction terms, python loop",
                 timeit(lambda: _kernels.po4dop_terms_loop(*args), 20)))
    return g.n_cells, rows


def bench_orbit_stepper():
    n_steps = 40960
    dt = 3.1104e7 / n_steps
    q, v1, v2, lam = 10.0, 1e10, 3e10, 1.6e-8
    lmat = np.array([
        [-q / v1, q / v1, lam, 0.0],
        [q / v2, -q / v2, 0.0, lam],
        [0.0, 0.0, -q / v1 - lam, q / v1],
        [0.0, 0.0, q / v2, -q / v2 - lam]])
    eye = np.eye(4)
    theta = 0.5
    m_inv = np.linalg.inv(eye - theta * dt * lmat)
    m_expl = eye + (1.0 - theta) * dt * lmat
    gvec = np.array([-1.0, 1.0 / 3.0 * 0.33, 0.67, 0.0])
    light = np.array([73.6 * 0.5 * (1 + math.sin(2 * math.pi * k / n_steps))
                      for k in range(n_steps + 1)])

    def run(fn):
        y = np.array([1.3, 0.9, 0.05, 0.01])
        fn(y, n_steps, theta, dt, m_inv, m_expl, gvec, light,
           1.5e-8, 0.5, 30.0, 1e-14)

    rows = []
    if _accel.USE_NUMBA:
        rows.append(("two-box period map, numba",
                     timeit(lambda: run(_kernels.orbit_theta_steps), 10)))
    rows.append(("two-box period map, python loop",
                 timeit(lambda: run(_kernels.orbit_theta_steps_python), 2)))
    return n_steps, rows


def main():
    print(f"numba available and enabled: {_accel.USE_NUMBA}")
    n_cells, rows = bench_reaction_terms()
    print(f"\nPO4-DOP reaction terms on a {n_cells}-cell grid:")
    base = rows[0][1]
    for name, t in rows:
        print(f"  {name:34s} {t * 1e6:10.1f} us   x{t / base:8.1f}")
    n_steps, rows = bench_orbit_stepper()
    print(f"\nTwo-box theta-scheme period map, {n_steps} steps:")
    base = rows[0][1]
    for name, t in rows:
        print(f"  {name:34s} {t * 1e3:10.2f} ms   x{t / base:8.1f}")


if __name__ == "__main__":
    main()
