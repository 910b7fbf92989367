"""Reaction terms: uptake saturation, export weights, mass identity, bounds."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from ndopspin.grid import APHOTIC, EUPHOTIC, build_grid
from ndopspin.reactions import (InsolationSpec, PO4DOPModel, PO4DOPParams,
                                ReactionModel, check_bounds, check_mass_identity,
                                random_states, sinking_weights, uptake_G)
from ndopspin import _kernels

from conftest import PERIOD, random_grid

ALPHA, KP, KI = 2e-8, 0.5, 30.0


def _model(grid, **kw):
    ins = kw.pop("insolation", InsolationSpec(kind="smooth", surface_value=200.0))
    return PO4DOPModel(grid, PO4DOPParams(insolation=ins, **kw), PERIOD)


class TestUptake:
    def test_zero_concentration(self):
        assert uptake_G(0.0, 50.0, ALPHA, KP, KI) == 0.0

    def test_zero_light(self):
        assert uptake_G(1.3, 0.0, ALPHA, KP, KI) == 0.0

    def test_half_saturation_point(self):
        # y1 = K_P and I = K_I halve the rate twice
        assert uptake_G(KP, KI, ALPHA, KP, KI) == pytest.approx(ALPHA / 4, rel=1e-15)

    def test_bounded_by_alpha(self, rng):
        y = 1e3 * rng.standard_normal(5000)
        light = 1e3 * rng.standard_normal(5000)
        g = uptake_G(y, light, ALPHA, KP, KI)
        assert np.all(np.abs(g) <= ALPHA)

    def test_monotone_for_nonnegative(self, rng):
        y = np.sort(rng.uniform(0, 10, size=200))
        g = uptake_G(y, 80.0, ALPHA, KP, KI)
        assert np.all(np.diff(g) >= 0)

    def test_lipschitz_bound(self, rng):
        a = rng.uniform(0, 5, size=500)
        b = rng.uniform(0, 5, size=500)
        ga = uptake_G(a, 120.0, ALPHA, KP, KI)
        gb = uptake_G(b, 120.0, ALPHA, KP, KI)
        assert np.all(np.abs(ga - gb) <= ALPHA / KP * np.abs(a - b) + 1e-25)


class TestSinkingWeights:
    def test_no_aphotic_cells(self):
        w, wb = sinking_weights([], 0.858, 100.0)
        assert w.size == 0 and wb == 1.0

    def test_single_cell_beta_one(self):
        # beta=1, h = 2 h_bar_e: cell and bottom each carry one half
        w, wb = sinking_weights([(100.0, 200.0)], 1.0, 100.0)
        assert w[0] == pytest.approx(0.5, rel=1e-15)
        assert wb == pytest.approx(0.5, rel=1e-15)

    def test_sum_exactly_one(self, rng):
        for _ in range(50):
            hbe = float(rng.uniform(20, 200))
            edges = hbe * np.cumprod(np.concatenate(
                [[1.0], rng.uniform(1.05, 1.9, size=rng.integers(1, 12))]))
            ivals = list(zip(edges[:-1], edges[1:]))
            w, wb = sinking_weights(ivals, float(rng.uniform(0.1, 3.0)), hbe)
            assert abs(math.fsum(list(w) + [wb]) - 1.0) <= 1e-15

    def test_matches_adaptive_quadrature(self, rng):
        hbe = 100.0
        beta = 0.858
        edges = np.array([100.0, 160.0, 250.0, 420.0, 800.0])
        w, wb = sinking_weights(list(zip(edges[:-1], edges[1:])), beta, hbe)
        profile = lambda x: beta / hbe * (x / hbe) ** (-beta - 1.0)
        for i in range(4):
            ref, err = quad(profile, edges[i], edges[i + 1], epsabs=1e-13)
            assert abs(w[i] - ref) <= 1e-10
        ref_bottom = (edges[-1] / hbe) ** (-beta)
        assert abs(wb - ref_bottom) <= 1e-12

    def test_weights_in_unit_interval_decreasing(self, rng):
        edges = 100.0 * np.array([1.0, 1.5, 2.25, 3.375, 5.0])
        w, wb = sinking_weights(list(zip(edges[:-1], edges[1:])), 1.2, 100.0)
        assert np.all(w >= 0) and np.all(w <= 1) and 0 <= wb <= 1
        assert np.all(np.diff(w) < 0)

    def test_column_must_start_at_euphotic_depth(self):
        with pytest.raises(ValueError, match="h_bar_e"):
            sinking_weights([(150.0, 300.0)], 1.0, 100.0)

    def test_gap_rejected(self):
        with pytest.raises(ValueError, match="contiguous"):
            sinking_weights([(100.0, 200.0), (250.0, 300.0)], 1.0, 100.0)

    def test_bad_beta(self):
        with pytest.raises(ValueError):
            sinking_weights([(100.0, 200.0)], 0.0, 100.0)


class TestEvaluate:
    def test_zero_state_gives_zero_terms(self, small_grid):
        m = _model(small_grid)
        z = np.zeros(small_grid.n_cells)
        for arr in m.evaluate(z, z, 0.3 * PERIOD):
            assert np.all(arr == 0.0)

    def test_shallow_column_balance(self):
        # h <= h_bar_e: boundary export exactly balances net volume uptake
        g = build_grid((1, 1, 1e4, 1e4), 80.0, 100.0, [40.0, 40.0])
        m = _model(g)
        rng = np.random.default_rng(7)
        y1 = rng.uniform(0.1, 3.0, g.n_cells)
        d1, d2, b1, b2 = m.evaluate(y1, np.zeros_like(y1), 0.2 * PERIOD)
        total = (np.dot(g.cell_volume, d1 + d2) + np.dot(g.bface_area, b1 + b2))
        scale = np.dot(g.cell_volume, np.abs(d1))
        assert abs(total) <= 1e-13 * scale

    def test_deep_column_export_telescopes(self, two_cell_grid):
        g = two_cell_grid
        m = _model(g)
        y1 = np.array([2.0, 0.7])
        t = 0.1 * PERIOD
        d1, d2, b1, b2 = m.evaluate(y1, np.zeros(2), t)
        # independent uptake integral over the euphotic cell
        light = m.light_at(t)
        u = g.cell_dz[0] * uptake_G(y1[0], light[0],
                                    m.params.max_uptake, m.params.k_nutrient,
                                    m.params.k_light)
        area = g.horizontal_area
        got = g.cell_volume[1] * d1[1] + area * b1[g.n_cols + 0]
        expect = -(1.0 - m.params.dop_fraction) * area * u
        assert got == pytest.approx(expect, rel=1e-13)

    def test_signs_in_euphotic_zone(self, small_grid, rng):
        m = _model(small_grid)
        y1 = np.abs(rng.standard_normal(small_grid.n_cells))
        d1, d2, b1, b2 = m.evaluate(y1, np.zeros_like(y1), 0.1 * PERIOD)
        euph = small_grid.cell_zone == EUPHOTIC
        assert np.all(d1[euph] >= 0)
        assert np.all(d2[euph] <= 0)

    def test_dop_terms_vanish_where_required(self, small_grid, rng):
        m = _model(small_grid)
        y1 = rng.standard_normal(small_grid.n_cells)
        d1, d2, b1, b2 = m.evaluate(y1, np.zeros_like(y1), 0.4 * PERIOD)
        assert np.all(d2[small_grid.cell_zone == APHOTIC] == 0.0)
        assert np.all(b2 == 0.0)
        assert np.all(b1[:small_grid.n_cols] == 0.0)  # no surface exchange

    def test_kernel_paths_agree(self, rng):
        g = random_grid(rng, nx_max=5, ny_max=5, require_shallow=True)
        m = _model(g)
        y1 = rng.standard_normal(g.n_cells)
        light = m.light_at(0.37 * PERIOD)
        p = m.params
        args = (y1, light, m._dz, g.col_start, m._n_eu, m._w_cell, m._w_bottom,
                p.max_uptake, p.k_nutrient, p.k_light, p.dop_fraction)
        outs = []
        for impl in (_kernels.po4dop_terms_loop, _kernels.po4dop_terms_numpy,
                     _kernels.po4dop_terms):
            d1 = np.empty(g.n_cells)
            d2 = np.empty(g.n_cells)
            b1 = np.empty(g.n_cols)
            impl(*args, d1, d2, b1)
            outs.append((d1, d2, b1))
        for other in outs[1:]:
            for a, b in zip(outs[0], other):
                assert np.allclose(a, b, rtol=1e-13, atol=1e-30)


class TestMassIdentity:
    def test_po4dop_on_random_grids(self, rng):
        for _ in range(5):
            g = random_grid(rng, nx_max=6, ny_max=6, require_shallow=True)
            m = _model(g, insolation=InsolationSpec(kind="diurnal"))
            rep = check_mass_identity(m, g, random_states(g, 20, rng, period=PERIOD))
            assert rep.passed, rep.rel_residuals.max()

    def test_zero_state_zero_residual(self, small_grid):
        m = _model(small_grid)
        rep = check_mass_identity(m, small_grid,
                                  [(np.zeros(small_grid.n_cells),
                                    np.zeros(small_grid.n_cells), 0.0)])
        assert rep.rel_residuals[0] == 0.0

    def test_dropping_boundary_term_shows_uptake(self, rng):
        # shallow-only grid: without b1 the residual is the retained export,
        # (1 - nu) * total uptake
        g = build_grid((2, 1, 1e4, 1e4), [80.0, 80.0], 100.0, [40.0, 40.0])
        m = _model(g)

        class NoBoundary(ReactionModel):
            def __init__(self, inner):
                self.inner = inner
                self.grid = inner.grid
                self.lambda_remin = inner.lambda_remin
                self.bound_d = inner.bound_d
                self.bound_b = inner.bound_b

            def evaluate(self, y1, y2, t):
                d1, d2, b1, b2 = self.inner.evaluate(y1, y2, t)
                return d1, d2, np.zeros_like(b1), b2

        y1 = rng.uniform(0.5, 2.0, g.n_cells)
        t = 0.15 * PERIOD
        light = m.light_at(t)
        g_up = uptake_G(y1, light, m.params.max_uptake, m.params.k_nutrient,
                        m.params.k_light)
        total_uptake = float(np.dot(g.cell_volume, g_up))
        d1, d2, b1, b2 = NoBoundary(m).evaluate(y1, np.zeros_like(y1), t)
        residual = np.dot(g.cell_volume, d1 + d2) + np.dot(g.bface_area, b1 + b2)
        expect = (1.0 - m.params.dop_fraction) * total_uptake
        assert residual == pytest.approx(expect, rel=1e-12)


class TestBounds:
    def test_po4dop_bounds_hold(self, rng):
        g = random_grid(rng, nx_max=5, ny_max=5, require_shallow=True)
        m = _model(g, insolation=InsolationSpec(kind="diurnal"))
        rep = check_bounds(m, g, random_states(g, 100, rng, scale=50.0,
                                               period=PERIOD))
        assert rep.passed
        assert rep.max_d_ratio <= 1.0 + 1e-12

    def test_zero_state_trivially_bounded(self, small_grid):
        m = _model(small_grid)
        z = np.zeros(small_grid.n_cells)
        rep = check_bounds(m, small_grid, [(z, z, 0.0)])
        assert rep.passed

    def test_unbounded_toy_model_flagged(self, small_grid):
        m = _model(small_grid)

        class Quadratic(ReactionModel):
            grid = small_grid
            lambda_remin = 1e-8
            bound_d = np.full(small_grid.n_cells, m.params.max_uptake)
            bound_b = np.zeros(small_grid.n_bfaces)

            def evaluate(self, y1, y2, t):
                z = np.zeros(small_grid.n_bfaces)
                return y1 ** 2, np.zeros_like(y1), z, z.copy()

        y1 = np.zeros(small_grid.n_cells)
        y1[3] = 2.0  # way beyond the declared per-cell bound
        rep = check_bounds(Quadratic(), small_grid, [(y1, y1, 0.0)])
        assert not rep.passed
        assert any(kind == "d1" and cell == 3
                   for _, kind, cell, _, _ in rep.violations)


class TestInsolation:
    def test_diurnal_dark_half(self, small_grid):
        m = _model(small_grid, insolation=InsolationSpec(kind="diurnal"))
        assert np.all(m.light_at(0.5 * PERIOD) == 0.0)
        assert m.light_at(0.0).max() > 0

    def test_zero_below_euphotic_depth(self, small_grid):
        m = _model(small_grid, insolation=InsolationSpec(kind="diurnal"))
        light = m.light_at(0.0)
        assert np.all(light[small_grid.cell_zone == APHOTIC] == 0.0)
        assert np.all(light >= 0.0)

    def test_periodic_nodes_bitwise(self, small_grid):
        m = _model(small_grid)
        assert np.array_equal(m.light_at(0.0), m.light_at(PERIOD))

    def test_csv_loading_and_validation(self, small_grid, tmp_path):
        path = tmp_path / "light.csv"
        euph = np.nonzero(small_grid.cell_zone == EUPHOTIC)[0]
        with open(path, "w") as fh:
            fh.write("cell_id,value\n")
            for c in euph:
                fh.write(f"{c},{120.0}\n")
        m = _model(small_grid,
                   insolation=InsolationSpec(kind="csv", csv_path=str(path)))
        assert np.all(m.light_at(0.0)[euph] == 120.0)

        bad = tmp_path / "bad.csv"
        aph = int(np.nonzero(small_grid.cell_zone == APHOTIC)[0][0])
        with open(bad, "w") as fh:
            fh.write("cell_id,value\n")
            fh.write(f"{aph},5.0\n")
        with pytest.raises(ValueError, match="aphotic"):
            _model(small_grid,
                   insolation=InsolationSpec(kind="csv", csv_path=str(bad)))

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            InsolationSpec(kind="nonsense")
        with pytest.raises(ValueError):
            PO4DOPParams(dop_fraction=1.5)
        with pytest.raises(ValueError):
            PO4DOPParams(max_uptake=-1.0)
