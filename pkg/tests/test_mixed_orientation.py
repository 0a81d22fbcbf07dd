"""End-to-end coverage of decreasing branches via the zigzag map.

Slopes (2.5, -2.5, 5) satisfy sum 1/|slope| = 1, so the closed system
leaves Lebesgue measure invariant: an exact oracle exercising every
orientation-sensitive path (growth classification, operator gathers,
projection, survivor pullbacks).
"""

from __future__ import annotations

import numpy as np
import pytest

from accim.accim_analysis import solve, srb_closed, surviving_mass_after_step
from accim.errors import ResourceBudgetError
from accim.interval_maps import Hole, build_open_system, survivor_measure_exact
from accim.montecarlo import ratio_estimate, simulate_survival
from accim.presets import zigzag_hole_system, zigzag_map
from accim.tower_builder import (
    build_tower,
    choose_delta,
    growth_partition,
    semi_conjugacy_residual,
)
from accim.transfer_operator import ulam_oracle

FIXED_POINT = 4.0 / 7.0  # of the decreasing middle branch


@pytest.fixture(scope="module")
def open_result():
    system = zigzag_hole_system()
    return solve(system.map, system.hole)


class TestMap:
    def test_decreasing_branch_evaluation(self):
        emap = zigzag_map()
        img, der, idx = emap.evaluate(0.6)
        assert img == pytest.approx(0.5, abs=1e-15)
        assert der == -2.5
        assert idx == 1

    def test_middle_branch_fixed_point(self):
        img, _, _ = zigzag_map().evaluate(FIXED_POINT)
        assert img == pytest.approx(FIXED_POINT, abs=1e-15)


class TestClosedSystem:
    def test_lebesgue_invariance(self):
        res = srb_closed(zigzag_map())
        assert res.lam == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(res.psi.vals - 1.0)) <= 1e-8
        assert res.residual_ci <= 1e-12

    def test_grid_oracle_agrees(self):
        grid = ulam_oracle(build_open_system(zigzag_map(), Hole(())), 100)
        assert grid.lam == pytest.approx(1.0, abs=1e-10)
        assert np.allclose(grid.density, 1.0, atol=1e-8)


class TestOpenSystem:
    def test_eigenvalue_against_grid_oracle(self, open_result):
        grid = ulam_oracle(open_result.system, 4200)  # hole edge on-grid
        assert abs(grid.lam - open_result.lam) <= 1e-5

    def test_eigenvalue_against_survivor_oracle(self, open_result):
        system = open_result.system
        for n in (9, 10):
            ratio = survivor_measure_exact(system, n + 1) / survivor_measure_exact(
                system, n
            )
            assert ratio == pytest.approx(open_result.lam, abs=1e-6)

    def test_eigenvalue_against_particles(self, open_result):
        records = simulate_survival(open_result.system, 400_000, 16, seed=5)
        mean, err = ratio_estimate(records, 5, 15)
        assert abs(mean - open_result.lam) <= 4.0 * err

    def test_density_against_grid_oracle(self, open_result):
        grid = ulam_oracle(open_result.system, 4200)
        masses = open_result.psi.integrate_between(grid.edges[:-1],
                                                   grid.edges[1:])
        assert float(np.sum(np.abs(masses - grid.bin_mass))) <= 1e-2

    def test_residuals_and_bounds(self, open_result):
        assert open_result.residual_ci <= 1e-9
        assert semi_conjugacy_residual(open_result.tower, 500) <= 1e-9
        assert abs(
            surviving_mass_after_step(open_result.system, open_result.psi)
            - open_result.lam
        ) <= 1e-6
        b = open_result.bounds
        assert b.sup_ok and b.inf_ok and b.variation_ok

    def test_eigenvalue_floors(self, open_result):
        c = open_result.constants
        assert open_result.lam >= c.lambda_lower - 1e-12
        assert open_result.lam >= c.lambda_floor - 1e-12

    def test_growth_tails(self):
        system = zigzag_hole_system()
        delta = choose_delta(system)
        mu = system.map.mu
        for omega in system.Q:
            res = growth_partition(system, omega, delta, 12)
            for n in range(13):
                assert res.tail_by_step[n] <= system.D_len * (2 / mu) ** n + 1e-12
            assert res.hole_mass <= system.hole.total_measure / (mu - 2) + 1e-12


class TestBudgetGuard:
    def test_wandering_hole_hits_segment_budget(self):
        # both endpoints of this hole have wandering orbits: the cell count
        # grows exponentially and the guard must fire rather than thrash
        system = build_open_system(zigzag_map(), Hole(((0.55, 0.56),)))
        with pytest.raises(ResourceBudgetError):
            build_tower(system, choose_delta(system), max_segments=20_000)
