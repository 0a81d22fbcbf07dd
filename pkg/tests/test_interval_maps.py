"""Map, hole, and open-system construction plus the survivor oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from accim.errors import DegenerateSystemError, DomainError
from accim.interval_maps import (
    Hole,
    build_open_system,
    distortion_constant,
    sample_distortion_ratios,
    survivor_intervals,
    survivor_measure,
    survivor_measure_exact,
)
from accim.presets import (
    EMPTY,
    MARKOV_HOLE,
    markov_system,
    perturbed_tripling_map,
    tripling_map,
)


def middle_thirds_survivor(n: int) -> float:
    # independent oracle: surviving mass after k membership checks of the
    # middle-thirds construction is (2/3)^k, with k = max(n, 1)
    return (2.0 / 3.0) ** max(n, 1)


class TestEvaluate:
    def test_affine_branch_point(self):
        img, der, idx = tripling_map().evaluate(0.1)
        assert img == pytest.approx(0.3, abs=1e-15)
        assert der == 3.0
        assert idx == 0

    def test_endpoint_tie_break_goes_to_lower_branch(self):
        img, der, idx = tripling_map().evaluate(1.0 / 3.0)
        assert idx == 0
        assert der == 3.0
        # branch 0 ends at the wrap point, so the mod-1 image is 0
        assert img == 0.0

    def test_perturbed_branch_closed_form(self):
        emap = perturbed_tripling_map()
        x = 0.25
        img, der, idx = emap.evaluate(x)
        assert img == pytest.approx(3 * x + 0.1 * math.sin(2 * math.pi * x), abs=1e-15)
        assert der == pytest.approx(3.0 + 0.2 * math.pi * math.cos(math.pi / 2), abs=1e-12)
        assert der == pytest.approx(3.0, abs=1e-12)
        assert idx == 0

    def test_outside_domain_rejected(self):
        with pytest.raises(DomainError):
            tripling_map().evaluate(1.5)

    def test_sampled_expansion_floor(self):
        emap = perturbed_tripling_map()
        xs = np.linspace(0.0, 1.0, 20001)
        assert np.min(np.abs(emap.deriv_array(xs))) >= emap.mu - 1e-12


class TestOpenSystem:
    def test_markov_hole_partition(self):
        system = markov_system()
        assert system.Q == ((0.0, 1.0 / 3.0), (2.0 / 3.0, 1.0))
        assert system.K == 2
        assert system.d == pytest.approx(1.0 / 3.0)
        assert system.D_len == pytest.approx(1.0 / 3.0)

    def test_empty_hole_partition(self):
        system = build_open_system(tripling_map(), EMPTY)
        assert system.K == 3
        assert system.d == pytest.approx(1.0 / 3.0)

    def test_interior_hole_splits_branch(self):
        system = build_open_system(tripling_map(), Hole(((0.5, 0.502),)))
        assert system.K == 4
        qs = [(round(a, 6), round(b, 6)) for a, b in system.Q]
        assert qs == [
            (0.0, round(1 / 3, 6)),
            (round(1 / 3, 6), 0.5),
            (0.502, round(2 / 3, 6)),
            (round(2 / 3, 6), 1.0),
        ]
        assert system.d == pytest.approx(2.0 / 3.0 - 0.502)

    def test_hole_swallowing_branch_rejected(self):
        with pytest.raises(DegenerateSystemError):
            build_open_system(tripling_map(), Hole(((0.3, 0.7),)))


class TestDistortionConstant:
    def test_affine_map_has_zero_distortion(self):
        assert distortion_constant(tripling_map()) == 0.0

    def test_closed_form_value(self):
        emap = tripling_map()
        loose = emap.__class__(
            branches=emap.branches, alpha=1.0, holder_const=0.5, mu=3.0
        )
        assert distortion_constant(loose) == pytest.approx(
            math.exp(0.5 / (3.0 * 2.0)) - 1.0
        )
        assert distortion_constant(loose) == pytest.approx(0.0869, abs=5e-4)

    def test_perturbed_tripling_value(self):
        emap = perturbed_tripling_map()
        mu = 3.0 - 0.2 * math.pi
        chat = 0.4 * math.pi**2
        expected = math.exp(chat / (mu * (mu - 1.0))) - 1.0
        assert distortion_constant(emap) == pytest.approx(expected, rel=1e-12)
        assert distortion_constant(emap) == pytest.approx(2.366, abs=2e-3)


class TestSurvivors:
    def test_no_iteration_gives_measure_of_I(self):
        system = markov_system()
        assert survivor_measure(system, 0, grid=300_000) == pytest.approx(
            2.0 / 3.0, abs=1e-4
        )

    @pytest.mark.parametrize("n", [2, 5])
    def test_middle_thirds_grid_estimate(self, n):
        system = markov_system()
        est = survivor_measure(system, n, grid=3**9)  # grid aligned to thirds
        assert est == pytest.approx(middle_thirds_survivor(n), abs=1e-9)

    @pytest.mark.parametrize("n", [0, 1, 2, 3, 5, 8])
    def test_middle_thirds_exact_oracle(self, n):
        system = markov_system()
        assert survivor_measure_exact(system, n) == pytest.approx(
            middle_thirds_survivor(n), abs=1e-12
        )

    def test_grid_estimate_monotone_in_n(self):
        system = build_open_system(tripling_map(), Hole(((0.4, 0.41),)))
        vals = [survivor_measure(system, n, grid=200_000) for n in range(6)]
        assert all(a >= b - 1e-6 for a, b in zip(vals, vals[1:]))

    def test_exact_oracle_matches_grid(self):
        system = build_open_system(tripling_map(), Hole(((0.5, 0.502),)))
        exact = survivor_measure_exact(system, 6)
        grid = survivor_measure(system, 6, grid=400_000)
        assert grid == pytest.approx(exact, abs=5e-4)

    def test_survivor_components_are_disjoint(self):
        system = markov_system()
        lo, hi = survivor_intervals(system, 4)
        assert np.all(hi > lo)
        assert np.all(lo[1:] >= hi[:-1] - 1e-15)


class TestDistortionSampling:
    def test_tripling_ratios_are_exactly_one(self):
        lhs, rhs = sample_distortion_ratios(tripling_map(), 200, n_max=8, seed=1)
        assert len(lhs) == 200
        assert np.all(lhs <= rhs + 1e-12)
        assert np.max(lhs) == pytest.approx(0.0, abs=1e-12)

    def test_perturbed_tripling_bound_holds(self):
        lhs, rhs = sample_distortion_ratios(
            perturbed_tripling_map(), 2000, n_max=10, seed=7
        )
        assert len(lhs) == 2000
        assert np.all(lhs <= rhs + 1e-12)
        # the bound has real content here: some sampled ratios are nonzero
        assert np.max(lhs) > 1e-6
