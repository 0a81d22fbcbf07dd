"""Operator action, fixed points, weighted norms, and the grid oracle."""

from __future__ import annotations

import math

import numpy as np
import pytest

from accim.errors import DomainError, TotalEscapeError
from accim.presets import (
    closed_tripling_system,
    markov_system,
    small_hole_system,
)
from accim.tower_builder import FATE_HOLE, build_tower, choose_delta
from accim.transfer_operator import (
    TowerDensity,
    apply_P,
    fixed_point,
    lasota_yorke_check,
    mass_balance,
    normalize,
    norms,
    random_density,
    sup_inf_slack,
    ulam_oracle,
    uniform_density,
)

XI_TRIPLING = 0.5 * math.log(1.5)
A_TRIPLING = math.exp(-XI_TRIPLING)  # = sqrt(2/3), dominates (1+C)/gamma


@pytest.fixture(scope="module")
def markov_tower():
    return build_tower(markov_system(), 1.0 / 3.0)


@pytest.fixture(scope="module")
def closed_tower():
    return build_tower(closed_tripling_system(), 1.0 / 3.0)


@pytest.fixture(scope="module")
def small_tower():
    system = small_hole_system()
    return build_tower(system, choose_delta(system))


def ones(tower):
    return TowerDensity(tower, np.ones(tower.n_segments * tower.g))


class TestApply:
    def test_markov_constant_pushes_to_two_thirds(self, markov_tower):
        pf = apply_P(markov_tower, ones(markov_tower))
        assert np.allclose(pf.values, 2.0 / 3.0, atol=1e-14)
        # two returning branches with F' = 3 feed each base
        assert pf.integral() == pytest.approx(2.0 / 3.0 * 2.0, abs=1e-12)

    def test_closed_constant_is_fixed(self, closed_tower):
        pf = apply_P(closed_tower, ones(closed_tower))
        assert np.allclose(pf.values, 1.0, atol=1e-14)

    def test_zero_maps_to_zero(self, markov_tower):
        z = TowerDensity(markov_tower, np.zeros(markov_tower.n_segments * markov_tower.g))
        assert np.all(apply_P(markov_tower, z).values == 0.0)

    def test_linearity(self, small_tower):
        f = random_density(small_tower, 1)
        g = random_density(small_tower, 2)
        lhs = apply_P(
            small_tower, TowerDensity(small_tower, 2.5 * f.values + 0.5 * g.values)
        )
        rhs = 2.5 * apply_P(small_tower, f).values + 0.5 * apply_P(small_tower, g).values
        assert np.allclose(lhs.values, rhs, atol=1e-13)

    def test_positivity(self, small_tower):
        f = random_density(small_tower, 3)
        assert np.all(f.values > 0)
        assert np.all(apply_P(small_tower, f).values >= 0)

    def test_mass_balance(self, small_tower):
        for seed in (4, 5):
            f = random_density(small_tower, seed)
            after, expected = mass_balance(small_tower, f)
            assert after == pytest.approx(expected, abs=2e-7)

    def test_mass_balance_markov_exact(self, markov_tower):
        after, expected = mass_balance(markov_tower, ones(markov_tower))
        assert after == pytest.approx(expected, abs=1e-13)


class TestNormalize:
    def test_constant_two_thirds(self, markov_tower):
        f = TowerDensity(
            markov_tower, np.full(markov_tower.n_segments * markov_tower.g, 2.0 / 3.0)
        )
        out = normalize(f)
        assert np.allclose(out.values, 0.5)
        assert out.integral() == pytest.approx(1.0)

    def test_probability_density_unchanged(self, markov_tower):
        f = uniform_density(markov_tower)
        assert np.allclose(normalize(f).values, f.values)

    def test_scale_invariance(self, markov_tower):
        f = ones(markov_tower)
        g = TowerDensity(markov_tower, 7.3 * f.values)
        assert np.allclose(normalize(f).values, normalize(g).values)

    def test_zero_density_rejected(self, markov_tower):
        z = TowerDensity(markov_tower, np.zeros(markov_tower.n_segments * markov_tower.g))
        with pytest.raises(TotalEscapeError):
            normalize(z)

    def test_hole_supported_density_escapes(self, markov_tower):
        vals = np.zeros(markov_tower.n_segments * markov_tower.g)
        for s in range(markov_tower.n_segments):
            if markov_tower.seg_fate[s] == FATE_HOLE:
                vals[markov_tower.node_slice(s)] = 1.0
        f = TowerDensity(markov_tower, vals)
        with pytest.raises(TotalEscapeError):
            fixed_point(markov_tower, f0=f, max_iter=3)


class TestFixedPoint:
    def test_markov_eigenvalue(self, markov_tower):
        res = fixed_point(markov_tower)
        assert res.converged
        assert res.lam == pytest.approx(2.0 / 3.0, abs=1e-9)
        assert np.ptp(res.phi.values[res.phi.values > 0]) <= 1e-12

    def test_closed_system(self, closed_tower):
        res = fixed_point(closed_tower)
        assert res.lam == pytest.approx(1.0, abs=1e-12)
        assert res.escape_rate == pytest.approx(0.0, abs=1e-12)

    def test_small_hole_two_seed_agreement(self, small_tower):
        r1 = fixed_point(small_tower)
        r2 = fixed_point(small_tower, f0=random_density(small_tower, 11))
        assert r1.converged and r2.converged
        assert 0.99 < r1.lam < 1.0
        assert r1.lam == pytest.approx(r2.lam, abs=1e-8)

    def test_mass_ratio_consistency(self, small_tower):
        # the eigenvalue equals successive mass ratios at the fixed point
        res = fixed_point(small_tower)
        pf = apply_P(small_tower, res.phi)
        assert pf.integral() == pytest.approx(res.lam, abs=1e-9)
        ppf = apply_P(small_tower, normalize(pf))
        assert ppf.integral() == pytest.approx(res.lam, abs=1e-9)

    def test_conditional_invariance_upstairs(self, small_tower):
        # phi on level l+1 equals phi pulled one level down, divided by lambda;
        # pointwise agreement on low-mass cells needs a tight L1 residual
        res = fixed_point(small_tower, tol=1e-13)
        pf = apply_P(small_tower, res.phi)
        t = small_tower
        for s in range(t.n_segments):
            if t.seg_level[s] == 0:
                continue
            got = pf.values[t.node_slice(s)] / res.lam
            assert np.allclose(got, res.phi.values[t.node_slice(s)], atol=1e-8)

    def test_sup_inf_inequality_on_fixed_point(self, small_tower):
        res = fixed_point(small_tower)
        assert sup_inf_slack(res.phi, XI_TRIPLING) <= 1e-9


class TestNorms:
    def test_constant_density(self, markov_tower):
        f = ones(markov_tower)
        sup, r, comb = norms(f, XI_TRIPLING)
        assert sup == 1.0
        assert r == 0.0
        assert comb == 1.0

    def test_one_plus_x_profile(self, markov_tower):
        t = markov_tower
        vals = np.zeros(t.n_segments * t.g)
        for s in range(t.n_segments):
            lo, hi = t.seg_img[s]
            base = t.bases[int(t.seg_base[s])]
            z = (t.nodes_of(s) - base.lo) / base.width
            vals[t.node_slice(s)] = 1.0 + z
        f = TowerDensity(t, vals)
        _, r, _ = norms(f, XI_TRIPLING)
        # sup |f'| / |f| = 1 at z = 0, attained by the first difference
        assert r == pytest.approx(1.0, abs=1e-9)

    def test_level_weight_cancellation(self, small_tower):
        t = small_tower
        vals = np.ones(t.n_segments * t.g)
        for s in range(t.n_segments):
            vals[t.node_slice(s)] = math.exp(XI_TRIPLING * int(t.seg_level[s]))
        f = TowerDensity(t, vals)
        sup, _, _ = norms(f, XI_TRIPLING)
        assert sup == pytest.approx(1.0, abs=1e-12)

    def test_random_density_admissible(self, small_tower):
        f = random_density(small_tower, 21)
        assert f.integral() == pytest.approx(1.0, abs=1e-12)
        sup, r, comb = norms(f, XI_TRIPLING)
        assert np.isfinite(sup) and np.isfinite(r)
        assert sup > 0


class TestLasotaYorke:
    @pytest.mark.parametrize("seed", range(5))
    def test_markov_tower(self, markov_tower, seed):
        f = random_density(markov_tower, seed)
        rep = lasota_yorke_check(markov_tower, f, XI_TRIPLING, A_TRIPLING, 1.0)
        assert rep.r_ok and rep.sup_ok

    @pytest.mark.parametrize("seed", range(5))
    def test_small_hole_tower(self, small_tower, seed):
        f = random_density(small_tower, 100 + seed)
        rep = lasota_yorke_check(small_tower, f, XI_TRIPLING, A_TRIPLING, 1.0)
        assert rep.r_ok and rep.sup_ok


class TestUlamOracle:
    def test_markov_three_bins_exact(self):
        res = ulam_oracle(markov_system(), 3)
        assert res.lam == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert res.density[0] == pytest.approx(1.5, abs=1e-12)
        assert res.density[1] == 0.0
        assert res.density[2] == pytest.approx(1.5, abs=1e-12)

    @pytest.mark.parametrize("n_bins", [3, 6, 30])
    def test_closed_system_lebesgue(self, n_bins):
        res = ulam_oracle(closed_tripling_system(), n_bins)
        assert res.lam == pytest.approx(1.0, abs=1e-10)
        assert np.allclose(res.density, 1.0, atol=1e-9)

    def test_too_few_bins_rejected(self):
        with pytest.raises(DomainError):
            ulam_oracle(small_hole_system(), 2)

    def test_small_hole_matches_tower(self, small_tower):
        res_tower = fixed_point(small_tower)
        res_grid = ulam_oracle(small_hole_system(), 3000)
        assert res_grid.lam == pytest.approx(res_tower.lam, abs=1e-3)
