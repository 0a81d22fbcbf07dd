"""Growth partition and tower construction: structure, bounds, projections."""

from __future__ import annotations

import math

import numpy as np
import pytest

from accim.errors import DomainError, HypothesisFailureError
from accim.interval_maps import Hole, build_open_system, distortion_constant
from accim.presets import (
    closed_perturbed_system,
    closed_tripling_system,
    markov_system,
    offcenter_system,
    perturbed_small_hole_system,
    perturbed_tripling_map,
    small_hole_system,
    tripling_map,
)
from accim.tower_builder import (
    FATE_HOLE,
    FATE_RETURN,
    FATE_UP,
    build_bases,
    build_tower,
    choose_delta,
    growth_partition,
    project_base,
    project_cell,
    semi_conjugacy_residual,
)

THIRD = 1.0 / 3.0


class TestChooseDelta:
    def test_c2_map_takes_min_interval_length(self):
        assert choose_delta(markov_system()) == pytest.approx(THIRD)

    def test_small_hole_system_delta(self):
        assert choose_delta(small_hole_system()) == pytest.approx(2 / 3 - 0.502)

    def test_affine_low_alpha_keeps_d(self):
        emap = tripling_map()
        rough = emap.__class__(branches=emap.branches, alpha=0.5,
                               holder_const=0.0, mu=3.0)
        system = build_open_system(rough, Hole(()))
        # zero distortion: criterion is 2^0.5 / 3^0.5 < 1, holds for any delta
        assert choose_delta(system) == pytest.approx(THIRD)

    def test_perturbed_alpha_one_rule_applies(self):
        system = closed_perturbed_system()
        assert choose_delta(system) == pytest.approx(system.d)


class TestBuildBases:
    def test_markov_two_unit_bases(self):
        bases = build_bases(markov_system(), THIRD)
        assert [(b.lo, b.hi) for b in bases] == [(0.0, THIRD), (2 / 3, 1.0)]

    def test_interval_within_band_stays_whole(self):
        # length 1/3 <= 2 * 0.2: a single piece, like 0.39 at delta 0.2
        bases = build_bases(markov_system(), 0.2)
        assert [(b.lo, b.hi) for b in bases] == [(0.0, THIRD), (2 / 3, 1.0)]

    def test_long_interval_equal_split(self):
        # length 1/3 > 2 * 0.15: ceil((1/3)/0.3) = 2 equal pieces of 1/6,
        # same rule that sends length 0.5 at delta 0.2 to two pieces of 0.25
        bases = build_bases(markov_system(), 0.15)
        widths = [b.hi - b.lo for b in bases]
        assert len(bases) == 4
        assert widths == pytest.approx([1 / 6] * 4)
        assert all(0.15 - 1e-12 <= w <= 0.3 + 1e-12 for w in widths)

    def test_pieces_respect_q_boundaries(self):
        system = small_hole_system()
        bases = build_bases(system, choose_delta(system))
        q_edges = {round(x, 12) for a, b in system.Q for x in (a, b)}
        for b in bases:
            qa, qb = system.Q[b.q_index]
            assert qa - 1e-12 <= b.lo < b.hi <= qb + 1e-12
        outer = {round(b.lo, 12) for b in bases} | {round(b.hi, 12) for b in bases}
        assert q_edges <= outer

    def test_short_interval_rejected(self):
        with pytest.raises(HypothesisFailureError):
            build_bases(small_hole_system(), 0.2)


class TestGrowthPartition:
    def test_markov_seed_resolves_in_one_step(self):
        system = markov_system()
        res = growth_partition(system, (0.0, THIRD), THIRD, 10)
        elems = sorted(res.elements, key=lambda e: e.omega[0])
        assert [e.fate for e in elems] == ["return", "hole", "return"]
        assert elems[0].omega == pytest.approx((0.0, 1 / 9))
        assert elems[1].omega == pytest.approx((1 / 9, 2 / 9))
        assert elems[2].omega == pytest.approx((2 / 9, THIRD))
        assert elems[0].target == 0 and elems[2].target == 1
        assert all(e.stop_time == 1 for e in elems)
        assert res.tail_by_step[1] == 0.0
        assert res.remainder == []

    def test_empty_hole_all_return(self):
        system = closed_tripling_system()
        res = growth_partition(system, (0.0, THIRD), THIRD, 5)
        assert len(res.elements) == 3
        assert all(e.fate == "return" for e in res.elements)
        assert res.hole_mass == 0.0

    def test_strict_hole_bound_raises_for_markov_hole(self):
        with pytest.raises(HypothesisFailureError):
            growth_partition(markov_system(), (0.0, THIRD), THIRD, 5,
                             strict_hole_bound=True)

    def test_omega_outside_one_interval_rejected(self):
        with pytest.raises(DomainError):
            growth_partition(markov_system(), (0.2, 0.8), THIRD, 5)

    def test_offcenter_hole_tail_and_hole_bounds(self):
        system = offcenter_system()
        delta = choose_delta(system)
        omega = system.Q[0]
        res = growth_partition(system, omega, delta, 12)
        mu = system.map.mu
        for n in range(13):
            bound = system.D_len * (2.0 / mu) ** n
            assert res.tail_by_step[n] <= bound + 1e-12
        assert res.hole_mass <= system.hole.total_measure / (mu - 2.0) + 1e-12

    def test_partition_tiles_omega(self):
        system = offcenter_system()
        delta = choose_delta(system)
        omega = system.Q[2]
        res = growth_partition(system, omega, delta, 14)
        total = sum(e.omega[1] - e.omega[0] for e in res.elements)
        total += sum(b - a for a, b in res.remainder)
        assert total == pytest.approx(omega[1] - omega[0], abs=1e-10)

    def test_return_images_verified_by_forward_iteration(self):
        # independent check: iterating the map at element endpoints must
        # reproduce the recorded image interval
        system = offcenter_system()
        delta = choose_delta(system)
        res = growth_partition(system, system.Q[0], delta, 8)
        emap = system.map
        for e in res.elements:
            if e.stop_time > 6 or e.fate != "return":
                continue
            pts = [e.omega[0] + 1e-13, e.omega[1] - 1e-13]
            for p, target in zip(pts, sorted(e.image)):
                x = p
                for _ in range(e.stop_time):
                    x = emap.evaluate(x)[0]
                assert x == pytest.approx(target, abs=1e-7)


class TestMarkovTower:
    def test_structure(self):
        system = markov_system()
        tower = build_tower(system, THIRD)
        assert len(tower.bases) == 2
        assert tower.n_segments == 6
        assert np.all(tower.seg_level == 0)
        fates = np.sort(tower.seg_fate)
        assert list(fates) == [FATE_RETURN] * 4 + [FATE_HOLE] * 2
        assert tower.tail_mass == 0.0

    def test_hole_cells_only_at_level_one(self):
        tower = build_tower(markov_system(), THIRD)
        assert tower.hole_mass_by_level[1] == pytest.approx(2.0 / 3.0)
        assert np.all(tower.hole_mass_by_level[2:] == 0.0)

    def test_level_zero_mass_is_base_count(self):
        tower = build_tower(markov_system(), THIRD)
        assert tower.level_mass[0] == pytest.approx(2.0)

    def test_returning_derivative(self):
        tower = build_tower(markov_system(), THIRD)
        rid = tower.seg_fate == FATE_RETURN
        fp = tower.node_fprime.reshape(-1, tower.g)[rid]
        assert np.allclose(fp, 3.0)

    def test_no_holes_in_base_level(self):
        tower = build_tower(markov_system(), THIRD)
        assert tower.hole_mass_by_level[0] == 0.0


class TestClosedTower:
    def test_single_level_markov(self):
        tower = build_tower(closed_tripling_system(), THIRD)
        assert tower.n_segments == 9
        assert np.all(tower.seg_fate == FATE_RETURN)
        assert tower.tail_mass == 0.0
        assert tower.hole_mass_by_level.sum() == 0.0


@pytest.fixture(scope="module")
def tower():
    system = small_hole_system()
    return build_tower(system, choose_delta(system))


class TestSmallHoleTower:

    def test_h1_level_decay(self, tower):
        A = len(tower.bases) / tower.delta
        theta = 2.0 / 3.0
        for l in range(tower.L_max + 1):
            total = tower.level_mass[l] + tower.hole_mass_by_level[l]
            assert total <= A * theta**l + 1e-12

    def test_hole_level_masses_bounded(self, tower):
        # m(H_l) <= (N mH / (delta mu)) (2/mu)^(l-1)
        n, mh = len(tower.bases), tower.system.hole.total_measure
        delta, mu = tower.delta, 3.0
        for l in range(1, tower.L_max + 2):
            bound = n * mh / (delta * mu) * (2.0 / mu) ** (l - 1)
            assert tower.hole_mass_by_level[l] <= bound + 1e-12

    def test_tiling_mass_conservation(self, tower):
        dead = tower.seg_zw[tower.seg_fate != FATE_UP].sum()
        assert dead + tower.tail_mass + tower.dust == pytest.approx(
            len(tower.bases), abs=1e-9
        )

    def test_tail_below_target(self, tower):
        assert tower.tail_mass < 1e-9 * tower.system.measure_I

    def test_semi_conjugacy(self, tower):
        assert semi_conjugacy_residual(tower, 1000) <= 1e-9

    def test_seed_tails_satisfy_growth_bound(self, tower):
        mu = 3.0
        for base in tower.bases:
            tails = tower.seed_tails[base.index]
            for n in range(min(len(tails), tower.L_max + 1)):
                assert tails[n] <= tower.system.D_len * (2 / mu) ** n + 1e-12

    def test_seed_hole_mass_bound(self, tower):
        mh = tower.system.hole.total_measure
        for base in tower.bases:
            assert tower.seed_hole_mass[base.index] <= mh / (3.0 - 2.0) + 1e-12

    def test_returning_derivative_floor(self, tower):
        # F' >= mu^(l+1) / 2 on returning cells
        rid = np.nonzero(tower.seg_fate == FATE_RETURN)[0]
        fp = tower.node_fprime.reshape(-1, tower.g)
        for seg in rid:
            level = int(tower.seg_level[seg])
            assert np.min(fp[seg]) >= 3.0 ** (level + 1) / 2.0 - 1e-9

    def test_up_cells_per_level_bounded(self, tower):
        for level in range(1, 20):
            for base in range(len(tower.bases)):
                m = (tower.seg_level == level) & (tower.seg_base == base) & (
                    tower.seg_fate == FATE_UP
                )
                assert int(np.sum(m)) <= 2**level

    def test_hole_bound_flag(self, tower):
        assert tower.hole_bound_ok  # h = 0.002 <= delta/2


class TestExplicitTruncation:
    def test_offcenter_l40_tail_bound(self):
        system = offcenter_system()
        delta = choose_delta(system)
        tower = build_tower(system, delta, L_max=40)
        n = len(tower.bases)
        bound = n * system.D_len / delta * (2.0 / 3.0) ** 40
        assert tower.tail_mass <= bound + 1e-12
        assert tower.L_max == 40

    def test_offcenter_h1(self):
        system = offcenter_system()
        delta = choose_delta(system)
        tower = build_tower(system, delta, L_max=40)
        A = len(tower.bases) / delta
        for l in range(41):
            total = tower.level_mass[l] + tower.hole_mass_by_level[l]
            assert total <= A * (2.0 / 3.0) ** l + 1e-12


class TestPerturbedTowers:
    def test_closed_tower_is_single_level(self):
        system = closed_perturbed_system()
        tower = build_tower(system, choose_delta(system))
        assert np.all(tower.seg_level == 0)
        assert np.all(tower.seg_fate == FATE_RETURN)
        assert len(tower.bases) == 3
        assert tower.n_segments == 9
        assert semi_conjugacy_residual(tower, 1000) <= 1e-9

    def test_closed_tower_distortion(self):
        system = closed_perturbed_system()
        tower = build_tower(system, choose_delta(system))
        c = distortion_constant(system.map) * (2.0 * tower.delta) ** 1.0
        fp = tower.node_fprime.reshape(-1, tower.g)
        for seg in range(tower.n_segments):
            vals = fp[seg]
            xs = tower.nodes_of(seg)
            b = system.map.branches[int(tower.seg_branch[seg])]
            imgs = b.value(xs)
            for i in range(0, tower.g, 5):
                lhs = np.abs(vals / vals[i] - 1.0)
                rhs = c * np.abs(imgs - imgs[i])
                assert np.all(lhs <= rhs + 1e-9)

    def test_closed_tower_derivative_floor(self):
        system = closed_perturbed_system()
        tower = build_tower(system, choose_delta(system))
        assert np.nanmin(tower.node_fprime) >= system.map.mu / 2.0 - 1e-9

    def test_open_perturbed_structural(self):
        system = perturbed_small_hole_system()
        delta = choose_delta(system)
        tower = build_tower(system, delta, L_max=14, g=8)
        mu = system.map.mu
        A = len(tower.bases) / delta
        for l in range(tower.L_max + 1):
            total = tower.level_mass[l] + tower.hole_mass_by_level[l]
            assert total <= A * (2.0 / mu) ** l + 1e-9
        for base in tower.bases:
            tails = tower.seed_tails[base.index]
            for n in range(min(len(tails), 15)):
                assert tails[n] <= system.D_len * (2 / mu) ** n + 1e-9
        assert semi_conjugacy_residual(tower, 300) <= 1e-9


class TestProjection:
    def test_base_projection(self):
        tower = build_tower(markov_system(), THIRD)
        assert project_base(tower, 0, 0.5) == pytest.approx(1.0 / 6.0)
        assert project_base(tower, 1, 0.25) == pytest.approx(0.75)

    def test_out_of_range_rejected(self):
        tower = build_tower(markov_system(), THIRD)
        with pytest.raises(DomainError):
            project_base(tower, 0, 1.5)
        with pytest.raises(DomainError):
            project_cell(tower, 0, -0.1)

    def test_cell_projection_matches_interval(self):
        tower = build_tower(markov_system(), THIRD)
        lo, hi = tower.seg_img[0]
        assert project_cell(tower, 0, 0.0) == pytest.approx(lo)
        assert project_cell(tower, 0, 1.0) == pytest.approx(hi)

    def test_dump_roundtrip(self, tmp_path):
        import json

        tower = build_tower(markov_system(), THIRD)
        path = tmp_path / "tower.json"
        tower.dump_json(path)
        data = json.loads(path.read_text())
        assert data["n_segments"] == 6
        assert len(data["cells"]) == 6
        assert data["tail_mass"] == 0.0
