import math

import numpy as np
import pytest

from tbcsim import (
    Cylinder,
    CylinderStack,
    Degenerate,
    Direction,
    ModelParams,
    NerveSizeError,
    StackingSchedule,
    UniformCap,
    add_one_cost,
    covered_volume_mc,
    euler_characteristic,
    euler_characteristic_voxel_oracle,
    isolated_count,
    pairwise_intersects,
    second_difference,
    with_extra,
)
from tbcsim.functionals import evaluate
from tbcsim.sampling import (
    CylinderSample,
    PackedCylinders,
    replication_rng,
    sample_direction,
    sample_direction_matrix,
    sample_tbc,
)

from conftest import dense_min_distance, quadrature_covered_volume

S2 = 1.0 / math.sqrt(2.0)
TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])


def up(d):
    return Direction.straight_up(d)


def hand_sample(params, basepoints, directions=None, times=None):
    """CylinderSample with explicitly placed cylinders."""
    basepoints = np.asarray(basepoints, dtype=float).reshape(-1, params.d)
    n = len(basepoints)
    if directions is None:
        directions = np.tile(up(params.d).v, (n, 1, 1))
    directions = np.asarray(directions, dtype=float)
    if directions.ndim == 2:
        directions = directions[:, None, :]
    if times is None:
        times = np.asarray([0.0, params.T])
    packed = PackedCylinders(basepoints, directions, np.asarray(times, float), params.r, params.T)
    return CylinderSample(params, packed, seed=0, replication_index=0)


@pytest.fixture
def p22():
    return ModelParams(d=2, gamma=1.0, r=0.3, T=1.0, h=0.5, s=4.0)


class TestCoveredVolume:
    def test_empty_sample(self, p22):
        s = hand_sample(p22, np.empty((0, 2)))
        assert covered_volume_mc(s, 1000, replication_rng(0, 0)).value == 0.0

    def test_single_cylinder_volume(self, p22):
        s = hand_sample(p22, [[0.0, 0.0]])
        res = covered_volume_mc(s, 1_000_000, replication_rng(1, 0))
        exact = math.pi * p22.r**2 * p22.T
        assert abs(res.value - exact) <= 4 * res.meta["se"]

    def test_full_cover_reaches_window_volume(self):
        p = ModelParams(d=1, gamma=1.0, r=0.6, T=1.0, h=0.5, s=4.0)
        grid = np.arange(-2.4, 2.5, 0.5).reshape(-1, 1)
        s = hand_sample(p, grid)
        res = covered_volume_mc(s, 20_000, replication_rng(2, 0))
        assert res.value == pytest.approx(p.window_volume)

    def test_value_bounded_by_window_volume(self, p22):
        s = sample_tbc(p22, 3, 0)
        res = covered_volume_mc(s, 20_000, replication_rng(3, 0))
        assert 0.0 <= res.value <= p22.window_volume

    def test_unbiased_against_quadrature(self):
        # 1000 independent MC streams on one fixed sample vs fine mid-point quadrature
        p = ModelParams(d=1, gamma=1.0, r=0.3, T=1.0, h=0.5, s=4.0)
        s = sample_tbc(p, 5, 0)
        truth = quadrature_covered_volume(s, n_sp=2000, n_t=500)
        estimates = np.array([
            covered_volume_mc(s, 4000, replication_rng(6, i)).value for i in range(1000)
        ])
        se_mean = estimates.std(ddof=1) / math.sqrt(len(estimates))
        assert abs(estimates.mean() - truth) < 4 * se_mean

    def test_meta_fields(self, p22):
        s = hand_sample(p22, [[0.0, 0.0]])
        res = covered_volume_mc(s, 5000, replication_rng(7, 0))
        assert res.kind == "volume" and res.meta["M"] == 5000 and res.meta["se"] > 0
        doc = res.to_json_dict()
        assert set(doc) == {"kind", "value", "meta"}

    def test_monotone_under_extra(self, p22):
        s = sample_tbc(p22, 8, 0)
        rng = replication_rng(8, 1)
        for _ in range(10):
            extra = Cylinder(tuple(rng.uniform(-3, 3, 2)),
                             sample_direction(UniformCap(), 2, p22.h, rng), p22.r, p22.T)
            assert add_one_cost("volume", s, extra, m_points=20_000) >= 0.0


class TestIsolatedCount:
    def test_single_cylinder(self, p22):
        assert isolated_count(hand_sample(p22, [[0.0, 0.0]])).value == 1

    def test_touching_pair_not_isolated(self, p22):
        s = hand_sample(p22, [[0.0, 0.0], [0.6, 0.0]])
        assert isolated_count(s).value == 0

    def test_neighbor_outside_window_counts(self, p22):
        # cylinder inside the window is touched only by one based outside it
        s = hand_sample(p22, [[1.9, 0.0], [2.4, 0.0]])
        a, b = s.cylinders
        assert dense_min_distance(a, b) <= 2 * p22.r
        assert isolated_count(s).value == 0
        assert isolated_count(hand_sample(p22, [[1.9, 0.0]])).value == 1

    def test_outside_basepoints_not_counted(self, p22):
        s = hand_sample(p22, [[2.4, 0.0]])
        assert isolated_count(s).value == 0

    def test_matches_object_level_recount(self, p22):
        s = sample_tbc(p22, 9, 0)
        cyls = s.cylinders
        in_window = [np.max(np.abs(np.asarray(c.basepoint))) <= p22.s / 2 for c in cyls]
        brute = sum(
            1
            for i, c in enumerate(cyls)
            if in_window[i]
            and not any(pairwise_intersects(c, o) for j, o in enumerate(cyls) if j != i)
        )
        assert isolated_count(s).value == brute

    def test_stacked_samples(self):
        p = ModelParams(d=2, gamma=0.8, r=0.3, T=1.0, h=0.5, s=4.0,
                        stacking=StackingSchedule((0.4, 0.7), 0.6))
        s = sample_tbc(p, 10, 0)
        cyls = s.cylinders
        brute = sum(
            1
            for i, c in enumerate(cyls)
            if np.max(np.abs(np.asarray(c.basepoint))) <= p.s / 2
            and not any(pairwise_intersects(c, o) for j, o in enumerate(cyls) if j != i)
        )
        assert isolated_count(s).value == brute


class TestEulerCharacteristic:
    def test_empty_and_single(self, p22):
        assert euler_characteristic(hand_sample(p22, np.empty((0, 2)))).value == 0
        assert euler_characteristic(hand_sample(p22, [[0.0, 0.0]])).value == 1

    def test_cylinder_outside_window_ignored(self, p22):
        assert euler_characteristic(hand_sample(p22, [[5.0, 5.0]])).value == 0

    def test_two_cylinders(self, p22):
        assert euler_characteristic(hand_sample(p22, [[0.0, 0.0], [0.5, 0.0]])).value == 1
        assert euler_characteristic(hand_sample(p22, [[0.0, 0.0], [1.5, 0.0]])).value == 2

    def test_triangle_with_empty_triple(self):
        p = ModelParams(d=2, gamma=1.0, r=0.55, T=1.0, h=0.5, s=6.0)
        res = euler_characteristic(hand_sample(p, TRIANGLE))
        assert res.value == 0  # 3 - 3 + 0
        assert res.meta["indeterminate"] == 0

    def test_triangle_with_full_triple(self):
        p = ModelParams(d=2, gamma=1.0, r=0.6, T=1.0, h=0.5, s=6.0)
        assert euler_characteristic(hand_sample(p, TRIANGLE)).value == 1

    def test_single_stack_is_contractible(self):
        p = ModelParams(d=2, gamma=1.0, r=0.3, T=1.0, h=0.5, s=6.0,
                        stacking=StackingSchedule((0.3, 0.6), 0.5))
        dirs = np.array([[[0.0, 0.0, 1.0], [S2, 0.0, S2], [0.0, S2, S2]]])
        s = hand_sample(p, [[0.0, 0.0]], dirs, times=[0.0, 0.3, 0.6, 1.0])
        res = euler_characteristic(s)
        assert res.value == 1
        assert res.meta["n_pieces"] == 3

    def test_nerve_cap_raises(self):
        p = ModelParams(d=2, gamma=1.0, r=0.5, T=1.0, h=0.5, s=4.0)
        s = hand_sample(p, np.zeros((14, 2)))
        with pytest.raises(NerveSizeError):
            euler_characteristic(s)

    def test_near_tangency_flagged_with_both_values(self):
        p = ModelParams(d=2, gamma=1.0, r=0.3, T=1.0, h=0.5, s=4.0)
        s = hand_sample(p, [[0.0, 0.0], [0.6 + 4e-10, 0.0]])
        res = euler_characteristic(s)
        assert res.meta["indeterminate"] >= 1
        assert res.value == 1  # tangency accepted (closed-set convention)
        assert res.meta["value_excluding_indeterminate"] == 2


class TestVoxelOracle:
    def test_empty_is_zero(self, p22):
        assert euler_characteristic_voxel_oracle(hand_sample(p22, np.empty((0, 2))), 0.05).value == 0

    def test_single_cylinder_is_one(self, p22):
        res = euler_characteristic_voxel_oracle(hand_sample(p22, [[0.0, 0.0]]), 0.03)
        assert res.value == 1 and not res.unreliable

    def test_triangle_matches_nerve_at_fine_resolution(self):
        p = ModelParams(d=2, gamma=1.0, r=0.55, T=1.0, h=0.5, s=6.0)
        res = euler_characteristic_voxel_oracle(hand_sample(p, TRIANGLE), p.r / 20)
        assert res.value == 0

    def test_pair_tangency_warns(self):
        p = ModelParams(d=1, gamma=1.0, r=0.3, T=1.0, h=0.5, s=4.0)
        s = hand_sample(p, [[-0.3], [0.31]])
        res = euler_characteristic_voxel_oracle(s, p.r / 20)
        assert res.unreliable and "pair_tangency" in res.reasons

    def test_dimension_guard(self):
        p = ModelParams(d=3, gamma=1.0, r=0.3, T=1.0, h=0.5, s=4.0)
        s = hand_sample(p, np.zeros((1, 3)))
        with pytest.raises(ValueError):
            euler_characteristic_voxel_oracle(s, 0.05)

    def test_agrees_with_nerve_on_random_small_instances(self):
        p = ModelParams(d=1, gamma=1.0, r=0.3, T=1.0, h=0.5, s=15.0)
        rng = np.random.default_rng(4242)
        checked = 0
        for k in range(40):
            n = int(rng.integers(1, 5))
            pts = rng.uniform(-7, 7, size=(n, 1))
            dirs = sample_direction_matrix(UniformCap(), 1, p.h, n, rng).reshape(n, 1, 2)
            s = hand_sample(p, pts, dirs)
            nerve = euler_characteristic(s)
            vox = euler_characteristic_voxel_oracle(s, p.r / 20)
            if vox.unreliable or nerve.meta["indeterminate"]:
                continue
            checked += 1
            assert nerve.value == vox.value
        assert checked >= 25


class TestAddOneCost:
    def test_far_extra_costs_nothing(self, p22):
        s = sample_tbc(p22, 12, 0)
        far = Cylinder((p22.interaction_radius + p22.s + 0.5, 0.0), up(2), p22.r, p22.T)
        for kind in ("volume", "isolated", "euler"):
            assert add_one_cost(kind, s, far, m_points=20_000) == 0.0

    def test_isolated_empty_plus_inside(self, p22):
        s = hand_sample(p22, np.empty((0, 2)))
        assert add_one_cost("isolated", s, Cylinder((0.0, 0.0), up(2), p22.r, p22.T)) == 1.0

    def test_volume_cost_bounded_by_max_cylinder_volume(self, p22):
        s = sample_tbc(p22, 13, 0)
        rng = replication_rng(13, 1)
        bound = p22.T * p22.r**2 * math.pi / p22.h
        for _ in range(20):
            extra = Cylinder(tuple(rng.uniform(-2, 2, 2)),
                             sample_direction(UniformCap(), 2, p22.h, rng), p22.r, p22.T)
            cost = add_one_cost("volume", s, extra, m_points=50_000)
            assert 0.0 <= cost <= bound

    def test_isolated_cost_increment_bounded(self, p22):
        s = sample_tbc(p22, 14, 0)
        rng = replication_rng(14, 1)
        for _ in range(20):
            extra = Cylinder(tuple(rng.uniform(-3, 3, 2)),
                             sample_direction(UniformCap(), 2, p22.h, rng), p22.r, p22.T)
            assert add_one_cost("isolated", s, extra) <= 1.0

    def test_euler_cost_bounded_by_local_复杂ity(self, p22):
        s = sample_tbc(p22, 15, 0)
        rng = replication_rng(15, 1)
        for _ in range(10):
            extra = Cylinder(tuple(rng.uniform(-2, 2, 2)),
                             sample_direction(UniformCap(), 2, p22.h, rng), p22.r, p22.T)
            touched = sum(pairwise_intersects(extra, c) for c in s.cylinders)
            assert abs(add_one_cost("euler", s, extra)) <= touched + 1

    def test_extra_param_mismatch_rejected(self, p22):
        s = sample_tbc(p22, 16, 0)
        with pytest.raises(ValueError):
            with_extra(s, Cylinder((0.0, 0.0), up(2), 0.4, p22.T))


class TestSecondDifference:
    # Bridge-free regime: 3 R_h sqrt(1-h^2) + 4r <= 2 (R_h + r), so cylinders
    # more than 2(R_h + r) apart can share no common neighbor.
    BF = ModelParams(d=2, gamma=1.0, r=0.3, T=1.0, h=0.9, s=8.0)

    def test_distant_extras_have_zero_second_difference(self):
        s = sample_tbc(self.BF, 17, 0)
        rng = replication_rng(17, 1)
        R = self.BF.interaction_radius
        for _ in range(15):
            x_base = rng.uniform(-3, 3, 2)
            offset = rng.normal(size=2)
            offset *= (R + rng.uniform(0.01, 2.0)) / np.linalg.norm(offset)
            x = Cylinder(tuple(x_base), sample_direction(UniformCap(), 2, self.BF.h, rng),
                         self.BF.r, self.BF.T)
            y = Cylinder(tuple(x_base + offset), sample_direction(UniformCap(), 2, self.BF.h, rng),
                         self.BF.r, self.BF.T)
            for kind in ("volume", "isolated", "euler"):
                assert second_difference(kind, s, x, y, m_points=20_000) == 0.0

    def test_iso_bridge_breaks_locality_outside_regime(self):
        # With a fast bridge cylinder meeting both extras, the isolated count
        # has a nonzero second difference even beyond 2(R_h + r); volume and
        # Euler stay exactly local because adding y cannot change anything
        # inside Cyl(x) when the two are disjoint.
        p = ModelParams(d=1, gamma=1.0, r=0.5, T=1.0, h=0.1, s=60.0)
        sp = math.sqrt(1 - p.h**2)
        bridge = hand_sample(p, [[0.9]], np.array([[(sp, p.h)]]))
        x = Cylinder((0.0,), up(1), p.r, p.T)
        y = Cylinder((21.5,), Direction((-sp, p.h)), p.r, p.T)
        assert 21.5 > p.interaction_radius
        assert not pairwise_intersects(x, y)
        assert second_difference("isolated", bridge, x, y) == 1.0
        assert second_difference("euler", bridge, x, y) == 0.0
        assert second_difference("volume", bridge, x, y, m_points=50_000) == 0.0


class TestEvaluateDispatch:
    def test_kinds(self, p22):
        s = sample_tbc(p22, 18, 0)
        assert evaluate("isolated", s).kind == "isolated"
        assert evaluate("euler", s).kind == "euler"
        assert evaluate("volume", s, m_points=2000).kind == "volume"
        with pytest.raises(ValueError):
            evaluate("surface", s)
