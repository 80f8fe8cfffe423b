import math

import numpy as np
import pytest

from tbcsim import (
    Cylinder,
    CylinderStack,
    Degenerate,
    Direction,
    Discrete,
    ModelParams,
    StackingSchedule,
    UniformCap,
    contains_point,
    pairwise_intersects,
    pairwise_intersects_stacked,
    pairwise_min_distance,
    position_at,
    v_shadow,
)
from tbcsim.sampling import replication_rng, sample_direction

from conftest import dense_min_distance

S2 = 1.0 / math.sqrt(2.0)


def up(d):
    return Direction.straight_up(d)


class TestDirection:
    def test_rejects_non_unit_vector(self):
        with pytest.raises(ValueError, match="unit"):
            Direction((1.0, 1.0))

    def test_rejects_nonpositive_last_component(self):
        with pytest.raises(ValueError):
            Direction((1.0, 0.0))

    def test_spatial_velocity_and_scope(self):
        v = Direction((-S2, 0.0, S2))
        assert np.allclose(v.mu, [-1.0, 0.0])
        assert v.scope(2.0) == pytest.approx(2.0 * math.sqrt(2.0))

    def test_straight_up_is_stationary(self):
        assert np.allclose(up(3).mu, 0.0)


class TestModelParams:
    def test_invariants(self):
        with pytest.raises(ValueError):
            ModelParams(d=2, gamma=0.0, r=0.3, T=1.0, h=0.5, s=4.0)
        with pytest.raises(ValueError):
            ModelParams(d=2, gamma=1.0, r=0.3, T=1.0, h=1.5, s=4.0)
        with pytest.raises(ValueError):
            ModelParams(d=2, gamma=1.0, r=-0.1, T=1.0, h=0.5, s=4.0)

    def test_direction_law_validated_against_cap(self):
        with pytest.raises(ValueError):
            ModelParams(
                d=2, gamma=1.0, r=0.3, T=1.0, h=0.9,
                direction_law=Degenerate((S2, 0.0, S2)), s=4.0,
            )
        with pytest.raises(ValueError):
            Discrete(((0.0, 0.0, 1.0),), (0.5,)).validate(2, 0.5)

    def test_derived_quantities(self):
        p = ModelParams(d=2, gamma=1.0, r=0.3, T=1.0, h=0.5, s=8.0)
        assert p.max_scope == pytest.approx(2.0)
        assert p.interaction_radius == pytest.approx(4.6)
        assert p.dilated_halfwidth == pytest.approx(4.0 + 2.3)
        assert p.window_volume == pytest.approx(64.0)


class TestPositionAt:
    def test_stationary_stays_at_basepoint(self):
        c = Cylinder((1.5, -2.0), up(2), 0.3, 1.0)
        for u in (0.0, 0.4, 1.0):
            assert np.allclose(position_at(c, u), [1.5, -2.0])

    def test_velocity_from_direction(self):
        c = Cylinder((0.0, 0.0), Direction((-S2, 0.0, S2)), 0.25, 1.0)
        assert np.allclose(position_at(c, 1.0), [-1.0, 0.0])

    def test_stack_piecewise_integration(self):
        stack = CylinderStack(
            (0.0, 0.0), (0.0, 0.5, 1.0), (up(2), Direction((S2, 0.0, S2))), 0.25, 1.0
        )
        assert np.allclose(position_at(stack, 1.0), [0.5, 0.0])

    def test_rejects_time_outside_horizon(self):
        c = Cylinder((0.0,), up(1), 0.3, 1.0)
        with pytest.raises(ValueError):
            position_at(c, 1.2)
        with pytest.raises(ValueError):
            position_at(c, -0.1)

    def test_stack_continuous_at_breakpoints(self):
        rng = replication_rng(7, 0)
        times = (0.0, 0.25, 0.6, 1.0)
        for _ in range(25):
            dirs = tuple(sample_direction(UniformCap(), 2, 0.5, rng) for _ in range(3))
            stack = CylinderStack(tuple(rng.uniform(-1, 1, 2)), times, dirs, 0.3, 1.0)
            for k, t in enumerate(times[1:-1], start=1):
                left = stack.waypoints[k - 1] + (t - times[k - 1]) * dirs[k - 1].mu
                right = stack.waypoints[k]
                assert np.linalg.norm(left - right) < 1e-9
                assert np.allclose(position_at(stack, t), right)

    def test_waypoint_displacement_sum(self):
        v = Direction((0.6, 0.0, 0.8))
        stack = CylinderStack((1.0, 1.0), (0.0, 0.4, 1.0), (v, up(2)), 0.3, 1.0)
        # displacement over [0, 0.4] is dt * v_spatial / v_{d+1}
        assert np.allclose(stack.waypoints[1], [1.0 + 0.4 * 0.75, 1.0])
        assert np.allclose(stack.waypoints[2], stack.waypoints[1])


class TestVShadow:
    def test_zero_height_is_identity(self):
        assert np.allclose(v_shadow((2.0, -1.0, 0.0), Direction((S2, 0.0, S2))), [2.0, -1.0])

    def test_vertical_projection(self):
        assert np.allclose(v_shadow((3.0, 4.0, 0.7), up(2)), [3.0, 4.0])

    def test_slanted_formula(self):
        assert np.allclose(v_shadow((3.0, 2.0), Direction((S2, S2))), [1.0])

    def test_shadow_characterizes_coverage(self):
        # a cylinder covers x iff its basepoint is within r of the shadow
        rng = replication_rng(3, 0)
        for _ in range(50):
            v = sample_direction(UniformCap(), 2, 0.5, rng)
            x = np.append(rng.uniform(-2, 2, 2), rng.uniform(0, 1))
            shadow = v_shadow(x, v)
            for _ in range(5):
                p = shadow + rng.normal(scale=0.4, size=2)
                cyl = Cylinder(tuple(p), v, 0.3, 1.0)
                assert contains_point(cyl, x) == (np.linalg.norm(p - shadow) <= 0.3)


class TestContainsPoint:
    def test_point_on_trajectory(self):
        c = Cylinder((0.0, 0.0), Direction((-S2, 0.0, S2)), 0.25, 1.0)
        assert contains_point(c, (-0.5, 0.0, 0.5))

    def test_outside_radius(self):
        c = Cylinder((0.0, 0.0), up(2), 0.5, 1.0)
        assert not contains_point(c, (0.6, 0.0, 0.3))

    def test_boundary_is_closed(self):
        c = Cylinder((0.0, 0.0), up(2), 0.5, 1.0)
        assert contains_point(c, (0.5, 0.0, 0.9))


class TestPairwise:
    def test_stationary_pairs(self):
        a = Cylinder((0.0, 0.0), up(2), 0.25, 1.0)
        assert not pairwise_intersects(a, Cylinder((0.75, 0.0), up(2), 0.25, 1.0))
        assert pairwise_intersects(a, Cylinder((0.5, 0.0), up(2), 0.25, 1.0))

    def test_moving_pair_meets_at_end(self):
        a = Cylinder((0.0, 0.0), up(2), 0.25, 1.0)
        b = Cylinder((1.0, 0.0), Direction((-S2, 0.0, S2)), 0.25, 1.0)
        assert pairwise_intersects(a, b)
        dist, u = pairwise_min_distance(a, b)
        assert dist == pytest.approx(0.0, abs=1e-12)
        assert u == pytest.approx(1.0)

    def test_interaction_radius_bound(self):
        # basepoints farther than 2(R_h + r) can never meet
        p = ModelParams(d=2, gamma=1.0, r=0.3, T=1.0, h=0.5, s=8.0)
        rng = replication_rng(11, 0)
        for _ in range(200):
            v1 = sample_direction(UniformCap(), 2, p.h, rng)
            v2 = sample_direction(UniformCap(), 2, p.h, rng)
            q = rng.uniform(-1, 1, 2)
            q = q / np.linalg.norm(q) * (p.interaction_radius + rng.uniform(1e-9, 3.0))
            a = Cylinder((0.0, 0.0), v1, p.r, p.T)
            b = Cylinder(tuple(q), v2, p.r, p.T)
            assert not pairwise_intersects(a, b)

    def test_symmetry_and_translation_invariance(self):
        rng = replication_rng(12, 0)
        for _ in range(100):
            v1 = sample_direction(UniformCap(), 2, 0.5, rng)
            v2 = sample_direction(UniformCap(), 2, 0.5, rng)
            pa, pb = rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 2)
            shift = rng.uniform(-10, 10, 2)
            a = Cylinder(tuple(pa), v1, 0.3, 1.0)
            b = Cylinder(tuple(pb), v2, 0.3, 1.0)
            a2 = Cylinder(tuple(pa + shift), v1, 0.3, 1.0)
            b2 = Cylinder(tuple(pb + shift), v2, 0.3, 1.0)
            assert pairwise_intersects(a, b) == pairwise_intersects(b, a)
            d1, _ = pairwise_min_distance(a, b)
            d2, _ = pairwise_min_distance(a2, b2)
            assert d1 == pytest.approx(d2, abs=1e-9)

    def test_closed_form_matches_dense_grid_oracle(self):
        rng = replication_rng(13, 0)
        for _ in range(150):
            v1 = sample_direction(UniformCap(), 2, 0.5, rng)
            v2 = sample_direction(UniformCap(), 2, 0.5, rng)
            a = Cylinder(tuple(rng.uniform(-3, 3, 2)), v1, 0.3, 1.0)
            b = Cylinder(tuple(rng.uniform(-3, 3, 2)), v2, 0.3, 1.0)
            closed, _ = pairwise_min_distance(a, b)
            oracle = dense_min_distance(a, b, steps=4000)
            assert closed <= oracle + 1e-12
            assert oracle - closed < 1.0 / 4000  # grid resolution error

    def test_mismatched_radius_or_horizon_rejected(self):
        a = Cylinder((0.0,), up(1), 0.3, 1.0)
        with pytest.raises(ValueError):
            pairwise_intersects(a, Cylinder((1.0,), up(1), 0.4, 1.0))
        with pytest.raises(ValueError):
            pairwise_min_distance(a, Cylinder((1.0,), up(1), 0.3, 2.0))


class TestPairwiseStacked:
    def test_stationary_stacks(self):
        times = (0.0, 0.5, 1.0)
        a = CylinderStack((0.0, 0.0), times, (up(2), up(2)), 0.3, 1.0)
        b = CylinderStack((0.5, 0.0), times, (up(2), up(2)), 0.3, 1.0)
        assert pairwise_intersects_stacked(a, b)

    def test_degenerate_stack_equals_plain_cylinder(self):
        rng = replication_rng(14, 0)
        for _ in range(50):
            v1 = sample_direction(UniformCap(), 2, 0.5, rng)
            v2 = sample_direction(UniformCap(), 2, 0.5, rng)
            pa, pb = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
            a, b = Cylinder(tuple(pa), v1, 0.3, 1.0), Cylinder(tuple(pb), v2, 0.3, 1.0)
            sa = CylinderStack(tuple(pa), (0.0, 1.0), (v1,), 0.3, 1.0)
            sb = CylinderStack(tuple(pb), (0.0, 1.0), (v2,), 0.3, 1.0)
            d_plain, _ = pairwise_min_distance(a, b)
            d_stack, _ = pairwise_min_distance(sa, sb)
            assert d_plain == pytest.approx(d_stack, abs=1e-12)

    def test_approach_in_middle_segment(self):
        # two 3-segment stacks built to come close only in the middle segment
        times = (0.0, 0.3, 0.7, 1.0)
        toward = Direction((S2, 0.0, S2))
        away = Direction((-S2, 0.0, S2))
        a = CylinderStack((-1.5, 0.0), times, (up(2), toward, up(2)), 0.3, 1.0)
        b = CylinderStack((1.5, 0.0), times, (up(2), away, up(2)), 0.3, 1.0)
        dist, u_min = pairwise_min_distance(a, b)
        assert 0.3 <= u_min <= 0.7
        oracle = dense_min_distance(a, b, steps=4000)
        assert dist == pytest.approx(oracle, abs=1e-3)
        assert pairwise_intersects_stacked(a, b) == (dist <= 0.6)

    def test_merged_grid_matches_oracle_on_random_stacks(self):
        rng = replication_rng(15, 0)
        times_a = (0.0, 0.25, 0.5, 0.75, 1.0)
        times_b = (0.0, 0.4, 0.6, 1.0)
        for _ in range(60):
            da = tuple(sample_direction(UniformCap(), 2, 0.5, rng) for _ in range(4))
            db = tuple(sample_direction(UniformCap(), 2, 0.5, rng) for _ in range(3))
            a = CylinderStack(tuple(rng.uniform(-2, 2, 2)), times_a, da, 0.3, 1.0)
            b = CylinderStack(tuple(rng.uniform(-2, 2, 2)), times_b, db, 0.3, 1.0)
            closed, _ = pairwise_min_distance(a, b)
            oracle = dense_min_distance(a, b, steps=4000)
            assert closed <= oracle + 1e-12
            assert oracle - closed < 2.0 / 4000
