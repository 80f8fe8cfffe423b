"""Domain types and exact geometric primitives for time-bounded cylinders.

A node starts at a basepoint p in R^d at time 0 and moves with constant
velocity until the horizon T; its communication zone is a ball of radius r
around the current position.  In space-time R^d x [0,T] this traces a slanted
cylinder.  Direction marks live on the spherical cap
M = {v in S^d : v_{d+1} > h}; the last coordinate encodes (inverse) speed, so
v_{d+1} = 1 is a stationary node and v_{d+1} -> h approaches the speed cap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

NORM_TOL = 1e-12


def _as_floats(xs) -> tuple[float, ...]:
    return tuple(float(x) for x in xs)


@dataclass(frozen=True)
class Direction:
    """Unit vector in R^{d+1} with positive last component.

    ``mu`` is the spatial velocity (length per unit time) and ``scope`` the
    total displacement budget T / v_{d+1} once a horizon is fixed; both are
    derived quantities.
    """

    v: tuple[float, ...]

    def __init__(self, v) -> None:
        object.__setattr__(self, "v", _as_floats(v))
        n = math.sqrt(math.fsum(c * c for c in self.v))
        if abs(n - 1.0) > NORM_TOL:
            raise ValueError(f"direction must be a unit vector, |v| = {n!r}")
        if self.v[-1] <= 0.0:
            raise ValueError("direction must have positive last component")

    @property
    def d(self) -> int:
        return len(self.v) - 1

    @cached_property
    def mu(self) -> np.ndarray:
        """Spatial velocity (v_1, ..., v_d) / v_{d+1}."""
        return np.asarray(self.v[:-1], dtype=float) / self.v[-1]

    def scope(self, horizon: float) -> float:
        """Length of the cylinder spine, T / v_{d+1}."""
        return horizon / self.v[-1]

    @staticmethod
    def straight_up(d: int) -> Direction:
        return Direction((0.0,) * d + (1.0,))


class DirectionLaw:
    """Base class for probability laws on the direction cap."""

    def validate(self, d: int, h: float) -> None:
        raise NotImplementedError


@dataclass(frozen=True)
class UniformCap(DirectionLaw):
    """Uniform probability on {v in S^d : v_{d+1} > h}."""

    def validate(self, d: int, h: float) -> None:
        pass


@dataclass(frozen=True)
class Degenerate(DirectionLaw):
    """A single fixed direction; ``None`` means straight up (stationary)."""

    direction: tuple[float, ...] | None = None

    def resolved(self, d: int) -> Direction:
        if self.direction is None:
            return Direction.straight_up(d)
        return Direction(self.direction)

    def validate(self, d: int, h: float) -> None:
        v = self.resolved(d)
        if v.d != d:
            raise ValueError(f"direction has dimension {v.d}, expected {d}")
        if v.v[-1] <= h:
            raise ValueError(f"direction violates v_{d + 1} > h = {h}")


@dataclass(frozen=True)
class Discrete(DirectionLaw):
    """Finite list of (direction, weight) pairs with directions in the cap."""

    directions: tuple[tuple[float, ...], ...]
    weights: tuple[float, ...]

    def __init__(self, directions, weights) -> None:
        object.__setattr__(
            self, "directions", tuple(_as_floats(v) for v in directions)
        )
        object.__setattr__(self, "weights", _as_floats(weights))

    def validate(self, d: int, h: float) -> None:
        if len(self.directions) != len(self.weights) or not self.directions:
            raise ValueError("directions and weights must pair up nonempty")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if abs(math.fsum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        for raw in self.directions:
            v = Direction(raw)
            if v.d != d:
                raise ValueError(f"direction has dimension {v.d}, expected {d}")
            if v.v[-1] <= h:
                raise ValueError(f"direction {raw} violates v_{d + 1} > h = {h}")


@dataclass(frozen=True)
class StackingSchedule:
    """Interior direction-change times t_1 < ... < t_K and resampling probability q."""

    times: tuple[float, ...]
    q: float

    def __init__(self, times, q) -> None:
        object.__setattr__(self, "times", _as_floats(times))
        object.__setattr__(self, "q", float(q))
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("stacking times must be strictly increasing")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("resampling probability q must lie in [0, 1]")

    @property
    def k(self) -> int:
        return len(self.times)

    def grid(self, horizon: float) -> tuple[float, ...]:
        """Full breakpoint grid (0, t_1, ..., t_K, T)."""
        if self.times and not (0.0 < self.times[0] and self.times[-1] < horizon):
            raise ValueError("stacking times must lie strictly inside (0, T)")
        return (0.0,) + self.times + (horizon,)


@dataclass(frozen=True)
class ModelParams:
    """All scalar parameters of the model.

    d : spatial dimension (ambient space is R^d x [0, T])
    gamma : Poisson intensity of basepoints per unit d-volume
    r : cylinder radius
    T : time horizon
    h : minimum vertical component of directions, in (0, 1)
    s : observation-window side length; W_s = [-s/2, s/2]^d x [0, T]
    """

    d: int
    gamma: float
    r: float
    T: float
    h: float
    s: float
    direction_law: DirectionLaw = field(default_factory=UniformCap)
    stacking: StackingSchedule | None = None

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("spatial dimension d must be a positive integer")
        if not self.gamma > 0:
            raise ValueError("intensity gamma must be positive")
        if self.r < 0:
            raise ValueError("radius r must be nonnegative")
        if not self.T > 0:
            raise ValueError("time horizon T must be positive")
        if not 0.0 < self.h < 1.0:
            raise ValueError("speed cap h must lie in (0, 1)")
        if not self.s > 0:
            raise ValueError("window side s must be positive")
        self.direction_law.validate(self.d, self.h)
        if self.stacking is not None:
            self.stacking.grid(self.T)

    @property
    def max_scope(self) -> float:
        """Largest admissible spine length R_h = T / h."""
        return self.T / self.h

    @property
    def interaction_radius(self) -> float:
        """Basepoint distance beyond which two cylinders cannot meet, 2(R_h + r)."""
        return 2.0 * (self.max_scope + self.r)

    @property
    def dilated_halfwidth(self) -> float:
        """Half-width of the sampling box: a cylinder based farther than
        R_h + r from the spatial window cannot reach it."""
        return self.s / 2.0 + self.max_scope + self.r

    @property
    def window_volume(self) -> float:
        """lambda_{d+1}(W_s) = s^d * T."""
        return self.s**self.d * self.T

    def time_grid(self) -> tuple[float, ...]:
        if self.stacking is None:
            return (0.0, self.T)
        return self.stacking.grid(self.T)


@dataclass(frozen=True)
class Segment:
    """One linear piece of a trajectory: center x0 + (u - t0) * mu on [t0, t1]."""

    t0: float
    t1: float
    x0: np.ndarray
    mu: np.ndarray

    def center(self, u: float) -> np.ndarray:
        return self.x0 + (u - self.t0) * self.mu


@dataclass(frozen=True)
class Cylinder:
    """Time-bounded cylinder: ball of radius r around p + u * mu at each time u."""

    basepoint: tuple[float, ...]
    direction: Direction
    radius: float
    horizon: float

    def __init__(self, basepoint, direction: Direction, radius: float, horizon: float) -> None:
        object.__setattr__(self, "basepoint", _as_floats(basepoint))
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "radius", float(radius))
        object.__setattr__(self, "horizon", float(horizon))
        if len(self.basepoint) != direction.d:
            raise ValueError("basepoint dimension does not match direction")
        if self.radius < 0 or self.horizon <= 0:
            raise ValueError("need radius >= 0 and horizon > 0")

    @cached_property
    def _p(self) -> np.ndarray:
        return np.asarray(self.basepoint, dtype=float)

    def segments(self) -> list[Segment]:
        return [Segment(0.0, self.horizon, self._p, self.direction.mu)]


@dataclass(frozen=True)
class CylinderStack:
    """Piecewise-linear cylinder: direction v_k holds on [t_k, t_{k+1}].

    Waypoints follow the displacement sum
    p_k = p_0 + sum_{j<k} (t_{j+1} - t_j) / v_{j,d+1} * v_j,
    whose time component advances exactly by t_{j+1} - t_j, so the spatial
    position at time u interpolates linearly inside each segment.
    """

    basepoint: tuple[float, ...]
    times: tuple[float, ...]
    directions: tuple[Direction, ...]
    radius: float
    horizon: float

    def __init__(self, basepoint, times, directions, radius: float, horizon: float) -> None:
        object.__setattr__(self, "basepoint", _as_floats(basepoint))
        object.__setattr__(self, "times", _as_floats(times))
        object.__setattr__(self, "directions", tuple(directions))
        object.__setattr__(self, "radius", float(radius))
        object.__setattr__(self, "horizon", float(horizon))
        t = self.times
        if len(t) < 2 or t[0] != 0.0 or abs(t[-1] - self.horizon) > 1e-12:
            raise ValueError("times must run from 0 to the horizon")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("times must be strictly increasing")
        if len(self.directions) != len(t) - 1:
            raise ValueError("need one direction per segment")
        if any(v.d != len(self.basepoint) for v in self.directions):
            raise ValueError("direction dimension does not match basepoint")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @cached_property
    def waypoints(self) -> np.ndarray:
        """Spatial positions at the breakpoints, shape (K+2, d)."""
        pts = [np.asarray(self.basepoint, dtype=float)]
        for k, v in enumerate(self.directions):
            dt = self.times[k + 1] - self.times[k]
            pts.append(pts[-1] + dt * v.mu)
        return np.asarray(pts)

    def segments(self) -> list[Segment]:
        w = self.waypoints
        return [
            Segment(self.times[k], self.times[k + 1], w[k], v.mu)
            for k, v in enumerate(self.directions)
        ]


def position_at(c: Cylinder | CylinderStack, u: float) -> np.ndarray:
    """Spatial position of the trajectory at time u in [0, T]."""
    if not 0.0 <= u <= c.horizon:
        raise ValueError(f"time {u} outside [0, {c.horizon}]")
    if isinstance(c, Cylinder):
        return c._p + u * c.direction.mu
    w = c.waypoints
    # np.searchsorted puts breakpoint times into the segment to their right;
    # both adjacent segments agree there, so the choice is immaterial.
    k = int(np.searchsorted(c.times, u, side="right")) - 1
    k = min(max(k, 0), len(c.directions) - 1)
    return w[k] + (u - c.times[k]) * c.directions[k].mu


def v_shadow(x, v: Direction) -> np.ndarray:
    """Project a space-time point onto R^d x {0} along direction v.

    A cylinder with direction v covers x iff its basepoint lies in the ball
    of radius r around this shadow.
    """
    x = np.asarray(x, dtype=float)
    scale = x[-1] / v.v[-1]
    return x[:-1] - scale * np.asarray(v.v[:-1])


def contains_point(c: Cylinder | CylinderStack, x) -> bool:
    """Closed membership test: |x_spatial - position_at(c, x_{d+1})| <= r."""
    x = np.asarray(x, dtype=float)
    pos = position_at(c, float(x[-1]))
    return float(np.dot(x[:-1] - pos, x[:-1] - pos)) <= c.radius * c.radius


def _segment_min_distance(
    dx0: np.ndarray, dmu: np.ndarray, t0: float, t1: float
) -> tuple[float, float]:
    """Minimum of |dx0 + (u - t0) dmu| over u in [t0, t1], and its argmin.

    Exact closed form: the norm squared is a quadratic in u; the unconstrained
    minimizer is clamped to the segment.  dmu = 0 degenerates to a constant.
    """
    a = float(np.dot(dmu, dmu))
    if a == 0.0:
        return math.sqrt(float(np.dot(dx0, dx0))), t0
    tau = -float(np.dot(dx0, dmu)) / a
    tau = min(max(tau, 0.0), t1 - t0)
    diff = dx0 + tau * dmu
    return math.sqrt(float(np.dot(diff, diff))), t0 + tau


def _merged_segments(a, b):
    """Pairs of co-temporal segments of a and b over the union of breakpoints."""
    sa, sb = a.segments(), b.segments()
    cuts = sorted({s.t0 for s in sa + sb} | {s.t1 for s in sa + sb})
    ia = ib = 0
    for t0, t1 in zip(cuts, cuts[1:]):
        while sa[ia].t1 <= t0 and ia < len(sa) - 1:
            ia += 1
        while sb[ib].t1 <= t0 and ib < len(sb) - 1:
            ib += 1
        yield t0, t1, sa[ia], sb[ib]


def pairwise_min_distance(
    a: Cylinder | CylinderStack, b: Cylinder | CylinderStack
) -> tuple[float, float]:
    """Minimum inter-center distance over the common time range, with argmin."""
    if a.horizon != b.horizon:
        raise ValueError("cylinders must share the time horizon")
    best = (math.inf, 0.0)
    for t0, t1, seg_a, seg_b in _merged_segments(a, b):
        dx0 = seg_a.center(t0) - seg_b.center(t0)
        dmu = seg_a.mu - seg_b.mu
        dist, u = _segment_min_distance(dx0, dmu, t0, t1)
        if dist < best[0]:
            best = (dist, u)
    return best


def pairwise_intersects(a: Cylinder | CylinderStack, b: Cylinder | CylinderStack) -> bool:
    """Whether two cylinders meet anywhere over [0, T] (closed-set convention)."""
    if a.radius != b.radius:
        raise ValueError("cylinders must share the radius")
    dist, _ = pairwise_min_distance(a, b)
    return dist <= 2.0 * a.radius


def pairwise_intersects_stacked(a: CylinderStack, b: CylinderStack) -> bool:
    """Segment-merged exact intersection test for cylinder stacks."""
    return pairwise_intersects(a, b)
