"""Common-intersection tests for collections of cylinders.

The k-wise test decides whether k cylinder pieces share a point inside the
observation window.  For pieces with affine centers c_i(u) the quantity

    g(u) = min_{x in box} max_i |x - c_i(u)|

is convex in u, so the pieces meet inside the window iff min_u g(u) <= r.
The inner problem is a 1-center (minimax) problem constrained to a box: for
d = 1 the whole program is piecewise linear and solved exactly over candidate
breakpoints; for d = 2 the inner problem is solved exactly (unconstrained
minimal enclosing ball, else per-edge candidate scan); for d >= 3 the
constrained inner problem falls back to a numeric solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Cylinder, CylinderStack

FEAS_EPS = 1e-9          # tangency band half-width on the reach value
TERNARY_REL_WIDTH = 1e-10  # outer search width relative to the horizon
INNER_TOL = 1e-10


class IndeterminateIntersection(Exception):
    """Raised in strict mode when the reach lies inside the tangency band."""


@dataclass(frozen=True)
class Piece:
    """Convex cylinder piece: ball of radius r around x0 + (u - t0) mu, u in [t0, t1]."""

    t0: float
    t1: float
    x0: np.ndarray
    mu: np.ndarray

    def center(self, u: float) -> np.ndarray:
        return self.x0 + (u - self.t0) * self.mu


def pieces_of(c: Cylinder | CylinderStack) -> list[Piece]:
    return [Piece(s.t0, s.t1, s.x0, s.mu) for s in c.segments()]


@dataclass(frozen=True)
class ReachResult:
    """Minimal max-distance from a window point to all piece centers."""

    reach: float
    feasible: bool
    indeterminate: bool


def _classify(reach: float, radius: float, eps: float) -> ReachResult:
    return ReachResult(
        reach=reach,
        feasible=reach <= radius + eps,
        indeterminate=(radius - eps) < reach <= (radius + eps),
    )


# ---------------------------------------------------------------------------
# Minimal enclosing ball (Welzl) for up to a handful of points.


def _circumball(points: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """Smallest ball with the given <= d+1 points on its boundary.

    The center is sought inside the affine hull of the points (Gram system),
    which is what makes the ball minimal among those through all of them.
    """
    if not points:
        return np.zeros(0), 0.0
    p0 = points[0]
    if len(points) == 1:
        return p0.copy(), 0.0
    q = np.asarray([p - p0 for p in points[1:]])
    gram = 2.0 * (q @ q.T)
    rhs = np.einsum("ij,ij->i", q, q)
    try:
        lam = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        lam, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    center = p0 + lam @ q
    rad = max(float(np.linalg.norm(p - center)) for p in points)
    return center, rad


def _welzl(points: list[np.ndarray], boundary: list[np.ndarray], d: int):
    if not points or len(boundary) == d + 1:
        return _circumball(boundary)
    p = points[-1]
    center, rad = _welzl(points[:-1], boundary, d)
    if center.size and float(np.linalg.norm(p - center)) <= rad + 1e-12:
        return center, rad
    return _welzl(points[:-1], boundary + [p], d)


def min_enclosing_ball(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact smallest enclosing ball of a small point set (any dimension)."""
    pts = [np.asarray(p, dtype=float) for p in points]
    if not pts:
        raise ValueError("need at least one point")
    d = len(pts[0])
    if len(pts) == 1:
        return pts[0], 0.0
    if len(pts) == 2:
        return 0.5 * (pts[0] + pts[1]), 0.5 * float(np.linalg.norm(pts[0] - pts[1]))
    return _welzl(pts, [], d)


# ---------------------------------------------------------------------------
# Constrained 1-center: min over the box [-W, W]^d of max_i |x - c_i|.


def _one_center_interval(centers: np.ndarray, halfwidth: float) -> float:
    lo, hi = float(centers.min()), float(centers.max())
    x = min(max(0.5 * (lo + hi), -halfwidth), halfwidth)
    return max(hi - x, x - lo)


def _edge_scan_1d(a: np.ndarray, k: np.ndarray, t_lo: float, t_hi: float) -> float:
    """Minimize max_i sqrt((t - a_i)^2 + k_i) over t in [t_lo, t_hi].

    All parabolas share curvature 1, so the upper envelope's minimizer is a
    pairwise crossing (a linear equation) or a parabola vertex or an endpoint.
    """
    cand = [t_lo, t_hi]
    cand.extend(float(t) for t in np.clip(a, t_lo, t_hi))
    n = len(a)
    for i in range(n):
        for j in range(i + 1, n):
            da = a[i] - a[j]
            if da != 0.0:
                t = ((a[i] ** 2 + k[i]) - (a[j] ** 2 + k[j])) / (2.0 * da)
                if t_lo <= t <= t_hi:
                    cand.append(float(t))
    best = math.inf
    for t in cand:
        val = float(np.max((t - a) ** 2 + k))
        if val < best:
            best = val
    return math.sqrt(best)


def _one_center_box(centers: np.ndarray, halfwidth: float) -> float:
    """min over x in [-W, W]^d of max_i |x - c_i|, exact for d <= 2."""
    d = centers.shape[1]
    if d == 1:
        return _one_center_interval(centers[:, 0], halfwidth)
    center, rad = min_enclosing_ball(centers)
    if np.all(np.abs(center) <= halfwidth + 1e-15):
        return rad
    if d == 2:
        best = math.inf
        for axis in (0, 1):
            other = 1 - axis
            for side in (-halfwidth, halfwidth):
                k = (side - centers[:, axis]) ** 2
                best = min(
                    best,
                    _edge_scan_1d(centers[:, other], k, -halfwidth, halfwidth),
                )
        return best
    return _one_center_numeric(centers, halfwidth)


def _one_center_numeric(centers: np.ndarray, halfwidth: float) -> float:
    from scipy.optimize import minimize

    d = centers.shape[1]
    bounds = [(-halfwidth, halfwidth)] * d

    def objective(x):
        return np.max(np.sqrt(np.sum((centers - x) ** 2, axis=1)))

    starts = [np.clip(centers.mean(axis=0), -halfwidth, halfwidth)]
    starts.extend(np.clip(c, -halfwidth, halfwidth) for c in centers)
    best = math.inf
    for x0 in starts:
        res = minimize(objective, x0, method="SLSQP", bounds=bounds, tol=INNER_TOL)
        best = min(best, float(res.fun))
    return best


# ---------------------------------------------------------------------------
# Exact d = 1 path: everything is piecewise linear in u.


def _min_reach_1d(pieces: list[Piece], lo: float, hi: float, halfwidth: float) -> float:
    a = np.asarray([p.x0[0] - p.t0 * p.mu[0] for p in pieces])  # intercepts at u = 0
    b = np.asarray([p.mu[0] for p in pieces])

    cand = {lo, hi}
    n = len(pieces)
    for i in range(n):
        for j in range(i, n):
            db = b[i] - b[j]
            if i != j and db != 0.0:
                u = (a[j] - a[i]) / db  # c_i(u) = c_j(u): max/min switch
                if lo <= u <= hi:
                    cand.add(float(u))
            sb = b[i] + b[j]
            for bound in (-2.0 * halfwidth, 2.0 * halfwidth):
                if math.isfinite(bound) and sb != 0.0:
                    u = (bound - (a[i] + a[j])) / sb  # clamp switch of the midpoint
                    if lo <= u <= hi:
                        cand.add(float(u))

    best = math.inf
    for u in cand:
        c = a + u * b
        cmin, cmax = float(c.min()), float(c.max())
        x = 0.5 * (cmin + cmax)
        if math.isfinite(halfwidth):
            x = min(max(x, -halfwidth), halfwidth)
        best = min(best, max(cmax - x, x - cmin))
    return best


def _ternary_min(g, lo: float, hi: float, width: float, stop_below: float = -math.inf) -> float:
    """Minimize a convex function over [lo, hi] by ternary search.

    Any value <= stop_below is returned immediately: it already upper-bounds
    the true minimum, which is all a decisive feasibility check needs.
    """
    best = min(g(lo), g(hi))
    if best <= stop_below:
        return best
    while hi - lo > width:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        g1, g2 = g(m1), g(m2)
        best = min(best, g1, g2)
        if best <= stop_below:
            return best
        if g1 <= g2:
            hi = m2
        else:
            lo = m1
    return min(best, g(0.5 * (lo + hi)))


def min_reach(
    pieces: list[Piece], halfwidth: float = math.inf, stop_below: float = -math.inf
) -> float:
    """min over (x, u) in box x common-time of max_i |x - c_i(u)|.

    Returns inf when the pieces share no time instant.  ``halfwidth`` is s/2
    for the centered spatial window, or inf for all of R^d.  A value at or
    below ``stop_below`` may be returned before full convergence (it is still
    an upper bound on the true minimum).
    """
    if not pieces:
        raise ValueError("need at least one piece")
    lo = max(p.t0 for p in pieces)
    hi = min(p.t1 for p in pieces)
    if lo > hi:
        return math.inf
    d = len(pieces[0].x0)
    if d == 1:
        return _min_reach_1d(pieces, lo, hi, halfwidth)
    if lo == hi:
        centers = np.asarray([p.center(lo) for p in pieces])
        return _one_center_box(centers, halfwidth)

    def g(u: float) -> float:
        centers = np.asarray([p.center(u) for p in pieces])
        return _one_center_box(centers, halfwidth)

    horizon = max(p.t1 for p in pieces)
    return _ternary_min(g, lo, hi, TERNARY_REL_WIDTH * max(horizon, 1e-300), stop_below)


def kwise_reach(
    cylinders: list[Cylinder | CylinderStack], halfwidth: float = math.inf
) -> ReachResult:
    """Reach classification for whole cylinders (stacks handled per segment).

    For stacks the center path is only piecewise affine, so the search runs
    separately over each merged time segment, where convexity holds.
    """
    if not cylinders:
        raise ValueError("need at least one cylinder")
    radius = cylinders[0].radius
    if any(c.radius != radius for c in cylinders):
        raise ValueError("cylinders must share the radius")
    all_pieces = [pieces_of(c) for c in cylinders]
    cuts = sorted({t for ps in all_pieces for p in ps for t in (p.t0, p.t1)})
    best = math.inf
    for t0, t1 in zip(cuts, cuts[1:]):
        group = []
        for ps in all_pieces:
            seg = next((p for p in ps if p.t0 <= t0 and t1 <= p.t1), None)
            if seg is None:
                group = None
                break
            group.append(Piece(t0, t1, seg.center(t0), seg.mu))
        if group is not None:
            best = min(best, min_reach(group, halfwidth))
    return _classify(best, radius, FEAS_EPS)


def kwise_intersection_nonempty(
    cylinders: list[Cylinder | CylinderStack],
    window_halfwidth: float = math.inf,
    *,
    strict: bool = False,
) -> bool:
    """Whether all cylinders share a point (x, u) with x in the spatial window.

    Adding a cylinder can only shrink the intersection, and for two cylinders
    with an unbounded window this agrees with the pairwise closed form.  In
    strict mode a reach inside the tangency band raises
    IndeterminateIntersection instead of deciding.
    """
    res = kwise_reach(cylinders, window_halfwidth)
    if strict and res.indeterminate:
        raise IndeterminateIntersection(
            f"reach {res.reach!r} within {FEAS_EPS} of radius"
        )
    return res.feasible
