"""Closed-form probabilities, expectations, bounds, and CLT constants.

Everything here is a deterministic function of the model parameters except
the pair-intersection probability entering the isolated/Euler variance lower
bounds, which has no closed form and is estimated by Monte Carlo with a
reported standard error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .model import ModelParams
from .sampling import replication_rng, sample_direction_matrix, sample_stacked_direction_matrix


class HypothesisViolation(Exception):
    """A theorem hypothesis (e.g. s >= 6(R_h + r)) does not hold."""


def unit_ball_volume(n: int) -> float:
    """Volume of the n-dimensional unit ball, pi^{n/2} / Gamma(n/2 + 1)."""
    if n < 0:
        raise ValueError("dimension must be nonnegative")
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def spherical_cap_volume(d: int, z: float, w: float) -> float:
    """Volume of the cap of height w of the d-dimensional ball of radius z."""
    if z < 0 or not 0.0 <= w <= 2.0 * z + 1e-15:
        raise ValueError("need 0 <= w <= 2z")
    if z == 0.0:
        return 0.0
    w = min(w, 2.0 * z)
    full = unit_ball_volume(d) * z**d
    if w > z:
        return full - spherical_cap_volume(d, z, 2.0 * z - w)
    x = (2.0 * z * w - w * w) / (z * z)
    return 0.5 * full * float(betainc((d + 1) / 2.0, 0.5, x))


def point_hit_probability(params: ModelParams) -> float:
    """P(x in Z) = 1 - exp(-gamma r^d kappa_d), independent of x."""
    return -math.expm1(-params.gamma * params.r**params.d * unit_ball_volume(params.d))


def expected_covered_volume(params: ModelParams) -> float:
    """(1 - exp(-gamma r^d kappa_d)) * lambda_{d+1}(W_s); identical for stacks."""
    return point_hit_probability(params) * params.window_volume


def cylinder_hit_probability_bounds(params: ModelParams) -> tuple[float, float]:
    """Bounds on P(Cyl(p, v) meets Z), from the shadow-volume bracket."""
    d, g, r = params.d, params.gamma, params.r
    kd = unit_ball_volume(d)
    lower = -math.expm1(-g * (2.0 * r) ** d * kd)
    upper = -math.expm1(-g * (params.max_scope + r) * 2 ** (d + 1) * r**d * kd)
    return lower, upper


def isolated_intensity_bounds(params: ModelParams, a_volume: float) -> tuple[float, float]:
    """Bounds on E[number of isolated cylinders with basepoint in A]."""
    d, g, r = params.d, params.gamma, params.r
    kd = unit_ball_volume(d)
    base = g * a_volume
    lower = base * math.exp(-g * (params.max_scope + r) * 2 ** (d + 1) * r**d * kd)
    upper = base * math.exp(-g * (2.0 * r) ** d * kd)
    return lower, upper


# ---------------------------------------------------------------------------
# Capacity functional for finite point sets.


@dataclass(frozen=True)
class CapacityEstimate:
    value: float
    se: float


def _ball_union_volume(
    centers: np.ndarray, r: float, n_mc: int, rng: np.random.Generator
) -> float:
    """lambda_d of a union of equal balls; exact for <= 2 centers, else MC."""
    d = centers.shape[1]
    kd = unit_ball_volume(d)
    if len(centers) == 1:
        return kd * r**d
    if len(centers) == 2:
        delta = float(np.linalg.norm(centers[0] - centers[1]))
        lens = 2.0 * spherical_cap_volume(d, r, r - delta / 2.0) if delta < 2.0 * r else 0.0
        return 2.0 * kd * r**d - lens
    lo = centers.min(axis=0) - r
    hi = centers.max(axis=0) + r
    pts = lo + (hi - lo) * rng.random((n_mc, d))
    d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    covered = (d2 <= r * r).any(axis=1)
    return float(np.prod(hi - lo)) * covered.mean()


def capacity_functional_pointset(
    params: ModelParams,
    points,
    *,
    n_mc_directions: int = 4096,
    n_mc_union: int = 20_000,
    seed: int = 0,
) -> CapacityEstimate:
    """P(Z meets the finite set C) via the shadow-ball union volume.

    Exact whenever possible (singletons always; pairs under a fixed
    direction); otherwise the direction average and the union volume are
    Monte Carlo estimates and the returned standard error reflects both.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != params.d + 1:
        raise ValueError("points must live in R^d x [0, T]")
    g = params.gamma
    kd = unit_ball_volume(params.d)
    # Deduplicate: coincident points cast the same shadow.
    pts = np.unique(pts, axis=0)
    if len(pts) == 1 or params.r == 0.0:
        integral = kd * params.r**params.d
        return CapacityEstimate(value=-math.expm1(-g * integral), se=0.0)

    rng = replication_rng(seed, 0, 7)
    from .model import Degenerate, Discrete, UniformCap

    law = params.direction_law

    def union_for(v: np.ndarray) -> float:
        shadows = pts[:, :-1] - np.outer(pts[:, -1] / v[-1], v[:-1])
        shadows = np.unique(shadows.round(15), axis=0)
        return _ball_union_volume(shadows, params.r, n_mc_union, rng)

    if isinstance(law, Degenerate):
        v = np.asarray(law.resolved(params.d).v)
        area = union_for(v)
        se_area = 0.0 if len(pts) <= 2 else area / math.sqrt(n_mc_union)
        integral, se = area, se_area
    elif isinstance(law, Discrete):
        areas = np.asarray([union_for(np.asarray(v)) for v in law.directions])
        w = np.asarray(law.weights)
        integral = float(w @ areas)
        se = 0.0 if len(pts) <= 2 else integral / math.sqrt(n_mc_union)
    elif isinstance(law, UniformCap):
        dirs = sample_direction_matrix(law, params.d, params.h, n_mc_directions, rng)
        areas = np.asarray([union_for(v) for v in dirs])
        integral = float(areas.mean())
        se = float(areas.std(ddof=1) / math.sqrt(len(areas)))
    else:
        raise TypeError(f"unknown direction law {law!r}")
    value = -math.expm1(-g * integral)
    return CapacityEstimate(value=value, se=g * math.exp(-g * integral) * se)


# ---------------------------------------------------------------------------
# CLT constants.


@dataclass(frozen=True)
class BoundReport:
    """All closed-form quantities and Malliavin-Stein constants for one functional."""

    kind: str
    kappa_d: float
    kappa_d1: float
    r_h: float
    r_interaction: float
    hit_prob_point: float
    expected_volume: float
    cyl_hit_lower: float
    cyl_hit_upper: float
    iso_intensity_lower: float
    iso_intensity_upper: float
    tau: float | None
    c1: float
    c2: float
    c_drt: float
    wasserstein_c: float
    variance_upper: float
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "kappa_d": self.kappa_d,
            "kappa_{d+1}": self.kappa_d1,
            "R_h": self.r_h,
            "R": self.r_interaction,
            "hit_prob_point": self.hit_prob_point,
            "expected_volume": self.expected_volume,
            "cyl_hit_lower": self.cyl_hit_lower,
            "cyl_hit_upper": self.cyl_hit_upper,
            "iso_intensity_lower": self.iso_intensity_lower,
            "iso_intensity_upper": self.iso_intensity_upper,
            "tau": self.tau,
            "c1": self.c1,
            "c2": self.c2,
            "c_dRT": self.c_drt,
            "wasserstein_c": self.wasserstein_c,
            "variance_upper": self.variance_upper,
            "meta": dict(self.meta),
        }


def c_drt_constant(d: int, r_interaction: float, t: float) -> float:
    """c_{d,R,T} = 2^{2d-1} (R^d + 1/2^d) / T."""
    return 2.0 ** (2 * d - 1) * (r_interaction**d + 2.0**-d) / t


def wasserstein_constant(params: ModelParams, c1: float, c2: float) -> float:
    """Rate constant c with c3 = 0:
    c = gamma sqrt(c_dRT) / c1^{3/2} * (8 sqrt(gamma c1 c2) lambda_d(B(R)) + (1+c2) sqrt(c_dRT)).
    """
    r_int = params.interaction_radius
    cdrt = c_drt_constant(params.d, r_int, params.T)
    ball = unit_ball_volume(params.d) * r_int**params.d
    g = params.gamma
    return (
        g
        * math.sqrt(cdrt)
        / c1**1.5
        * (8.0 * math.sqrt(g * c1 * c2) * ball + (1.0 + c2) * math.sqrt(cdrt))
    )


def poisson_moment4(a: float) -> float:
    """Fourth raw moment of Poisson(a)."""
    return a**4 + 6.0 * a**3 + 7.0 * a**2 + a


def shifted_poisson_moment4(a: float) -> float:
    """E[(2 + N)^4] for N ~ Poisson(a), by expanding and using raw moments."""
    return a**4 + 14.0 * a**3 + 55.0 * a**2 + 65.0 * a + 16.0


def _common_fields(params: ModelParams) -> dict:
    d = params.d
    lo, up = cylinder_hit_probability_bounds(params)
    iso_lo, iso_up = isolated_intensity_bounds(params, params.s**d)
    return {
        "kappa_d": unit_ball_volume(d),
        "kappa_d1": unit_ball_volume(d + 1),
        "r_h": params.max_scope,
        "r_interaction": params.interaction_radius,
        "hit_prob_point": point_hit_probability(params),
        "expected_volume": expected_covered_volume(params),
        "cyl_hit_lower": lo,
        "cyl_hit_upper": up,
        "iso_intensity_lower": iso_lo,
        "iso_intensity_upper": iso_up,
    }


def volume_tau(params: ModelParams) -> float:
    """tau = exp(-2 gamma |B(r)| + 2 gamma |cap_{r/2}(r)|) - exp(-2 gamma |B(r)|)."""
    g, r, d = params.gamma, params.r, params.d
    ball = unit_ball_volume(d) * r**d
    cap = spherical_cap_volume(d, r, r / 2.0)
    return math.exp(-2.0 * g * ball + 2.0 * g * cap) - math.exp(-2.0 * g * ball)


def volume_clt_constants(params: ModelParams) -> BoundReport:
    """Constants for the covered-volume CLT.

    c1 = tau kappa_{d+1} min(r, T)^{d+1} / 2^{d+1}; for a stacked model the
    minimum runs over r and the shortest schedule gap instead of T.
    """
    d = params.d
    tau = volume_tau(params)
    if params.stacking is None:
        gap = params.T
    else:
        grid = params.time_grid()
        gap = min(b - a for a, b in zip(grid, grid[1:]))
    c1 = tau * unit_ball_volume(d + 1) * min(params.r, gap) ** (d + 1) / 2.0 ** (d + 1)
    c2 = (params.T * params.r**d * unit_ball_volume(d) / params.h) ** 4
    return BoundReport(
        kind="volume",
        tau=tau,
        c1=c1,
        c2=c2,
        c_drt=c_drt_constant(d, params.interaction_radius, params.T),
        wasserstein_c=wasserstein_constant(params, c1, c2),
        variance_upper=(1.0 + c2) * params.window_volume,
        **_common_fields(params),
    )


def pair_intersection_probability(
    params: ModelParams, n_pairs: int = 1_000_000, seed: int = 0
) -> tuple[float, float]:
    """MC estimate (with SE) of P(Cyl(X1) meets Cyl(X2)) for two independent
    cylinders with uniform basepoints in the center box of side 2(R_h + r)."""
    rng = replication_rng(seed, 0, 11)
    side = 2.0 * (params.max_scope + params.r)
    hits = 0
    total = 0
    chunk = 200_000
    grid = np.asarray(params.time_grid())
    while total < n_pairs:
        m = min(chunk, n_pairs - total)
        p1 = (rng.random((m, params.d)) - 0.5) * side
        p2 = (rng.random((m, params.d)) - 0.5) * side
        if params.stacking is None:
            v1 = sample_direction_matrix(params.direction_law, params.d, params.h, m, rng)
            v2 = sample_direction_matrix(params.direction_law, params.d, params.h, m, rng)
            mu1 = (v1[:, :-1] / v1[:, -1:])[:, None, :]
            mu2 = (v2[:, :-1] / v2[:, -1:])[:, None, :]
        else:
            v1 = sample_stacked_direction_matrix(
                params.direction_law, params.stacking, params.d, params.h, m, rng
            )
            v2 = sample_stacked_direction_matrix(
                params.direction_law, params.stacking, params.d, params.h, m, rng
            )
            mu1 = v1[:, :, :-1] / v1[:, :, -1:]
            mu2 = v2[:, :, :-1] / v2[:, :, -1:]
        dx = p1 - p2
        best = np.full(m, np.inf)
        for k in range(len(grid) - 1):
            span = float(grid[k + 1] - grid[k])
            dmu = mu1[:, k, :] - mu2[:, k, :]
            a = np.einsum("ij,ij->i", dmu, dmu)
            b = np.einsum("ij,ij->i", dx, dmu)
            tau = np.clip(np.where(a > 0, -b / np.where(a > 0, a, 1.0), 0.0), 0.0, span)
            diff = dx + tau[:, None] * dmu
            best = np.minimum(best, np.einsum("ij,ij->i", diff, diff))
            dx = dx + span * dmu
        hits += int(np.count_nonzero(best <= (2.0 * params.r) ** 2))
        total += m
    p_hat = hits / n_pairs
    return p_hat, math.sqrt(max(p_hat * (1.0 - p_hat), 1e-300) / n_pairs)


def _box_variance_constants(
    params: ModelParams, factor: float, n_mc_pairs: int, seed: int
) -> tuple[float, float, dict]:
    """c1 for the box-decomposition variance bound shared by Iso and chi.

    The window splits into boxes S_i of side 6(R_h + r) with center boxes C_i
    of side 2(R_h + r); conditioning on exactly two points in C_i and none
    elsewhere in S_i gives variance >= c4 * c5 per box, with
    c4 = factor * P(disjoint) * P(intersect) and c5 the Poisson probability of
    the conditioning event.
    """
    rh_r = params.max_scope + params.r
    if params.s < 6.0 * rh_r:
        raise HypothesisViolation(
            f"need s >= 6(R_h + r) = {6.0 * rh_r}, got s = {params.s}"
        )
    d, g = params.d, params.gamma
    p_int, se = pair_intersection_probability(params, n_mc_pairs, seed)
    c4 = factor * p_int * (1.0 - p_int)
    vol_c = (2.0 * rh_r) ** d
    vol_s = (6.0 * rh_r) ** d
    lam_c = g * vol_c
    p_two = math.exp(-lam_c) * lam_c**2 / 2.0
    p_empty = math.exp(-g * (vol_s - vol_c))
    c5 = p_two * p_empty
    c6 = c4 * c5
    c1 = c6 / (6.0**d * params.T * rh_r**d)
    meta = {
        "pair_intersect_prob": p_int,
        "pair_intersect_se": se,
        "c1_se": factor * abs(1.0 - 2.0 * p_int) * se * c5 / (6.0**d * params.T * rh_r**d),
        "c1_is_mc_estimate": True,
        "c4": c4,
        "c5": c5,
    }
    return c1, c6, meta


def isolated_clt_constants(
    params: ModelParams, *, n_mc_pairs: int = 1_000_000, seed: int = 0
) -> BoundReport:
    """Constants for the isolated-cylinder CLT (box decomposition, factor 4)."""
    a = params.gamma * unit_ball_volume(params.d) * params.interaction_radius**params.d
    c2 = poisson_moment4(a) + 1.0
    c1, _, meta = _box_variance_constants(params, 4.0, n_mc_pairs, seed)
    meta["a"] = a
    return BoundReport(
        kind="isolated",
        tau=None,
        c1=c1,
        c2=c2,
        c_drt=c_drt_constant(params.d, params.interaction_radius, params.T),
        wasserstein_c=wasserstein_constant(params, c1, c2),
        variance_upper=(1.0 + c2) * params.window_volume,
        meta=meta,
        **_common_fields(params),
    )


def euler_clt_constants(
    params: ModelParams, *, n_mc_pairs: int = 1_000_000, seed: int = 0
) -> BoundReport:
    """Constants for the Euler-characteristic CLT (factor 5, shifted moment)."""
    a = params.gamma * unit_ball_volume(params.d) * params.interaction_radius**params.d
    c2 = shifted_poisson_moment4(a)
    c1, _, meta = _box_variance_constants(params, 5.0, n_mc_pairs, seed)
    meta["a"] = a
    return BoundReport(
        kind="euler",
        tau=None,
        c1=c1,
        c2=c2,
        c_drt=c_drt_constant(params.d, params.interaction_radius, params.T),
        wasserstein_c=wasserstein_constant(params, c1, c2),
        variance_upper=(1.0 + c2) * params.window_volume,
        meta=meta,
        **_common_fields(params),
    )


def clt_constants(params: ModelParams, kind: str, **kwargs) -> BoundReport:
    if kind == "volume":
        return volume_clt_constants(params)
    if kind == "isolated":
        return isolated_clt_constants(params, **kwargs)
    if kind == "euler":
        return euler_clt_constants(params, **kwargs)
    raise ValueError(f"unknown functional kind {kind!r}")
