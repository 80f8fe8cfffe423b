"""The three studied functionals on a realization restricted to the window.

* covered volume of the union, by hit-or-miss Monte Carlo;
* number of isolated cylinders with basepoint in the spatial window;
* Euler characteristic, by inclusion-exclusion over the nerve of the convex
  pieces (whole cylinders, or per-segment sub-cylinders of stacks), plus an
  independent voxel oracle for ambient dimension <= 3.

The add-one-cost operator evaluates f(xi + delta_x) - f(xi); for the volume
both evaluations share one integration-point stream, so locality statements
hold exactly in the estimator rather than just in distribution.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .intersection import FEAS_EPS, Piece, min_reach
from .model import Cylinder, CylinderStack
from .sampling import CylinderSample, PackedCylinders, replication_rng, with_extra

KINDS = ("volume", "isolated", "euler")

MAX_SIMPLEX_SIZE = 12


class NerveSizeError(Exception):
    """Raised when clique enumeration would exceed the simplex-size cap."""


@dataclass(frozen=True)
class FunctionalResult:
    kind: str
    value: float
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "meta": dict(self.meta)}


# ---------------------------------------------------------------------------
# Covered volume.


class _UniformGrid:
    """Dense fixed-cell index over points in the centered spatial box."""

    def __init__(self, points: np.ndarray, halfwidth: float, target_cell: float):
        self.halfwidth = halfwidth
        d = points.shape[1]
        self.ncells = max(1, int(math.ceil(2.0 * halfwidth / target_cell)))
        self.cell = 2.0 * halfwidth / self.ncells
        axis_ids = np.clip(
            ((points + halfwidth) / self.cell).astype(np.int64), 0, self.ncells - 1
        )
        flat = np.zeros(len(points), dtype=np.int64)
        for a in range(d):
            flat = flat * self.ncells + axis_ids[:, a]
        self.d = d
        counts = np.bincount(flat, minlength=self.ncells**d)
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self.order = np.argsort(flat, kind="stable")

    def query_box(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        if np.any(hi < -self.halfwidth) or np.any(lo > self.halfwidth):
            return np.empty(0, dtype=np.int64)
        a0 = np.clip(((lo + self.halfwidth) / self.cell).astype(np.int64), 0, self.ncells - 1)
        a1 = np.clip(((hi + self.halfwidth) / self.cell).astype(np.int64), 0, self.ncells - 1)
        ranges = [range(int(a0[a]), int(a1[a]) + 1) for a in range(self.d)]
        chunks = []
        for combo in itertools.product(*ranges):
            fid = 0
            for c in combo:
                fid = fid * self.ncells + c
            s, e = self.offsets[fid], self.offsets[fid + 1]
            if e > s:
                chunks.append(self.order[s:e])
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)


def _cover_mask(
    packed: PackedCylinders, points: np.ndarray, times: np.ndarray, halfwidth: float
) -> np.ndarray:
    """Boolean mask of integration points covered by the union of cylinders."""
    m = len(points)
    mask = np.zeros(m, dtype=bool)
    if packed.n == 0 or m == 0:
        return mask
    r = packed.radius
    r2 = r * r
    grid = _UniformGrid(points, halfwidth, target_cell=max(2.0 * r, halfwidth / 12.0, 1e-9))
    tgrid = packed.times
    many_segments = len(tgrid) > 2
    for k in range(len(tgrid) - 1):
        t0, t1 = float(tgrid[k]), float(tgrid[k + 1])
        x0s = packed.waypoints[:, k, :]
        mus = packed.velocities[:, k, :]
        ends = x0s + (t1 - t0) * mus
        los = np.minimum(x0s, ends) - r
        his = np.maximum(x0s, ends) + r
        for i in range(packed.n):
            idx = grid.query_box(los[i], his[i])
            if idx.size == 0:
                continue
            if many_segments:
                sel = (times[idx] >= t0) & (times[idx] <= t1)
                idx = idx[sel]
                if idx.size == 0:
                    continue
            delta = points[idx] - (x0s[i] + (times[idx] - t0)[:, None] * mus[i])
            mask[idx[np.einsum("ij,ij->i", delta, delta) <= r2]] = True
    return mask


def _extra_cover_mask(
    extra: Cylinder | CylinderStack, points: np.ndarray, times: np.ndarray
) -> np.ndarray:
    mask = np.zeros(len(points), dtype=bool)
    r2 = extra.radius**2
    for seg in extra.segments():
        sel = (times >= seg.t0) & (times <= seg.t1)
        if not sel.any():
            continue
        delta = points[sel] - (seg.x0 + (times[sel] - seg.t0)[:, None] * seg.mu)
        hit = np.einsum("ij,ij->i", delta, delta) <= r2
        idx = np.flatnonzero(sel)
        mask[idx[hit]] = True
    return mask


def _draw_points(
    sample: CylinderSample, m_points: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    p = sample.params
    points = (rng.random((m_points, p.d)) - 0.5) * p.s
    times = rng.random(m_points) * p.T
    return points, times


def covered_volume_mc(
    sample: CylinderSample, m_points: int, rng: np.random.Generator
) -> FunctionalResult:
    """Hit-or-miss estimate of lambda_{d+1}(Z cap W_s)."""
    if m_points < 1:
        raise ValueError("need at least one integration point")
    p = sample.params
    points, times = _draw_points(sample, m_points, rng)
    mask = _cover_mask(sample.packed, points, times, p.s / 2.0)
    p_hat = mask.mean()
    lam = p.window_volume
    se = lam * math.sqrt(p_hat * (1.0 - p_hat) / m_points)
    return FunctionalResult(
        kind="volume",
        value=lam * p_hat,
        meta={"M": m_points, "se": se},
    )


# ---------------------------------------------------------------------------
# Isolated cylinders.


def _pair_min_distances(packed: PackedCylinders, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    """Closed-form min inter-center distance over [0, T] for index pairs."""
    tgrid = packed.times
    best = np.full(len(ii), np.inf)
    for k in range(len(tgrid) - 1):
        span = float(tgrid[k + 1] - tgrid[k])
        dx0 = packed.waypoints[ii, k, :] - packed.waypoints[jj, k, :]
        dmu = packed.velocities[ii, k, :] - packed.velocities[jj, k, :]
        a = np.einsum("ij,ij->i", dmu, dmu)
        b = np.einsum("ij,ij->i", dx0, dmu)
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = np.where(a > 0.0, -b / np.where(a > 0.0, a, 1.0), 0.0)
        tau = np.clip(tau, 0.0, span)
        diff = dx0 + tau[:, None] * dmu
        best = np.minimum(best, np.sqrt(np.einsum("ij,ij->i", diff, diff)))
    return best


def _intersecting_pairs(packed: PackedCylinders, prune_radius: float) -> np.ndarray:
    """Index pairs (i, j) of cylinders that meet, pruned by basepoint distance."""
    if packed.n < 2:
        return np.empty((0, 2), dtype=np.int64)
    tree = cKDTree(packed.basepoints)
    pairs = tree.query_pairs(prune_radius, output_type="ndarray")
    if len(pairs) == 0:
        return pairs.reshape(0, 2)
    dmin = _pair_min_distances(packed, pairs[:, 0], pairs[:, 1])
    return pairs[dmin <= 2.0 * packed.radius]


def isolated_count(sample: CylinderSample) -> FunctionalResult:
    """Cylinders with basepoint in the spatial window meeting no other cylinder."""
    p = sample.params
    packed = sample.packed
    in_window = np.all(np.abs(packed.basepoints) <= p.s / 2.0, axis=1)
    non_isolated = np.zeros(packed.n, dtype=bool)
    pairs = _intersecting_pairs(packed, p.interaction_radius)
    if len(pairs):
        non_isolated[pairs[:, 0]] = True
        non_isolated[pairs[:, 1]] = True
    value = int(np.count_nonzero(in_window & ~non_isolated))
    return FunctionalResult(
        kind="isolated",
        value=value,
        meta={"n_window": int(np.count_nonzero(in_window))},
    )


# ---------------------------------------------------------------------------
# Euler characteristic via the nerve of the convex pieces.


@dataclass(frozen=True)
class _PieceSet:
    """Per-segment convex pieces of a sample, in array form."""

    t0: np.ndarray
    t1: np.ndarray
    x0: np.ndarray
    mu: np.ndarray
    radius: float

    @property
    def n(self) -> int:
        return len(self.t0)

    def piece(self, i: int) -> Piece:
        return Piece(float(self.t0[i]), float(self.t1[i]), self.x0[i], self.mu[i])


def _pieces_array(packed: PackedCylinders) -> _PieceSet:
    tgrid = packed.times
    nseg = len(tgrid) - 1
    n = packed.n
    t0 = np.repeat(tgrid[:-1][None, :], n, axis=0).ravel()
    t1 = np.repeat(tgrid[1:][None, :], n, axis=0).ravel()
    x0 = packed.waypoints[:, :-1, :].reshape(n * nseg, packed.d)
    mu = packed.velocities.reshape(n * nseg, packed.d)
    return _PieceSet(t0, t1, x0, mu, packed.radius)


def _box_reach(ps: _PieceSet, halfwidth: float, iters: int = 90) -> np.ndarray:
    """min over u in [t0, t1] of dist(c(u), box), vectorized ternary search.

    The distance to the box is convex in u because the center path is affine.
    """

    def dist(u: np.ndarray) -> np.ndarray:
        c = ps.x0 + (u - ps.t0)[:, None] * ps.mu
        excess = np.maximum(np.abs(c) - halfwidth, 0.0)
        return np.sqrt(np.einsum("ij,ij->i", excess, excess))

    lo = ps.t0.copy()
    hi = ps.t1.copy()
    best = np.minimum(dist(lo), dist(hi))
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        g1, g2 = dist(m1), dist(m2)
        best = np.minimum(best, np.minimum(g1, g2))
        left = g1 <= g2
        hi = np.where(left, m2, hi)
        lo = np.where(left, lo, m1)
    return np.minimum(best, dist(0.5 * (lo + hi)))


@dataclass
class _ReachLedger:
    """Counts tangency-band decisions made while building the nerve."""

    indeterminate: int = 0

    def feasible(self, reach: float, radius: float) -> bool:
        if (radius - FEAS_EPS) < reach <= (radius + FEAS_EPS):
            self.indeterminate += 1
        return reach <= radius + FEAS_EPS

    def decisively_feasible(self, reach: float, radius: float) -> bool:
        return reach <= radius - FEAS_EPS


def _pair_table(
    ps: _PieceSet, halfwidth: float, ledger: _ReachLedger
) -> tuple[dict[int, list[int]], dict[tuple[int, int], bool]]:
    """Adjacency of pieces inside the window, and per-edge decisiveness."""
    n = ps.n
    reach_half = 0.5 * np.sqrt(np.einsum("ij,ij->i", ps.mu, ps.mu)) * (ps.t1 - ps.t0)
    mids = ps.x0 + 0.5 * (ps.t1 - ps.t0)[:, None] * ps.mu
    prune = 2.0 * (float(reach_half.max(initial=0.0)) + ps.radius) + 1e-12
    tree = cKDTree(mids)
    cand = tree.query_pairs(prune, output_type="ndarray")
    adjacency: dict[int, list[int]] = {i: [] for i in range(n)}
    decisive: dict[tuple[int, int], bool] = {}
    if len(cand) == 0:
        return adjacency, decisive
    ii, jj = cand[:, 0], cand[:, 1]
    lo = np.maximum(ps.t0[ii], ps.t0[jj])
    hi = np.minimum(ps.t1[ii], ps.t1[jj])
    overlap = lo <= hi
    ii, jj, lo, hi = ii[overlap], jj[overlap], lo[overlap], hi[overlap]
    ci = ps.x0[ii] + (lo - ps.t0[ii])[:, None] * ps.mu[ii]
    cj = ps.x0[jj] + (lo - ps.t0[jj])[:, None] * ps.mu[jj]
    dx0 = ci - cj
    dmu = ps.mu[ii] - ps.mu[jj]
    a = np.einsum("ij,ij->i", dmu, dmu)
    b = np.einsum("ij,ij->i", dx0, dmu)
    tau = np.where(a > 0.0, -b / np.where(a > 0.0, a, 1.0), 0.0)
    tau = np.clip(tau, 0.0, hi - lo)
    diff = dx0 + tau[:, None] * dmu
    dmin = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    close = dmin <= 2.0 * ps.radius + 2.0 * FEAS_EPS
    mid_ok = np.all(np.abs(ci + tau[:, None] * ps.mu[ii] - 0.5 * diff) <= halfwidth, axis=1)
    for idx in np.flatnonzero(close):
        i, j = int(ii[idx]), int(jj[idx])
        if mid_ok[idx]:
            reach = 0.5 * float(dmin[idx])
        else:
            reach = min_reach(
                [ps.piece(i), ps.piece(j)], halfwidth, stop_below=ps.radius - FEAS_EPS
            )
        if ledger.feasible(reach, ps.radius):
            adjacency[i].append(j)
            adjacency[j].append(i)
            decisive[(i, j)] = ledger.decisively_feasible(reach, ps.radius)
    for i in adjacency:
        adjacency[i].sort()
    return adjacency, decisive


def euler_characteristic(sample: CylinderSample) -> FunctionalResult:
    """chi(Z cap W_s) by inclusion-exclusion over the nerve.

    Every piece is convex, so each nonempty intersection of pieces clipped to
    the window is convex with chi = 1 and the alternating simplex count equals
    chi of the union.  Near-tangent simplex tests are accepted but flagged;
    the result then carries the alternative value with those simplices
    excluded.
    """
    p = sample.params
    halfwidth = p.s / 2.0
    ps_all = _pieces_array(sample.packed)
    if ps_all.n == 0:
        return FunctionalResult(
            kind="euler", value=0, meta={"nerve_size": 0, "indeterminate": 0}
        )
    ledger = _ReachLedger()
    box_reach = _box_reach(ps_all, halfwidth)
    keep = []
    keep_decisive = {}
    for i in range(ps_all.n):
        reach = float(box_reach[i])
        if ledger.feasible(reach, ps_all.radius):
            keep_decisive[len(keep)] = ledger.decisively_feasible(reach, ps_all.radius)
            keep.append(i)
    if not keep:
        return FunctionalResult(
            kind="euler",
            value=0,
            meta={"nerve_size": 0, "indeterminate": ledger.indeterminate},
        )
    keep_idx = np.asarray(keep, dtype=np.int64)
    ps = _PieceSet(
        ps_all.t0[keep_idx],
        ps_all.t1[keep_idx],
        ps_all.x0[keep_idx],
        ps_all.mu[keep_idx],
        ps_all.radius,
    )
    adjacency, edge_decisive = _pair_table(ps, halfwidth, ledger)

    chi = 0
    chi_decisive = 0
    nerve_size = 0

    def extend(simplex: list[int], decisive: bool, candidates: list[int]) -> None:
        nonlocal chi, chi_decisive, nerve_size
        sign = -1 if len(simplex) % 2 == 0 else 1
        chi += sign
        nerve_size += 1
        if decisive:
            chi_decisive += sign
        for pos, w in enumerate(candidates):
            if len(simplex) >= MAX_SIMPLEX_SIZE:
                raise NerveSizeError(
                    f"simplex of size > {MAX_SIMPLEX_SIZE} in the intersection graph"
                )
            group = simplex + [w]
            if len(group) == 2:
                reach = None  # already certified as an edge
                feasible = True
                dec = edge_decisive[(group[0], w)]
            else:
                reach = min_reach(
                    [ps.piece(v) for v in group], halfwidth, stop_below=ps.radius - FEAS_EPS
                )
                feasible = ledger.feasible(reach, ps.radius)
                dec = feasible and ledger.decisively_feasible(reach, ps.radius)
            if feasible:
                nxt = [
                    x for x in candidates[pos + 1 :] if x in adjacency_sets[w]
                ]
                extend(group, decisive and dec, nxt)

    adjacency_sets = {i: set(vs) for i, vs in adjacency.items()}
    for i in range(ps.n):
        extend([i], keep_decisive[i], [j for j in adjacency[i] if j > i])

    meta = {
        "nerve_size": nerve_size,
        "indeterminate": ledger.indeterminate,
        "n_pieces": ps.n,
    }
    if ledger.indeterminate:
        meta["value_excluding_indeterminate"] = chi_decisive
    return FunctionalResult(kind="euler", value=chi, meta=meta)


# ---------------------------------------------------------------------------
# Voxel oracle for the Euler characteristic (ambient dimension <= 3).


@dataclass(frozen=True)
class VoxelChi:
    value: int
    unreliable: bool
    reasons: tuple[str, ...] = ()


def _has_corner_pinch(occ: np.ndarray) -> bool:
    """Whether any 2x2 sub-block in a coordinate plane is a diagonal checkerboard.

    At such a corner contact the closed-voxel union is pinched shut while the
    underlying smooth set may keep a thin open channel (or vice versa), so the
    voxelized Euler characteristic is untrustworthy there.
    """
    ndim = occ.ndim
    for a in range(ndim):
        for b in range(a + 1, ndim):
            blocks = []
            for da, db in ((0, 0), (0, 1), (1, 0), (1, 1)):
                sl = [slice(None)] * ndim
                sl[a] = slice(da, occ.shape[a] - 1 + da)
                sl[b] = slice(db, occ.shape[b] - 1 + db)
                blocks.append(occ[tuple(sl)])
            p00, p01, p10, p11 = blocks
            if np.any((p00 & p11 & ~p01 & ~p10) | (p01 & p10 & ~p00 & ~p11)):
                return True
    return False


def _questionable_holes(occ: np.ndarray) -> bool:
    """Whether the occupancy has an interior hole too small or thin to trust.

    Holes at the scale of a few voxels (or one-to-two voxels wide anywhere)
    sit below the oracle's resolving power: they typically come from a
    complement wedge pinching off where a pair's center distance crosses the
    contact threshold inside the window.
    """
    from scipy import ndimage

    labels, count = ndimage.label(~occ)
    if count == 0:
        return False
    border: set[int] = set()
    for axis in range(occ.ndim):
        sl_lo = [slice(None)] * occ.ndim
        sl_hi = [slice(None)] * occ.ndim
        sl_lo[axis] = 0
        sl_hi[axis] = -1
        border.update(np.unique(labels[tuple(sl_lo)]).tolist())
        border.update(np.unique(labels[tuple(sl_hi)]).tolist())
    objects = ndimage.find_objects(labels)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    for lab in range(1, count + 1):
        if lab in border:
            continue
        box = objects[lab - 1]
        min_side = min(sl.stop - sl.start for sl in box)
        if sizes[lab] <= 12 or min_side <= 2:
            return True
    return False


def _cubical_euler(occ: np.ndarray) -> int:
    """chi of the union of closed voxels: alternating count of distinct faces."""
    ndim = occ.ndim
    chi = 0
    for face_axes in itertools.chain.from_iterable(
        itertools.combinations(range(ndim), k) for k in range(ndim + 1)
    ):
        arr = occ
        for axis in range(ndim):
            if axis in face_axes:
                continue
            shape = list(arr.shape)
            shape[axis] += 1
            grown = np.zeros(shape, dtype=bool)
            sl_lo = [slice(None)] * ndim
            sl_hi = [slice(None)] * ndim
            sl_lo[axis] = slice(0, arr.shape[axis])
            sl_hi[axis] = slice(1, arr.shape[axis] + 1)
            grown[tuple(sl_lo)] |= arr
            grown[tuple(sl_hi)] |= arr
            arr = grown
        chi += (-1) ** len(face_axes) * int(arr.sum())
    return chi


def euler_characteristic_voxel_oracle(
    sample: CylinderSample, resolution: float
) -> VoxelChi:
    """chi of the cubical complex of voxels whose centers lie in the union.

    Restricted to ambient dimension d+1 <= 3.  The result is marked
    unreliable when the decision geometry comes within two voxel diagonals of
    a tangency: pairs near the 2r contact threshold, pieces near the window
    boundary at depth r, and near-degenerate triple intersections.
    """
    p = sample.params
    if p.d + 1 > 3:
        raise ValueError("voxel oracle supports ambient dimension <= 3")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    packed = sample.packed
    n_sp = max(1, round(p.s / resolution))
    n_t = max(1, round(p.T / resolution))
    cell_sp = p.s / n_sp
    cell_t = p.T / n_t
    axes = [(-p.s / 2.0 + (np.arange(n_sp) + 0.5) * cell_sp) for _ in range(p.d)]
    t_axis = (np.arange(n_t) + 0.5) * cell_t
    occ = np.zeros((n_sp,) * p.d + (n_t,), dtype=bool)
    r2 = p.r**2
    tgrid = packed.times
    for k in range(len(tgrid) - 1):
        t0, t1 = float(tgrid[k]), float(tgrid[k + 1])
        tsel = (t_axis >= t0) & (t_axis <= t1)
        if not tsel.any():
            continue  # no voxel center falls inside this time slab
        ts = t_axis[tsel]
        for i in range(packed.n):
            centers = packed.waypoints[i, k][None, :] + (ts - t0)[:, None] * packed.velocities[i, k][None, :]
            if p.d == 1:
                d2 = (axes[0][:, None] - centers[None, :, 0]) ** 2
                occ[:, tsel] |= d2 <= r2
            else:
                d2 = (axes[0][:, None, None] - centers[None, None, :, 0]) ** 2
                d2 = d2 + (axes[1][None, :, None] - centers[None, None, :, 1]) ** 2
                occ[:, :, tsel] |= d2 <= r2
    chi = _cubical_euler(occ)

    diag = math.sqrt(p.d * cell_sp**2 + cell_t**2)
    band = 2.0 * diag
    reasons: list[str] = []
    if _has_corner_pinch(occ):
        reasons.append("corner_pinch")
    if _questionable_holes(occ):
        reasons.append("tiny_hole")
    ps = _pieces_array(packed)
    if ps.n:
        box_reach = _box_reach(ps, p.s / 2.0)
        depth = p.r - box_reach
        if np.any(np.abs(depth) <= band):
            reasons.append("window_tangency")
        pairs = []
        if packed.n >= 2:
            tree = cKDTree(packed.basepoints)
            pairs = tree.query_pairs(p.interaction_radius + band, output_type="ndarray")
        if len(pairs):
            dmin = _pair_min_distances(packed, pairs[:, 0], pairs[:, 1])
            if np.any(np.abs(dmin - 2.0 * p.r) <= band):
                reasons.append("pair_tangency")
            inter = pairs[dmin <= 2.0 * p.r]
            neighbors: dict[int, set[int]] = {}
            for i, j in inter:
                neighbors.setdefault(int(i), set()).add(int(j))
                neighbors.setdefault(int(j), set()).add(int(i))
            seen = set()
            for i, js in neighbors.items():
                for j in js:
                    if j <= i:
                        continue
                    for k2 in sorted(js & neighbors.get(j, set())):
                        if k2 <= j or (i, j, k2) in seen:
                            continue
                        seen.add((i, j, k2))
                        reach = _stack_group_reach(packed, (i, j, k2), p.s / 2.0)
                        if abs(reach - p.r) <= band:
                            reasons.append("triple_tangency")
    return VoxelChi(value=chi, unreliable=bool(reasons), reasons=tuple(dict.fromkeys(reasons)))


def _stack_group_reach(packed: PackedCylinders, idx: tuple[int, ...], halfwidth: float) -> float:
    tgrid = packed.times
    best = math.inf
    for k in range(len(tgrid) - 1):
        pieces = [
            Piece(
                float(tgrid[k]),
                float(tgrid[k + 1]),
                packed.waypoints[i, k],
                packed.velocities[i, k],
            )
            for i in idx
        ]
        best = min(best, min_reach(pieces, halfwidth))  # full value: band check needs it
    return best


# ---------------------------------------------------------------------------
# Difference (add-one-cost) operator.


def evaluate(
    kind: str,
    sample: CylinderSample,
    *,
    m_points: int = 100_000,
    rng: np.random.Generator | None = None,
) -> FunctionalResult:
    if kind == "volume":
        if rng is None:
            rng = replication_rng(sample.seed, sample.replication_index, 1)
        return covered_volume_mc(sample, m_points, rng)
    if kind == "isolated":
        return isolated_count(sample)
    if kind == "euler":
        return euler_characteristic(sample)
    raise ValueError(f"unknown functional kind {kind!r}; expected one of {KINDS}")


def add_one_cost(
    kind: str,
    sample: CylinderSample,
    extra: Cylinder | CylinderStack,
    *,
    m_points: int = 100_000,
    rng: np.random.Generator | None = None,
) -> float:
    """f(Z(xi + delta_x) cap W_s) - f(Z(xi) cap W_s)."""
    if kind == "volume":
        if rng is None:
            rng = replication_rng(sample.seed, sample.replication_index, 1)
        p = sample.params
        points, times = _draw_points(sample, m_points, rng)
        base = _cover_mask(sample.packed, points, times, p.s / 2.0)
        extra_mask = _extra_cover_mask(extra, points, times)
        gained = int(np.count_nonzero(extra_mask & ~base))
        return p.window_volume * gained / m_points
    if kind in ("isolated", "euler"):
        f = isolated_count if kind == "isolated" else euler_characteristic
        return float(f(with_extra(sample, extra)).value - f(sample).value)
    raise ValueError(f"unknown functional kind {kind!r}; expected one of {KINDS}")


def second_difference(
    kind: str,
    sample: CylinderSample,
    x: Cylinder | CylinderStack,
    y: Cylinder | CylinderStack,
    *,
    m_points: int = 100_000,
    rng: np.random.Generator | None = None,
) -> float:
    """D^2_{x,y} f = f(xi+x+y) - f(xi+x) - f(xi+y) + f(xi), common stream for volume."""
    if kind == "volume":
        if rng is None:
            rng = replication_rng(sample.seed, sample.replication_index, 1)
        p = sample.params
        points, times = _draw_points(sample, m_points, rng)
        base = _cover_mask(sample.packed, points, times, p.s / 2.0)
        mx = _extra_cover_mask(x, points, times)
        my = _extra_cover_mask(y, points, times)
        # inclusion-exclusion collapses to -(points in both extras, outside xi)
        overlap = int(np.count_nonzero(mx & my & ~base))
        return -p.window_volume * overlap / m_points
    if kind in ("isolated", "euler"):
        f = isolated_count if kind == "isolated" else euler_characteristic
        f00 = f(sample).value
        f10 = f(with_extra(sample, x)).value
        f01 = f(with_extra(sample, y)).value
        f11 = f(with_extra(with_extra(sample, x), y)).value
        return float(f11 - f10 - f01 + f00)
    raise ValueError(f"unknown functional kind {kind!r}; expected one of {KINDS}")
