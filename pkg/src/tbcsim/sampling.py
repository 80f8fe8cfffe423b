"""Sampling of the marked Poisson process of cylinders and cylinder stacks.

Basepoints are drawn on the dilated box [-s/2 - (R_h + r), s/2 + (R_h + r)]^d
so that every cylinder able to reach the observation window is present.
Each replication derives its own RNG stream from (seed, replication_index)
via numpy's SeedSequence spawn keys, so replications are reproducible and
independent without shared state.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import (
    Cylinder,
    CylinderStack,
    Degenerate,
    Direction,
    DirectionLaw,
    Discrete,
    ModelParams,
    StackingSchedule,
    UniformCap,
)

SCHEMA_VERSION = 1


def replication_rng(seed: int, replication_index: int, *extra: int) -> np.random.Generator:
    """Independent generator for one replication (and optional sub-purpose)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replication_index), *extra))
    return np.random.default_rng(ss)


def sample_poisson_basepoints(
    params: ModelParams, region_lo, region_hi, rng: np.random.Generator
) -> np.ndarray:
    """Poisson(gamma * vol) many points, i.i.d. uniform in the box, shape (n, d)."""
    lo = np.asarray(region_lo, dtype=float)
    hi = np.asarray(region_hi, dtype=float)
    if lo.shape != (params.d,) or hi.shape != (params.d,) or np.any(hi <= lo):
        raise ValueError("region must be a nondegenerate box in R^d")
    volume = float(np.prod(hi - lo))
    n = int(rng.poisson(params.gamma * volume))
    return lo + (hi - lo) * rng.random((n, params.d))


def sample_direction_matrix(
    law: DirectionLaw, d: int, h: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """n directions as rows of an (n, d+1) array of unit vectors in the cap."""
    if isinstance(law, Degenerate):
        v = np.asarray(law.resolved(d).v, dtype=float)
        return np.tile(v, (n, 1))
    if isinstance(law, Discrete):
        idx = rng.choice(len(law.directions), size=n, p=np.asarray(law.weights))
        return np.asarray(law.directions, dtype=float)[idx]
    if isinstance(law, UniformCap):
        return _uniform_cap(d, h, n, rng)
    raise TypeError(f"unknown direction law {law!r}")


def _uniform_cap(d: int, h: float, n: int, rng: np.random.Generator) -> np.ndarray:
    if d == 2:
        # Archimedes hat-box: the vertical component of a uniform point on S^2
        # is itself uniform, so the cap restricts it to U(h, 1).
        z = rng.uniform(h, 1.0, size=n)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
        rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    # Rejection from the uniform distribution on S^d.
    out = np.empty((n, d + 1))
    filled = 0
    while filled < n:
        batch = max(64, int(2.5 * (n - filled) / max(1e-3, (1.0 - h) / 2.0)))
        g = rng.standard_normal((batch, d + 1))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        ok = g[:, -1] > h
        take = g[ok][: n - filled]
        out[filled : filled + len(take)] = take
        filled += len(take)
    return out


def sample_direction(law: DirectionLaw, d: int, h: float, rng: np.random.Generator) -> Direction:
    return Direction(sample_direction_matrix(law, d, h, 1, rng)[0])


def sample_stacked_directions(
    law: DirectionLaw, schedule: StackingSchedule, d: int, h: float, rng: np.random.Generator
) -> tuple[Direction, ...]:
    """Direction vector V = (v_0, ..., v_K) for one node: v_0 from the law,
    then each v_k resampled with probability q, else carried over."""
    mat = sample_stacked_direction_matrix(law, schedule, d, h, 1, rng)[0]
    return tuple(Direction(row) for row in mat)


def sample_stacked_direction_matrix(
    law: DirectionLaw,
    schedule: StackingSchedule,
    d: int,
    h: float,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """(n, K+1, d+1) direction array under the resampling marking."""
    k = schedule.k
    out = np.empty((n, k + 1, d + 1))
    out[:, 0] = sample_direction_matrix(law, d, h, n, rng)
    for j in range(1, k + 1):
        fresh = rng.random(n) < schedule.q
        out[:, j] = out[:, j - 1]
        n_fresh = int(fresh.sum())
        if n_fresh:
            out[fresh, j] = sample_direction_matrix(law, d, h, n_fresh, rng)
    return out


@dataclass(frozen=True)
class PackedCylinders:
    """Array view of a realization for vectorized evaluation.

    times is the shared breakpoint grid (0, t_1, ..., T); waypoints holds the
    spatial positions at those breakpoints, shape (n, K+2, d); velocities the
    per-segment spatial velocities, shape (n, K+1, d).
    """

    basepoints: np.ndarray
    directions: np.ndarray  # (n, K+1, d+1)
    times: np.ndarray  # (K+2,)
    radius: float
    horizon: float

    @property
    def n(self) -> int:
        return self.basepoints.shape[0]

    @property
    def d(self) -> int:
        return self.basepoints.shape[1]

    @cached_property
    def velocities(self) -> np.ndarray:
        return self.directions[:, :, :-1] / self.directions[:, :, -1:]

    @cached_property
    def waypoints(self) -> np.ndarray:
        dt = np.diff(self.times)
        steps = self.velocities * dt[None, :, None]
        w = np.concatenate(
            [self.basepoints[:, None, :], np.cumsum(steps, axis=1) + self.basepoints[:, None, :]],
            axis=1,
        )
        return w

    def positions_at(self, u: np.ndarray) -> np.ndarray:
        """Positions of all cylinders at times u, shape (n, len(u), d)."""
        u = np.asarray(u, dtype=float)
        seg = np.clip(np.searchsorted(self.times, u, side="right") - 1, 0, len(self.times) - 2)
        base = self.waypoints[:, seg, :]
        vel = self.velocities[:, seg, :]
        return base + vel * (u - self.times[seg])[None, :, None]


@dataclass(frozen=True)
class CylinderSample:
    """One realization of the marked Poisson process on the dilated window."""

    params: ModelParams
    packed: PackedCylinders
    seed: int
    replication_index: int

    @property
    def dilated_halfwidth(self) -> float:
        return self.params.dilated_halfwidth

    @property
    def n_cylinders(self) -> int:
        return self.packed.n

    @cached_property
    def cylinders(self) -> tuple[Cylinder | CylinderStack, ...]:
        p = self.params
        packed = self.packed
        if p.stacking is None:
            return tuple(
                Cylinder(packed.basepoints[i], Direction(packed.directions[i, 0]), p.r, p.T)
                for i in range(packed.n)
            )
        times = tuple(float(t) for t in packed.times)
        return tuple(
            CylinderStack(
                packed.basepoints[i],
                times,
                tuple(Direction(v) for v in packed.directions[i]),
                p.r,
                p.T,
            )
            for i in range(packed.n)
        )

    def to_json_dict(self) -> dict:
        p = self.params
        law = p.direction_law
        if isinstance(law, UniformCap):
            law_doc: dict = {"variant": "uniform_cap"}
        elif isinstance(law, Degenerate):
            law_doc = {"variant": "degenerate", "direction": list(law.resolved(p.d).v)}
        elif isinstance(law, Discrete):
            law_doc = {
                "variant": "discrete",
                "directions": [list(v) for v in law.directions],
                "weights": list(law.weights),
            }
        else:
            raise TypeError(f"unknown direction law {law!r}")
        params_doc = {
            "d": p.d,
            "gamma": p.gamma,
            "r": p.r,
            "T": p.T,
            "h": p.h,
            "s": p.s,
            "direction_law": law_doc,
            "stacking": None
            if p.stacking is None
            else {"times": list(p.stacking.times), "q": p.stacking.q},
        }
        if p.stacking is None:
            cylinders = [
                {
                    "p": [float(x) for x in self.packed.basepoints[i]],
                    "v": [float(x) for x in self.packed.directions[i, 0]],
                }
                for i in range(self.packed.n)
            ]
        else:
            cylinders = [
                {
                    "p": [float(x) for x in self.packed.basepoints[i]],
                    "times": [float(t) for t in self.packed.times],
                    "V": [[float(x) for x in v] for v in self.packed.directions[i]],
                }
                for i in range(self.packed.n)
            ]
        return {
            "schema_version": SCHEMA_VERSION,
            "params": params_doc,
            "cylinders": cylinders,
            "seed": self.seed,
            "replication_index": self.replication_index,
        }

    @staticmethod
    def from_json_dict(doc: dict) -> CylinderSample:
        pd = doc["params"]
        law_doc = pd["direction_law"]
        variant = law_doc["variant"]
        if variant == "uniform_cap":
            law: DirectionLaw = UniformCap()
        elif variant == "degenerate":
            law = Degenerate(tuple(law_doc["direction"]))
        elif variant == "discrete":
            law = Discrete(law_doc["directions"], law_doc["weights"])
        else:
            raise ValueError(f"unknown direction law variant {variant!r}")
        stacking = (
            None
            if pd.get("stacking") is None
            else StackingSchedule(pd["stacking"]["times"], pd["stacking"]["q"])
        )
        params = ModelParams(
            d=int(pd["d"]),
            gamma=float(pd["gamma"]),
            r=float(pd["r"]),
            T=float(pd["T"]),
            h=float(pd["h"]),
            s=float(pd["s"]),
            direction_law=law,
            stacking=stacking,
        )
        cyl_docs = doc["cylinders"]
        n = len(cyl_docs)
        if stacking is None:
            times = np.asarray([0.0, params.T])
            basepoints = np.asarray([c["p"] for c in cyl_docs], dtype=float).reshape(n, params.d)
            directions = np.asarray([[c["v"]] for c in cyl_docs], dtype=float).reshape(
                n, 1, params.d + 1
            )
        else:
            times = np.asarray(stacking.grid(params.T))
            basepoints = np.asarray([c["p"] for c in cyl_docs], dtype=float).reshape(n, params.d)
            directions = np.asarray([c["V"] for c in cyl_docs], dtype=float).reshape(
                n, stacking.k + 1, params.d + 1
            )
        packed = PackedCylinders(basepoints, directions, times, params.r, params.T)
        return CylinderSample(
            params=params,
            packed=packed,
            seed=int(doc["seed"]),
            replication_index=int(doc["replication_index"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1)
            f.write("\n")

    @staticmethod
    def load(path) -> CylinderSample:
        with open(path) as f:
            return CylinderSample.from_json_dict(json.load(f))


def sample_tbc(params: ModelParams, seed: int, replication_index: int = 0) -> CylinderSample:
    """Sample one realization on the dilated window.

    The dilation radius R_h + r is minimal: a cylinder's trajectory wanders at
    most R_h from its basepoint and its cross-section adds r, so cylinders
    based farther out cannot meet W_s.
    """
    rng = replication_rng(seed, replication_index)
    half = params.dilated_halfwidth
    lo = np.full(params.d, -half)
    hi = np.full(params.d, half)
    basepoints = sample_poisson_basepoints(params, lo, hi, rng)
    n = len(basepoints)
    if params.stacking is None:
        directions = sample_direction_matrix(
            params.direction_law, params.d, params.h, n, rng
        ).reshape(n, 1, params.d + 1)
        times = np.asarray([0.0, params.T])
    else:
        directions = sample_stacked_direction_matrix(
            params.direction_law, params.stacking, params.d, params.h, n, rng
        )
        times = np.asarray(params.stacking.grid(params.T))
    packed = PackedCylinders(basepoints, directions, times, params.r, params.T)
    return CylinderSample(
        params=params, packed=packed, seed=int(seed), replication_index=int(replication_index)
    )


def with_extra(sample: CylinderSample, extra: Cylinder | CylinderStack) -> CylinderSample:
    """The realization with one extra cylinder appended (add-one-cost helper)."""
    p = sample.params
    packed = sample.packed
    if isinstance(extra, Cylinder):
        if p.stacking is not None:
            raise ValueError("extra must be a stack for a stacked sample")
        extra_dirs = np.asarray(extra.direction.v, dtype=float).reshape(1, 1, p.d + 1)
    else:
        if p.stacking is None or tuple(extra.times) != tuple(float(t) for t in packed.times):
            raise ValueError("extra must share the sample's breakpoint grid")
        extra_dirs = np.asarray([v.v for v in extra.directions], dtype=float).reshape(
            1, -1, p.d + 1
        )
    if extra.radius != p.r or extra.horizon != p.T:
        raise ValueError("extra must share the sample's radius and horizon")
    basepoints = np.vstack([packed.basepoints, np.asarray(extra.basepoint).reshape(1, p.d)])
    directions = np.concatenate([packed.directions, extra_dirs], axis=0)
    new_packed = PackedCylinders(basepoints, directions, packed.times, p.r, p.T)
    return CylinderSample(
        params=p,
        packed=new_packed,
        seed=sample.seed,
        replication_index=sample.replication_index,
    )
