"""Replication campaigns verifying the central limit theorems at desk scale.

A campaign runs N independent replications of one functional per window size,
standardizes the values empirically, and reports Kolmogorov-Smirnov and
empirical Wasserstein-1 distances to the standard normal together with the
analytic companions (expected value, variance bracket, rate bound c / sqrt(lambda)).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .analytic import (
    BoundReport,
    HypothesisViolation,
    clt_constants,
    expected_covered_volume,
)
from .functionals import KINDS, euler_characteristic, isolated_count, covered_volume_mc
from .model import ModelParams
from .sampling import replication_rng, sample_tbc

SCHEMA_VERSION = 1


class DegenerateDistribution(Exception):
    """Replication values are (numerically) constant; standardization undefined."""


def empirical_w1_to_normal(values) -> float:
    """Mean absolute gap between sorted values and normal mid-quantiles.

    Callers standardize upstream; a constant sample is rejected there.
    """
    x = np.sort(np.asarray(values, dtype=float))
    n = len(x)
    if n < 2:
        raise ValueError("need at least two values")
    q = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return float(np.mean(np.abs(x - q)))


def ks_distance_to_normal(values) -> float:
    """sup |empirical CDF - Phi| over the sample points."""
    x = np.sort(np.asarray(values, dtype=float))
    n = len(x)
    if n < 2:
        raise ValueError("need at least two values")
    cdf = stats.norm.cdf(x)
    grid = np.arange(1, n + 1) / n
    return float(max(np.max(grid - cdf), np.max(cdf - (grid - 1.0 / n))))


@dataclass(frozen=True)
class SizeBlock:
    s: float
    n_reps: int
    values: tuple[float, ...]
    mean: float
    variance: float
    standardized: tuple[float, ...]
    ks: float
    w1: float
    expected_value: float | None
    var_lower: float
    var_upper: float
    rate_bound: float
    indeterminate_count: int = 0

    def to_json_dict(self) -> dict:
        return {
            "s": self.s,
            "n_reps": self.n_reps,
            "values": list(self.values),
            "mean": self.mean,
            "variance": self.variance,
            "standardized": list(self.standardized),
            "ks": self.ks,
            "w1": self.w1,
            "expected_value": self.expected_value,
            "var_lower": self.var_lower,
            "var_upper": self.var_upper,
            "rate_bound": self.rate_bound,
            "indeterminate_count": self.indeterminate_count,
        }


@dataclass(frozen=True)
class CltReport:
    kind: str
    model: str  # "tbc" or "stbc"
    seed: int
    sizes: tuple[float, ...]
    blocks: tuple[SizeBlock, ...]
    w1_slope: float | None
    constants_meta: dict = field(default_factory=dict)

    def block(self, s: float) -> SizeBlock:
        for b in self.blocks:
            if b.s == s:
                return b
        raise KeyError(f"no block for size {s}")

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "model": self.model,
            "seed": self.seed,
            "sizes": list(self.sizes),
            "blocks": [b.to_json_dict() for b in self.blocks],
            "w1_slope": self.w1_slope,
            "constants_meta": dict(self.constants_meta),
        }

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1)
            f.write("\n")

    def save_values_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["functional", "s", "replication", "value"])
            for b in self.blocks:
                for i, v in enumerate(b.values):
                    writer.writerow([self.kind, b.s, i, v])


def _replicate(
    params: ModelParams, kind: str, seed: int, index: int, m_points: int
) -> tuple[float, int]:
    sample = sample_tbc(params, seed, index)
    if kind == "volume":
        rng = replication_rng(seed, index, 1)
        return float(covered_volume_mc(sample, m_points, rng).value), 0
    if kind == "isolated":
        return float(isolated_count(sample).value), 0
    res = euler_characteristic(sample)
    return float(res.value), int(res.meta.get("indeterminate", 0))


def run_campaign(
    params: ModelParams,
    kind: str,
    sizes,
    n_reps: int,
    seed: int,
    *,
    m_points: int = 100_000,
    n_mc_pairs: int = 1_000_000,
) -> CltReport:
    """N replications per window size; fails fast on hypothesis violations."""
    if kind not in KINDS:
        raise ValueError(f"unknown functional kind {kind!r}; expected one of {KINDS}")
    sizes = tuple(float(s) for s in sizes)
    if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be a nonempty increasing sequence")
    if n_reps < 2:
        raise ValueError("need at least two replications per size")
    if kind in ("isolated", "euler"):
        bound = 6.0 * (params.max_scope + params.r)
        for s in sizes:
            if s < bound:
                raise HypothesisViolation(
                    f"need s >= 6(R_h + r) = {bound}, got s = {s}"
                )

    blocks = []
    constants_meta: dict = {}
    for size_index, s in enumerate(sizes):
        params_s = ModelParams(
            d=params.d,
            gamma=params.gamma,
            r=params.r,
            T=params.T,
            h=params.h,
            s=s,
            direction_law=params.direction_law,
            stacking=params.stacking,
        )
        report: BoundReport = clt_constants(
            params_s,
            kind,
            **({} if kind == "volume" else {"n_mc_pairs": n_mc_pairs, "seed": seed}),
        )
        constants_meta = dict(report.meta)
        values = np.empty(n_reps)
        indeterminate = 0
        for rep in range(n_reps):
            value, flagged = _replicate(
                params_s, kind, seed, size_index * n_reps + rep, m_points
            )
            values[rep] = value
            indeterminate += flagged
        mean = float(values.mean())
        variance = float(values.var(ddof=1))
        sd = math.sqrt(variance)
        if not math.isfinite(sd) or sd <= 1e-9 * max(1.0, abs(mean)):
            raise DegenerateDistribution(
                f"replication values at s = {s} are essentially constant "
                f"(sd = {sd!r}); cannot standardize"
            )
        standardized = (values - mean) / sd
        lam = params_s.window_volume
        blocks.append(
            SizeBlock(
                s=s,
                n_reps=n_reps,
                values=tuple(float(v) for v in values),
                mean=mean,
                variance=variance,
                standardized=tuple(float(v) for v in standardized),
                ks=ks_distance_to_normal(standardized),
                w1=empirical_w1_to_normal(standardized),
                expected_value=(
                    expected_covered_volume(params_s) if kind == "volume" else None
                ),
                var_lower=report.c1 * lam,
                var_upper=report.variance_upper,
                rate_bound=report.wasserstein_c / math.sqrt(lam),
                indeterminate_count=indeterminate,
            )
        )

    w1_slope = None
    if len(sizes) >= 2:
        xs = np.log([b.s**params.d * params.T for b in blocks])
        ys = np.log([b.w1 for b in blocks])
        w1_slope = float(np.polyfit(xs, ys, 1)[0])
    return CltReport(
        kind=kind,
        model="tbc" if params.stacking is None else "stbc",
        seed=int(seed),
        sizes=sizes,
        blocks=tuple(blocks),
        w1_slope=w1_slope,
        constants_meta=constants_meta,
    )


def variance_bracket_check(report: CltReport, level: float = 0.99) -> dict[float, bool]:
    """Whether the chi^2 CI for the true variance meets [c1 lambda, (1+c2) lambda]."""
    out = {}
    alpha = 1.0 - level
    for b in report.blocks:
        dof = b.n_reps - 1
        ci_lo = dof * b.variance / float(stats.chi2.ppf(1.0 - alpha / 2.0, dof))
        ci_hi = dof * b.variance / float(stats.chi2.ppf(alpha / 2.0, dof))
        out[b.s] = bool(ci_lo <= b.var_upper and b.var_lower <= ci_hi)
    return out
