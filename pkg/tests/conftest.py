"""Shared fixtures and independent oracles for the test suite.

The oracles deliberately avoid the library's closed-form code paths: pair
distances come from dense time-grid sampling of position_at, and union
volumes from voxel quadrature over a fine grid.
"""
from __future__ import annotations

import numpy as np
import pytest

from tbcsim import Cylinder, CylinderStack, ModelParams, position_at
from tbcsim.sampling import CylinderSample


def dense_min_distance(a, b, steps: int = 10_000) -> float:
    """Min inter-center distance over a dense time grid (independent oracle)."""
    us = np.linspace(0.0, a.horizon, steps + 1)
    best = np.inf
    for u in us:
        delta = position_at(a, float(u)) - position_at(b, float(u))
        best = min(best, float(np.sqrt(np.dot(delta, delta))))
    return best


def quadrature_covered_volume(sample: CylinderSample, n_sp: int, n_t: int) -> float:
    """Covered volume by mid-point quadrature on a regular grid over W_s."""
    p = sample.params
    packed = sample.packed
    axes = [(-p.s / 2 + (np.arange(n_sp) + 0.5) * (p.s / n_sp)) for _ in range(p.d)]
    ts = (np.arange(n_t) + 0.5) * (p.T / n_t)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    covered = np.zeros(len(pts), dtype=bool)
    cell = (p.s / n_sp) ** p.d * (p.T / n_t)
    total = 0.0
    for t in ts:
        pos = packed.positions_at(np.array([t]))[:, 0, :]
        d2 = ((pts[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
        covered = (d2 <= p.r**2).any(axis=1)
        total += covered.sum() * cell
    return total


@pytest.fixture(scope="session")
def base_params() -> ModelParams:
    return ModelParams(d=2, gamma=1.0, r=0.3, T=1.0, h=0.5, s=8.0)
