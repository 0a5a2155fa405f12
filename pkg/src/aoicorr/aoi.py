"""Closed-form average age of information per process.

A process with no informative packets has unbounded age; that case is
reported as the distinguished value ``INFINITE`` (``math.inf``) so that
optimizers can still rank candidate allocations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SystemConfig, derive_rates

INFINITE = math.inf


@dataclass(frozen=True)
class AoiResult:
    """Per-process average ages, their sum, and the inter-departure moments."""

    per_process: np.ndarray
    total: float
    interdeparture_mean: float
    interdeparture_second_moment: float

    def __post_init__(self):
        arr = np.array(self.per_process, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "per_process", arr)


def interdeparture_moments(total_rate: float, service_rate: float) -> tuple[float, float]:
    """First two moments of the time between consecutive departures.

    E[Y]  = 1/total + 1/mu
    E[Y2] = 2 (total^2 + total*mu + mu^2) / (total^2 mu^2)
    """
    if total_rate <= 0.0 or service_rate <= 0.0:
        raise ValueError("rates must be strictly positive")
    ey = 1.0 / total_rate + 1.0 / service_rate
    ey2 = 2.0 * (total_rate**2 + total_rate * service_rate + service_rate**2) / (
        total_rate**2 * service_rate**2
    )
    return ey, ey2


def _aoi_from_prob(total_rate: float, service_rate: float, informative_prob: float) -> float:
    if informative_prob <= 0.0:
        return INFINITE
    ey, ey2 = interdeparture_moments(total_rate, service_rate)
    mu = service_rate
    return (total_rate / (total_rate + mu)) * (
        mu * ey2 / 2.0
        + mu * ey * ey * (1.0 - informative_prob) / informative_prob
        + ey
    )


def average_aoi(config: SystemConfig, j: int) -> float:
    """Stationary average age of process ``j`` (0-based).

    Returns ``INFINITE`` when no sensor ever carries process j; that is a
    legal result, not an error.
    """
    rates = derive_rates(config)
    if not 0 <= j < config.num_processes:
        raise IndexError(f"process index {j} out of range for M={config.num_processes}")
    return _aoi_from_prob(rates.total_rate, config.service_rate, float(rates.informative_probs[j]))


def aoi_result(config: SystemConfig) -> AoiResult:
    """Ages of every process plus their sum and the shared Y moments."""
    rates = derive_rates(config)
    ey, ey2 = interdeparture_moments(rates.total_rate, config.service_rate)
    per = np.array(
        [
            _aoi_from_prob(rates.total_rate, config.service_rate, float(p))
            for p in rates.informative_probs
        ]
    )
    total = INFINITE if np.any(np.isinf(per)) else float(per.sum())
    return AoiResult(
        per_process=per,
        total=total,
        interdeparture_mean=ey,
        interdeparture_second_moment=ey2,
    )


def sum_aoi(config: SystemConfig) -> float:
    """Sum of the per-process average ages; INFINITE if any term is."""
    return aoi_result(config).total
