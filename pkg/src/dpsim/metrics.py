"""Water-filling power allocation and link evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WATERFILL_REL_TOL = 1e-9
WATERFILL_MAX_ITER = 200


class AllocationError(ValueError):
    pass


@dataclass(frozen=True)
class PowerAllocation:
    """Per-stream powers (watts), the water level, and the active stream indices."""

    p: np.ndarray
    tau: float
    active: np.ndarray

    @property
    def total(self) -> float:
        return float(self.p.sum())


@dataclass(frozen=True)
class MetricsReport:
    """Per-trial evaluation: fit error, spectral and energy efficiency."""

    nmse: float
    se: float
    se_ub: float
    ee: float
    ee_ub: float

    def as_rows(self) -> list[tuple[str, float]]:
        return [("nmse", self.nmse), ("se", self.se), ("se_ub", self.se_ub),
                ("ee", self.ee), ("ee_ub", self.ee_ub)]


def waterfill(gains: np.ndarray, noise_power: float, total_power: float) -> PowerAllocation:
    """Allocate total_power across streams with squared-singular-value gains.

    p_s = max(0, tau - noise/gain_s) with the water level tau found by
    bisection so the powers sum to the budget (relative tolerance 1e-9).
    Zero-gain streams are excluded and get zero power.
    """
    gains = np.asarray(gains, dtype=float)
    if total_power <= 0:
        raise AllocationError("total power must be positive")
    if np.any(gains < 0):
        raise AllocationError("gains must be nonnegative")
    positive = gains > 0
    if not positive.any():
        raise AllocationError("all gains zero")

    floors = noise_power / gains[positive]
    lo = float(floors.min())
    hi = lo + total_power

    def allocated(tau: float) -> np.ndarray:
        return np.clip(tau - floors, 0.0, None)

    tol = WATERFILL_REL_TOL * total_power
    tau = hi
    for _ in range(WATERFILL_MAX_ITER):
        tau = 0.5 * (lo + hi)
        total = allocated(tau).sum()
        if abs(total - total_power) <= tol:
            break
        if total > total_power:
            hi = tau
        else:
            lo = tau

    p = np.zeros_like(gains)
    p[positive] = allocated(tau)
    return PowerAllocation(p=p, tau=float(tau), active=np.flatnonzero(p > 0))


def fit_error_ratio(alpha: complex, h: np.ndarray, target: np.ndarray) -> float:
    """Squared Frobenius distance of alpha*h to the target, relative to the target."""
    num = float(np.sum(np.abs(alpha * h - target) ** 2))
    den = float(np.sum(np.abs(target) ** 2))
    return num / den


def nmse(trials) -> float:
    """Mean relative fit error over (alpha, h, target) trial triples."""
    ratios = [fit_error_ratio(alpha, h, target) for alpha, h, target in trials]
    if not ratios:
        raise AllocationError("nmse needs at least one trial")
    return float(np.mean(ratios))


def spectral_efficiency(alpha: complex, h: np.ndarray, p: np.ndarray,
                        noise_power: float) -> float:
    """Sum rate of the scaled composite channel with residual inter-stream interference."""
    power_gain = np.abs(alpha * h) ** 2
    p = np.asarray(p, dtype=float)
    signal = p * np.diag(power_gain)
    interference = power_gain @ p - signal
    sinr = signal / (interference + noise_power)
    return float(np.sum(np.log2(1.0 + sinr)))


def se_upper_bound(target_singular_values: np.ndarray, p: np.ndarray,
                   noise_power: float) -> float:
    """Interference-free sum rate over the leading singular-value channels."""
    sv = np.asarray(target_singular_values, dtype=float)
    p = np.asarray(p, dtype=float)
    return float(np.sum(np.log2(1.0 + p * sv ** 2 / noise_power)))


def energy_efficiency(se: float, se_ub: float, total_power: float) -> tuple[float, float]:
    return se / total_power, se_ub / total_power


def evaluate_trial(alpha: complex, h: np.ndarray, target: np.ndarray,
                   p: np.ndarray, noise_power: float, total_power: float) -> MetricsReport:
    """Bundle all per-trial metrics for one optimized realization."""
    target_sv = np.diag(target)
    se = spectral_efficiency(alpha, h, p, noise_power)
    se_ub = se_upper_bound(target_sv, p, noise_power)
    ee, ee_ub = energy_efficiency(se, se_ub, total_power)
    return MetricsReport(nmse=fit_error_ratio(alpha, h, target),
                         se=se, se_ub=se_ub, ee=ee, ee_ub=ee_ub)
