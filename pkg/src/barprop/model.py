"""Scenario geometry, log-distance RSS model, ML cost and CRLB.

All positions are in meters, powers in dBm and shadowing deviations in dB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Distances below this are clamped before the logarithm.
D_MIN = 1e-3

LN10 = math.log(10.0)


class SingularGeometryError(ValueError):
    """Raised when the Fisher information matrix is not invertible."""


def _as_vec2(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"{name} must be a 2-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Scenario:
    """World description: search region, anchors and propagation constants."""

    region_min: np.ndarray
    region_max: np.ndarray
    anchors: np.ndarray
    tx_power_dbm: float = -10.0
    path_loss_exponent: float = 3.0
    noise_std_db: np.ndarray = field(default=None)

    def __post_init__(self):
        lo = _as_vec2(self.region_min, "region_min")
        hi = _as_vec2(self.region_max, "region_max")
        anchors = np.asarray(self.anchors, dtype=float)
        if anchors.ndim != 2 or anchors.shape[1] != 2 or len(anchors) == 0:
            raise ValueError("anchors must be a non-empty (N, 2) array")
        if self.noise_std_db is None:
            sigma = np.full(len(anchors), 3.0)
        else:
            sigma = np.broadcast_to(np.asarray(self.noise_std_db, dtype=float), (len(anchors),)).copy()
        if not np.all(lo < hi):
            raise ValueError("region_min must be < region_max component-wise")
        if not np.all(sigma > 0):
            raise ValueError("noise_std_db entries must be > 0")
        if not self.path_loss_exponent > 0:
            raise ValueError("path_loss_exponent must be > 0")
        for arr in (lo, hi, anchors, sigma):
            arr.setflags(write=False)
        object.__setattr__(self, "region_min", lo)
        object.__setattr__(self, "region_max", hi)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "noise_std_db", sigma)
        object.__setattr__(self, "tx_power_dbm", float(self.tx_power_dbm))
        object.__setattr__(self, "path_loss_exponent", float(self.path_loss_exponent))

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)

    def with_noise(self, sigma) -> "Scenario":
        """Copy of this scenario with a new (scalar or per-anchor) noise level."""
        return Scenario(self.region_min, self.region_max, self.anchors,
                        self.tx_power_dbm, self.path_loss_exponent, sigma)

    def contains(self, x, strict: bool = False) -> bool:
        x = np.asarray(x, dtype=float)
        if strict:
            return bool(np.all(x > self.region_min) and np.all(x < self.region_max))
        return bool(np.all(x >= self.region_min) and np.all(x <= self.region_max))


@dataclass(frozen=True)
class Measurement:
    """One RSS reading per anchor plus the deviations used to weight them."""

    rss_dbm: np.ndarray
    noise_std_db: np.ndarray

    def __post_init__(self):
        rss = np.asarray(self.rss_dbm, dtype=float).copy()
        sigma = np.asarray(self.noise_std_db, dtype=float).copy()
        if rss.ndim != 1 or rss.shape != sigma.shape:
            raise ValueError("rss_dbm and noise_std_db must be 1-D of equal length")
        if not (np.all(np.isfinite(rss)) and np.all(np.isfinite(sigma))):
            raise ValueError("measurement values must be finite")
        rss.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "rss_dbm", rss)
        object.__setattr__(self, "noise_std_db", sigma)

    def check(self, scenario: Scenario) -> None:
        if len(self.rss_dbm) != scenario.n_anchors:
            raise ValueError(
                f"measurement has {len(self.rss_dbm)} readings, scenario has {scenario.n_anchors} anchors"
            )


@dataclass(frozen=True)
class CostEval:
    value: float
    gradient: np.ndarray
    residuals: np.ndarray


def gaussian(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal draws via the Box-Muller cosine branch.

    Consumes ``2 * size`` uniforms laid out as ``rng.random((size, 2))``; row
    ``i`` yields ``sqrt(-2 ln(1 - u0)) * cos(2 pi u1)``.  The explicit
    transform (rather than numpy's ziggurat) keeps every noise draw
    reconstructible from the raw uniform stream.
    """
    u = rng.random((size, 2))
    return np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])


def path_loss(scenario: Scenario, x) -> np.ndarray:
    """Noise-free received power at each anchor for a transmitter at ``x``."""
    d = np.linalg.norm(np.asarray(x, dtype=float) - scenario.anchors, axis=1)
    d = np.maximum(d, D_MIN)
    return scenario.tx_power_dbm - 10.0 * scenario.path_loss_exponent * np.log10(d)


def generate_rss(scenario: Scenario, true_position, rng: np.random.Generator,
                 noiseless: bool = False) -> Measurement:
    """Draw one RSS vector for a target at ``true_position``.

    With ``noiseless=True`` no randomness is consumed and the readings equal
    the path-loss model exactly; the measurement still carries the scenario's
    deviations so the cost keeps its weighting.
    """
    x = _as_vec2(true_position, "true_position")
    if not scenario.contains(x, strict=True):
        raise ValueError(f"target {x} is not strictly inside the region")
    d = np.linalg.norm(x - scenario.anchors, axis=1)
    if np.any(d < D_MIN):
        raise ValueError(f"target {x} lies within {D_MIN} m of an anchor")
    rss = path_loss(scenario, x)
    if not noiseless:
        rss = rss + scenario.noise_std_db * gaussian(rng, scenario.n_anchors)
    return Measurement(rss, scenario.noise_std_db)


def cost(scenario: Scenario, measurement: Measurement, x) -> CostEval:
    """Weighted squared RSS residuals at ``x`` and their analytic gradient."""
    x = np.asarray(x, dtype=float)
    diff = x - scenario.anchors
    d2 = np.maximum(diff[:, 0] ** 2 + diff[:, 1] ** 2, D_MIN * D_MIN)
    var = measurement.noise_std_db ** 2
    # 10*gamma*log10(d) == 5*gamma*log10(d^2)
    h = measurement.rss_dbm - scenario.tx_power_dbm + 5.0 * scenario.path_loss_exponent * np.log10(d2)
    value = float(np.sum(h * h / var))
    w = h / (var * d2)
    coef = 20.0 * scenario.path_loss_exponent / LN10
    grad = coef * (w @ diff)
    return CostEval(value, grad, h)


def gradient(scenario: Scenario, measurement: Measurement, x) -> np.ndarray:
    """Analytic gradient of the cost only (the optimizers' hot path)."""
    diff = x - scenario.anchors
    d2 = np.maximum(np.einsum("ij,ij->i", diff, diff), D_MIN * D_MIN)
    h = measurement.rss_dbm - scenario.tx_power_dbm + 5.0 * scenario.path_loss_exponent * np.log10(d2)
    w = h / (measurement.noise_std_db ** 2 * d2)
    return (20.0 * scenario.path_loss_exponent / LN10) * (w @ diff)


def cost_values(scenario: Scenario, measurement: Measurement, points) -> np.ndarray:
    """Cost at each row of ``points`` (shape (..., 2)); vectorized, no gradient."""
    pts = np.asarray(points, dtype=float)
    diff = pts[..., None, :] - scenario.anchors
    d2 = np.maximum(np.sum(diff * diff, axis=-1), D_MIN * D_MIN)
    h = measurement.rss_dbm - scenario.tx_power_dbm + 5.0 * scenario.path_loss_exponent * np.log10(d2)
    return np.sum(h * h / measurement.noise_std_db ** 2, axis=-1)


def fisher_information(scenario: Scenario, true_position) -> np.ndarray:
    """2x2 Fisher information of the position under log-normal shadowing."""
    x = _as_vec2(true_position, "true_position")
    diff = x - scenario.anchors
    d2 = np.maximum(np.sum(diff * diff, axis=1), D_MIN * D_MIN)
    k = (10.0 * scenario.path_loss_exponent / LN10) ** 2
    w = k / (scenario.noise_std_db ** 2 * d2 * d2)
    return (diff * w[:, None]).T @ diff


def crlb(scenario: Scenario, true_position) -> float:
    """Root-trace of the inverse Fisher information, in meters."""
    fim = fisher_information(scenario, true_position)
    det = fim[0, 0] * fim[1, 1] - fim[0, 1] * fim[1, 0]
    if not det > 1e-12 * max(np.trace(fim) ** 2, np.finfo(float).tiny):
        raise SingularGeometryError("Fisher information is singular (collinear geometry)")
    return float(math.sqrt(np.trace(fim) / det))
