"""Reference optimizers: fixed-decay RMSProp, Levenberg-Marquardt and
DE/rand/1/bin differential evolution."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import D_MIN, LN10, Measurement, Scenario, cost_values, gradient
from .optim import (
    MAX_ITERS, TOLERANCE, Estimate, NumericalAbort, bound_project, init_feasible,
)


def _pair(v) -> np.ndarray:
    return np.broadcast_to(np.asarray(v, dtype=float), (2,)).copy()


@dataclass(frozen=True)
class RmspropConfig:
    learning_rate: float = 0.25
    decay: np.ndarray = 0.92
    stability_const: np.ndarray = 1e-7
    tol: float = 0.01
    max_iters: int = 800
    init_candidates: int = 100
    bound_perturb_lo: float = 0.0
    bound_perturb_hi: float = 0.75

    def __post_init__(self):
        object.__setattr__(self, "decay", _pair(self.decay))
        object.__setattr__(self, "stability_const", _pair(self.stability_const))
        if not np.all((self.decay > 0) & (self.decay < 1)):
            raise ValueError("decay components must lie in (0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not np.all(self.stability_const > 0) or not self.tol > 0:
            raise ValueError("stability_const and tol must be > 0")
        if self.max_iters < 1 or self.init_candidates < 1:
            raise ValueError("max_iters and init_candidates must be >= 1")


def rmsprop_solve(scenario: Scenario, measurement: Measurement, config: RmspropConfig = None,
                  rng: np.random.Generator = None, start=None, record: bool = False) -> Estimate:
    """RMSProp with the BARProp initialization, bounding and stopping rule."""
    config = config or RmspropConfig()
    rng = rng if rng is not None else np.random.default_rng()
    measurement.check(scenario)
    t0 = time.perf_counter()
    if start is None:
        start = init_feasible(scenario, measurement, config.init_candidates, rng)
    x = np.array(start, dtype=float)
    c = np.zeros(2)
    rho = config.decay
    path = [x] if record else None
    reason = MAX_ITERS
    j = 0
    while j < config.max_iters:
        j += 1
        g = gradient(scenario, measurement, x)
        if not np.all(np.isfinite(g)):
            raise NumericalAbort(f"non-finite gradient {g} at iteration {j}, position {x}")
        g2 = g * g
        c = rho * c + (1.0 - rho) * g2
        moved = x - config.learning_rate * g / (config.stability_const + np.sqrt(c))
        nxt = bound_project(moved, scenario, config.bound_perturb_lo, config.bound_perturb_hi, rng)
        disp = float(np.hypot(*(nxt - x)))
        x = nxt
        if record:
            path.append(x)
        if disp < config.tol:
            reason = TOLERANCE
            break
    est = Estimate(x, j, reason, time.perf_counter() - t0)
    if record:
        est.trace = {"positions": np.array(path)}
    return est


@dataclass(frozen=True)
class LmConfig:
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    tol: float = 1e-6
    grad_tol: float = 1e-9
    max_iters: int = 100
    max_damping: float = 1e16

    def __post_init__(self):
        if min(self.initial_damping, self.damping_up, self.damping_down, self.tol, self.grad_tol) <= 0:
            raise ValueError("LM parameters must be positive")
        if not self.damping_up > 1 > self.damping_down:
            raise ValueError("need damping_up > 1 > damping_down")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


def weighted_residuals(scenario: Scenario, measurement: Measurement, x):
    """Residuals h/sigma and their Jacobian with respect to the position."""
    diff = np.asarray(x, dtype=float) - scenario.anchors
    d2 = np.maximum(np.sum(diff * diff, axis=1), D_MIN * D_MIN)
    sigma = measurement.noise_std_db
    h = measurement.rss_dbm - scenario.tx_power_dbm + 5.0 * scenario.path_loss_exponent * np.log10(d2)
    r = h / sigma
    jac = (10.0 * scenario.path_loss_exponent / LN10) * diff / (sigma * d2)[:, None]
    return r, jac


def lm_solve(scenario: Scenario, measurement: Measurement, start,
             config: LmConfig = None) -> Estimate:
    """Levenberg-Marquardt on the weighted residuals, iterates kept in the region.

    Damping is additive (``J^T J + lambda I``) so a rank-deficient normal
    matrix stays solvable and the step follows the gradient direction.
    """
    config = config or LmConfig()
    measurement.check(scenario)
    t0 = time.perf_counter()
    lo, hi = scenario.region_min, scenario.region_max
    x = np.minimum(np.maximum(np.asarray(start, dtype=float), lo), hi)
    r, jac = weighted_residuals(scenario, measurement, x)
    f = float(r @ r)
    lam = config.initial_damping
    reason = MAX_ITERS
    j = 0
    while j < config.max_iters:
        j += 1
        b = jac.T @ r
        if not np.all(np.isfinite(b)):
            raise NumericalAbort(f"non-finite LM gradient at iteration {j}, position {x}")
        if float(np.hypot(*b)) * 2.0 < config.grad_tol:
            reason = TOLERANCE
            break
        a = jac.T @ jac
        accepted = False
        while lam <= config.max_damping:
            a00, a01, a11 = a[0, 0] + lam, a[0, 1], a[1, 1] + lam
            det = a00 * a11 - a01 * a01
            if det > 0:
                delta = -np.array([a11 * b[0] - a01 * b[1], a00 * b[1] - a01 * b[0]]) / det
                trial = np.minimum(np.maximum(x + delta, lo), hi)
                r_t, jac_t = weighted_residuals(scenario, measurement, trial)
                f_t = float(r_t @ r_t)
                if f_t < f:
                    accepted = True
                    break
            lam *= config.damping_up
        if not accepted:
            reason = TOLERANCE
            break
        step_len = float(np.hypot(*(trial - x)))
        x, r, jac, f = trial, r_t, jac_t, f_t
        lam = max(lam * config.damping_down, 1e-12)
        if step_len < config.tol:
            reason = TOLERANCE
            break
    return Estimate(x, j, reason, time.perf_counter() - t0)


@dataclass(frozen=True)
class DeConfig:
    population: int = 10
    max_generations: int = 100
    crossover_rate: float = 0.9
    differential_weight: float = 0.5
    tol: float = 1e-4

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be >= 4")
        if not 0 < self.crossover_rate <= 1:
            raise ValueError("crossover_rate must lie in (0, 1]")
        if not 0 < self.differential_weight <= 2:
            raise ValueError("differential_weight must lie in (0, 2]")
        if self.max_generations < 1 or not self.tol > 0:
            raise ValueError("max_generations must be >= 1 and tol > 0")


def de_generation(pop: np.ndarray, fit: np.ndarray, scenario: Scenario, measurement: Measurement,
                  config: DeConfig, rng: np.random.Generator):
    """One synchronous DE/rand/1/bin generation.

    Draw order: for each member ``i`` a permutation of the other ``K - 1``
    indices (first three used), then a ``(K, 2)`` block of crossover
    uniforms, then ``K`` forced-crossover coordinates.
    """
    k = len(pop)
    donors = np.empty((k, 3), dtype=int)
    for i in range(k):
        picks = rng.permutation(k - 1)[:3]
        donors[i] = picks + (picks >= i)
    cross = rng.random((k, 2)) < config.crossover_rate
    forced = rng.integers(0, 2, size=k)
    cross[np.arange(k), forced] = True

    mutant = pop[donors[:, 0]] + config.differential_weight * (pop[donors[:, 1]] - pop[donors[:, 2]])
    # Out-of-box mutant coordinates land halfway between the parent and the violated bound.
    lo, hi = scenario.region_min, scenario.region_max
    mutant = np.where(mutant < lo, 0.5 * (pop + lo), mutant)
    mutant = np.where(mutant > hi, 0.5 * (pop + hi), mutant)
    trial = np.where(cross, mutant, pop)
    trial_fit = cost_values(scenario, measurement, trial)
    keep = trial_fit <= fit
    return np.where(keep[:, None], trial, pop), np.where(keep, trial_fit, fit)


def de_solve(scenario: Scenario, measurement: Measurement, config: DeConfig = None,
             rng: np.random.Generator = None, population: Optional[np.ndarray] = None,
             record: bool = False) -> Estimate:
    """Differential evolution over the region box; returns the best member.

    Stops after ``max_generations`` or once the population's per-coordinate
    spread falls below ``tol``.
    """
    config = config or DeConfig()
    rng = rng if rng is not None else np.random.default_rng()
    measurement.check(scenario)
    t0 = time.perf_counter()
    if population is None:
        span = scenario.region_max - scenario.region_min
        pop = scenario.region_min + span * rng.random((config.population, 2))
    else:
        pop = np.array(population, dtype=float)
        if pop.shape != (config.population, 2):
            raise ValueError(f"population must have shape ({config.population}, 2)")
    fit = cost_values(scenario, measurement, pop)
    best_hist = [float(fit.min())] if record else None
    reason = MAX_ITERS
    g = 0
    while g < config.max_generations:
        g += 1
        pop, fit = de_generation(pop, fit, scenario, measurement, config, rng)
        if record:
            best_hist.append(float(fit.min()))
        if float(np.max(np.ptp(pop, axis=0))) < config.tol:
            reason = TOLERANCE
            break
    est = Estimate(pop[int(np.argmin(fit))].copy(), g, reason, time.perf_counter() - t0)
    if record:
        est.trace = {"best_cost": np.array(best_hist), "population": pop}
    return est


__all__ = [
    "DeConfig", "LmConfig", "RmspropConfig", "de_generation", "de_solve", "lm_solve",
    "rmsprop_solve", "weighted_residuals",
]
