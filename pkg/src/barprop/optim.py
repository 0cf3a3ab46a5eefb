"""BARProp: RMSProp with a decay factor adapted from a short FIFO buffer of
squared gradients.

The decay factor rises towards one when the buffered squared gradients are
flat (the smoothed term stops moving) and falls back to its nominal floor
when they fluctuate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .model import Measurement, Scenario, cost_values, gradient

TOLERANCE = "tolerance"
MAX_ITERS = "max_iters"


class NumericalAbort(RuntimeError):
    """A non-finite value appeared in the optimizer state."""


def _pair(v) -> np.ndarray:
    return np.broadcast_to(np.asarray(v, dtype=float), (2,)).copy()


@dataclass(frozen=True)
class BarpropConfig:
    learning_rate: float = 0.04
    nominal_decay: np.ndarray = 0.92
    stability_const: np.ndarray = 1e-7
    buffer_len: int = 4
    tol: float = 0.01
    max_iters: int = 800
    init_candidates: int = 100
    bound_perturb_lo: float = 0.0
    bound_perturb_hi: float = 0.75
    # False freezes the decay at ``nominal_decay`` (plain RMSProp).
    adaptive: bool = True

    def __post_init__(self):
        object.__setattr__(self, "nominal_decay", _pair(self.nominal_decay))
        object.__setattr__(self, "stability_const", _pair(self.stability_const))
        self.validate()

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not np.all((self.nominal_decay > 0) & (self.nominal_decay < 1)):
            raise ValueError("nominal_decay components must lie in (0, 1)")
        if not np.all(self.stability_const > 0):
            raise ValueError("stability_const components must be > 0")
        for name in ("buffer_len", "max_iters", "init_candidates"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        lo, hi = self.bound_perturb_lo, self.bound_perturb_hi
        if not (0 <= lo < hi and lo <= hi * hi):
            raise ValueError("need 0 <= bound_perturb_lo < bound_perturb_hi and lo <= hi**2")


@dataclass(frozen=True)
class BarpropState:
    position: np.ndarray
    smoothed: np.ndarray
    buffer: np.ndarray
    iter: int = 0
    converged: bool = False
    reason: Optional[str] = None
    decay: Optional[np.ndarray] = None
    displacement: float = float("inf")


@dataclass
class Estimate:
    position: np.ndarray
    iterations: int
    reason: str
    elapsed: float
    # Per-iteration record, only filled when requested.
    trace: Optional[dict] = field(default=None, repr=False)


def initial_state(start, buffer_len: int) -> BarpropState:
    return BarpropState(
        position=np.array(start, dtype=float),
        smoothed=np.zeros(2),
        buffer=np.zeros((2, int(buffer_len))),
    )


def init_feasible(scenario: Scenario, measurement: Measurement, n_candidates: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Best of ``n_candidates`` uniform draws in the region (lowest index on ties)."""
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    span = scenario.region_max - scenario.region_min
    cands = scenario.region_min + span * rng.random((int(n_candidates), 2))
    if n_candidates == 1:
        return cands[0]
    return cands[int(np.argmin(cost_values(scenario, measurement, cands)))]


def buffer_index(j: int, length: int) -> int:
    """1-based cyclic write slot for iteration ``j``."""
    if j < 1 or length < 1:
        raise ValueError("j and length must be >= 1")
    return j - length * ((j - 1) // length)


def energy_fluctuation(buffer: np.ndarray) -> np.ndarray:
    """Per-coordinate 1 - (max - min) / (max + 1) over the buffer rows."""
    q = buffer.max(axis=1)
    p = buffer.min(axis=1)
    return 1.0 - (q - p) / (q + 1.0)


def adaptive_decay(buffer: np.ndarray, nominal) -> np.ndarray:
    return np.maximum(nominal, energy_fluctuation(np.asarray(buffer, dtype=float)))


def project_with_offset(x, region_min, region_max, z: float) -> np.ndarray:
    """Clamp to the box, push clamped coordinates inward by ``z``, re-clamp."""
    x = np.asarray(x, dtype=float)
    y = np.minimum(np.maximum(x, region_min), region_max)
    return np.minimum(np.maximum(y + z * np.sign(y - x), region_min), region_max)


def bound_project(x, scenario: Scenario, alpha: float, beta: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Keep ``x`` in the region; the inward kick is ``z ~ U(alpha, beta**2)``.

    One ``z`` is drawn per call whether or not ``x`` is outside, so the
    random stream advances identically on every iteration.
    """
    z = rng.uniform(alpha, beta * beta)
    return project_with_offset(x, scenario.region_min, scenario.region_max, z)


def _check_finite(state: BarpropState, g: np.ndarray, j: int) -> None:
    if not np.all(np.isfinite(g)):
        raise NumericalAbort(f"non-finite gradient {g} at iteration {j}, position {state.position}")


def step(state: BarpropState, scenario: Scenario, measurement: Measurement,
         config: BarpropConfig, rng: np.random.Generator) -> BarpropState:
    """One BARProp iteration; returns the next state."""
    j = state.iter + 1
    g = gradient(scenario, measurement, state.position)
    _check_finite(state, g, j)
    g2 = g * g

    buffer = state.buffer.copy()
    buffer[:, buffer_index(j, config.buffer_len) - 1] = g2
    if config.adaptive:
        rho = adaptive_decay(buffer, config.nominal_decay)
    else:
        rho = config.nominal_decay
    smoothed = rho * state.smoothed + (1.0 - rho) * g2

    moved = state.position - config.learning_rate * g / (config.stability_const + np.sqrt(smoothed))
    pos = bound_project(moved, scenario, config.bound_perturb_lo, config.bound_perturb_hi, rng)
    if not np.all(np.isfinite(pos)):
        raise NumericalAbort(f"non-finite position at iteration {j}")

    disp = float(np.hypot(*(pos - state.position)))
    converged = disp < config.tol
    reason = TOLERANCE if converged else (MAX_ITERS if j >= config.max_iters else None)
    return BarpropState(pos, smoothed, buffer, j, converged, reason, rho, disp)


def iterate(state: BarpropState, scenario: Scenario, measurement: Measurement,
            config: BarpropConfig, rng: np.random.Generator) -> Iterator[BarpropState]:
    """Yield successive states until the stopping rule fires."""
    while not state.converged and state.iter < config.max_iters:
        state = step(state, scenario, measurement, config, rng)
        yield state


def solve(scenario: Scenario, measurement: Measurement, config: BarpropConfig = None,
          rng: np.random.Generator = None, start=None, record: bool = False) -> Estimate:
    """Run BARProp from the best of ``init_candidates`` random starts.

    ``start`` skips the random initialization. ``record=True`` attaches the
    iterate positions, decay factors and smoothed terms to ``Estimate.trace``.
    """
    config = config or BarpropConfig()
    rng = rng if rng is not None else np.random.default_rng()
    measurement.check(scenario)
    t0 = time.perf_counter()
    if start is None:
        start = init_feasible(scenario, measurement, config.init_candidates, rng)
    state = initial_state(start, config.buffer_len)
    if record:
        positions, decays, smoothed = [state.position], [], []
    for state in iterate(state, scenario, measurement, config, rng):
        if record:
            positions.append(state.position)
            decays.append(state.decay)
            smoothed.append(state.smoothed)
    elapsed = time.perf_counter() - t0
    est = Estimate(state.position, state.iter, state.reason or MAX_ITERS, elapsed)
    if record:
        est.trace = {
            "positions": np.array(positions),
            "decay": np.array(decays).reshape(-1, 2),
            "smoothed": np.array(smoothed).reshape(-1, 2),
        }
    return est


def state_scalars(buffer_len: int) -> int:
    """Floats held by a running solver: buffer, smoothed term, position, decay."""
    return 2 * buffer_len + 2 + 2 + 2


__all__ = [
    "BarpropConfig", "BarpropState", "Estimate", "NumericalAbort", "TOLERANCE", "MAX_ITERS",
    "adaptive_decay", "bound_project", "buffer_index", "energy_fluctuation", "init_feasible",
    "initial_state", "iterate", "project_with_offset", "solve", "state_scalars", "step",
]
