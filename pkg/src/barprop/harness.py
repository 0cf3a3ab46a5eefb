"""Monte Carlo experiment engine.

Every run draws its target and RSS vector from a stream keyed by
``(master_seed, run index)``; each algorithm then gets its own stream keyed
by ``(master_seed, crc32(name), run index)``.  Results are therefore a pure
function of the spec and seed, whatever the worker count or the set of
algorithms being compared.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .baselines import DeConfig, LmConfig, RmspropConfig, de_solve, lm_solve, rmsprop_solve
from .model import D_MIN, Measurement, Scenario, SingularGeometryError, crlb, generate_rss
from .optim import BarpropConfig, NumericalAbort, solve

log = logging.getLogger(__name__)

ALGORITHMS = ("barprop", "rmsprop", "lm", "de")

REGION_MIN = (0.0, 0.0)
REGION_MAX = (40.0, 40.0)

LAYOUTS = {
    "homogeneous_12": (
        (40, 40), (40, 0), (0, 40), (0, 0), (40, 20), (20, 40),
        (0, 20), (20, 0), (10, 10), (10, 30), (30, 30), (30, 10),
    ),
    "nonhomogeneous_12": (
        (32, 4), (40, 2), (6, 14), (1, 1), (38, 12), (20, 11),
        (3, 10), (12, 8), (7, 7), (10, 13), (25, 3), (37, 6),
    ),
}

# Seed-stream tags.
_LAYOUT, _RUN, _ALGO, _TRIAL = 0, 1, 2, 3
TARGET_MARGIN = 1.0


class RunAbort(RuntimeError):
    """An algorithm failed inside a Monte Carlo run."""


def builtin_layout(name: str) -> np.ndarray:
    try:
        return np.array(LAYOUTS[name], dtype=float)
    except KeyError:
        raise KeyError(f"unknown layout {name!r}; expected one of {sorted(LAYOUTS)}") from None


def stream(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key)))


def algorithm_tag(name: str) -> int:
    return zlib.crc32(name.encode())


def is_degenerate(anchors: np.ndarray) -> bool:
    """All anchors within 1 m of each other, or (for N >= 3) collinear."""
    anchors = np.asarray(anchors, dtype=float)
    if len(anchors) >= 2:
        span = np.max(np.linalg.norm(anchors[:, None] - anchors[None], axis=-1))
        if span < 1.0:
            return True
    if len(anchors) >= 3:
        sv = np.linalg.svd(anchors - anchors.mean(axis=0), compute_uv=False)
        if sv[1] <= 1e-6 * sv[0]:
            return True
    return False


def random_layout(n: int, rng: np.random.Generator, region_min=REGION_MIN, region_max=REGION_MAX,
                  max_tries: int = 1000) -> np.ndarray:
    lo, hi = np.asarray(region_min, float), np.asarray(region_max, float)
    for _ in range(max_tries):
        anchors = lo + (hi - lo) * rng.random((n, 2))
        if not is_degenerate(anchors):
            return anchors
    raise RuntimeError(f"could not draw a non-degenerate layout of {n} anchors")


def random_target(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    lo = scenario.region_min + TARGET_MARGIN
    hi = scenario.region_max - TARGET_MARGIN
    while True:
        x = lo + (hi - lo) * rng.random(2)
        if np.all(np.linalg.norm(x - scenario.anchors, axis=1) >= D_MIN):
            return x


def rmse(errors) -> float:
    """Root mean squared error; accepts error norms (M,) or error vectors (M, 2)."""
    e = np.asarray(errors, dtype=float)
    sq = e * e if e.ndim == 1 else np.sum(e * e, axis=-1)
    return float(math.sqrt(np.mean(sq)))


def empirical_cdf(errors) -> np.ndarray:
    """(M, 2) array of sorted errors and their cumulative probabilities i/M."""
    e = np.sort(np.asarray(errors, dtype=float))
    return np.column_stack([e, np.arange(1, len(e) + 1) / len(e)])


def cdf_at(errors, threshold: float) -> float:
    return float(np.mean(np.asarray(errors) <= threshold))


@dataclass(frozen=True)
class ExperimentSpec:
    layout: str = "homogeneous_12"           # homogeneous_12 | nonhomogeneous_12 | random | file | custom
    anchors: Optional[tuple] = None          # used by the custom layout
    n_anchors: int = 12                      # used by the random layout
    layout_file: Optional[str] = None        # scenario YAML used by the file layout
    target: Optional[tuple] = None           # None draws a uniform target per run
    noise_levels: tuple = (3.0,)
    runs: int = 1000
    algorithms: tuple = ALGORITHMS
    master_seed: int = 0
    noiseless: bool = False
    anchors_per_run: bool = False
    tx_power_dbm: float = -10.0
    path_loss_exponent: float = 3.0
    region_min: tuple = REGION_MIN
    region_max: tuple = REGION_MAX
    barprop: BarpropConfig = field(default_factory=BarpropConfig)
    rmsprop: RmspropConfig = field(default_factory=RmspropConfig)
    lm: LmConfig = field(default_factory=LmConfig)
    de: DeConfig = field(default_factory=DeConfig)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "noise_levels", tuple(float(s) for s in np.atleast_1d(self.noise_levels)))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.noise_levels or min(self.noise_levels) <= 0:
            raise ValueError("noise levels must be > 0")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad or not self.algorithms:
            raise ValueError(f"unknown algorithms {sorted(bad)}; registered: {ALGORITHMS}")
        if self.layout not in (*LAYOUTS, "random", "file", "custom"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.layout == "file" and not self.layout_file:
            raise ValueError("layout 'file' needs layout_file")
        if self.layout == "custom" and self.anchors is None:
            raise ValueError("layout 'custom' needs anchors")
        if self.layout == "random" and self.n_anchors < 1:
            raise ValueError("n_anchors must be >= 1")

    def scenario(self, sigma: float, run: Optional[int] = None) -> Scenario:
        """Scenario at noise level ``sigma``; ``run`` selects a per-run random layout."""
        if self.layout == "file":
            from .config import load_scenario
            return load_scenario(self.layout_file).with_noise(sigma)
        if self.layout == "random":
            key = (_LAYOUT, self.n_anchors) if run is None else (_LAYOUT, self.n_anchors, run + 1)
            anchors = random_layout(self.n_anchors, stream(self.master_seed, *key),
                                    self.region_min, self.region_max)
        elif self.layout == "custom":
            anchors = self.anchors
        else:
            anchors = builtin_layout(self.layout)
        return Scenario(self.region_min, self.region_max, anchors,
                        self.tx_power_dbm, self.path_loss_exponent, sigma)


@dataclass
class AlgorithmResult:
    errors: np.ndarray
    times: np.ndarray
    iterations: np.ndarray

    @property
    def rmse(self) -> float:
        return rmse(self.errors)

    @property
    def cdf(self) -> np.ndarray:
        return empirical_cdf(self.errors)

    @property
    def mean_time(self) -> float:
        return float(np.mean(self.times))

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations))


@dataclass
class ExperimentReport:
    sweep: str
    sweep_value: float
    noise_std_db: float
    n_anchors: int
    runs: int
    crlb_ref: float
    crlb_kind: str            # "fixed" target or "mean" over sampled targets
    results: dict
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "sweep": self.sweep,
            "sweep_value": self.sweep_value,
            "noise_std_db": self.noise_std_db,
            "n_anchors": self.n_anchors,
            "runs": self.runs,
            "crlb_ref": self.crlb_ref,
            "crlb_kind": self.crlb_kind,
            "metadata": self.metadata,
            "algorithms": {
                name: {
                    "rmse": r.rmse,
                    "mean_time_ms": r.mean_time * 1e3,
                    "mean_iterations": r.mean_iterations,
                    "errors": r.errors.tolist(),
                    "cdf": r.cdf.tolist(),
                }
                for name, r in self.results.items()
            },
        }


def _make_solver(name: str, spec: ExperimentSpec):
    if name == "barprop":
        return lambda sc, meas, target, rng: solve(sc, meas, spec.barprop, rng)
    if name == "rmsprop":
        return lambda sc, meas, target, rng: rmsprop_solve(sc, meas, spec.rmsprop, rng)
    if name == "lm":
        return lambda sc, meas, target, rng: lm_solve(sc, meas, target, spec.lm)
    if name == "de":
        return lambda sc, meas, target, rng: de_solve(sc, meas, spec.de, rng)
    raise KeyError(name)


def evaluate_case(spec: ExperimentSpec, scenario: Scenario, measurement: Measurement,
                  target: np.ndarray, index: int) -> dict:
    """Run every algorithm of ``spec`` on one measurement; (error, time, iters) per name."""
    out = {}
    for name in spec.algorithms:
        rng = stream(spec.master_seed, _ALGO, algorithm_tag(name), index)
        try:
            est = _make_solver(name, spec)(scenario, measurement, target, rng)
        except (NumericalAbort, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise RunAbort(f"run {index}, algorithm {name}: {exc}") from exc
        out[name] = (float(np.linalg.norm(est.position - target)), est.elapsed, est.iterations)
    return out


def _run_one(args):
    spec, sigma, base, m = args
    scenario = spec.scenario(sigma, run=m) if spec.anchors_per_run else base
    rng = stream(spec.master_seed, _RUN, m)
    target = np.asarray(spec.target, float) if spec.target is not None else random_target(scenario, rng)
    measurement = generate_rss(scenario, target, rng, noiseless=spec.noiseless)
    try:
        bound = crlb(scenario, target)
    except SingularGeometryError:
        bound = float("nan")
    return bound, evaluate_case(spec, scenario, measurement, target, m)


def _collect(spec: ExperimentSpec, rows, sweep: str, sweep_value: float, sigma: float,
             n_anchors: int, fixed_target: bool) -> ExperimentReport:
    bounds = np.array([b for b, _ in rows])
    results = {}
    for name in spec.algorithms:
        vals = np.array([r[name] for _, r in rows], dtype=float)
        results[name] = AlgorithmResult(vals[:, 0], vals[:, 1], vals[:, 2])
    return ExperimentReport(
        sweep=sweep, sweep_value=float(sweep_value), noise_std_db=float(sigma),
        n_anchors=int(n_anchors), runs=len(rows),
        crlb_ref=float(np.nanmean(bounds)) if np.any(np.isfinite(bounds)) else float("nan"),
        crlb_kind="fixed" if fixed_target else "mean",
        results=results, metadata=dict(spec.metadata),
    )


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def run_experiment(spec: ExperimentSpec, workers: int = 1, sweep: Optional[str] = None,
                   sweep_value: Optional[float] = None) -> ExperimentReport:
    """Monte Carlo at a single noise level (``spec.noise_levels`` must have one entry)."""
    if len(spec.noise_levels) != 1:
        raise ValueError("run_experiment takes one noise level; use noise_sweep for several")
    sigma = spec.noise_levels[0]
    base = spec.scenario(sigma)
    rows = _map(_run_one, [(spec, sigma, base, m) for m in range(spec.runs)], workers)
    return _collect(spec, rows, sweep or "noise_std_db",
                    sigma if sweep_value is None else sweep_value,
                    sigma, base.n_anchors, spec.target is not None)


def noise_sweep(spec: ExperimentSpec, levels: Optional[Sequence[float]] = None,
                workers: int = 1) -> list:
    levels = spec.noise_levels if levels is None else tuple(levels)
    reports = [run_experiment(dataclasses.replace(spec, noise_levels=(s,)), workers) for s in levels]
    for name in spec.algorithms:
        values = [r.results[name].rmse for r in reports]
        for a, b, sa, sb in zip(values, values[1:], levels, levels[1:]):
            if b < 0.9 * a:
                log.warning("%s: rmse drops from %.3f (sigma=%g) to %.3f (sigma=%g)", name, a, sa, b, sb)
    return reports


def anchor_count_sweep(spec: ExperimentSpec, counts: Sequence[int], workers: int = 1) -> list:
    """One fixed random layout per anchor count, random targets per run."""
    if any(int(n) < 1 for n in counts):
        raise ValueError("anchor counts must be positive")
    sigma = spec.noise_levels[0]
    reports = []
    for n in counts:
        sub = dataclasses.replace(spec, layout="random", n_anchors=int(n), noise_levels=(sigma,))
        reports.append(run_experiment(sub, workers, sweep="n_anchors", sweep_value=int(n)))
    return reports


# --- measurement datasets -------------------------------------------------

class IngestError(ValueError):
    pass


def write_measurements(path, records) -> None:
    """Write ``(Measurement, true_position)`` records as ``x1,x2,rss_1..rss_N`` CSV."""
    records = list(records)
    n = len(records[0][0].rss_dbm)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", *[f"rss_{i}" for i in range(1, n + 1)]])
        for meas, pos in records:
            w.writerow([repr(float(v)) for v in (*np.asarray(pos), *meas.rss_dbm)])


def ingest_measurements(path, noise_std_db=3.0, n_anchors: Optional[int] = None) -> list:
    """Parse a measurement CSV into ``(Measurement, true_position)`` records.

    ``noise_std_db`` (scalar or per-anchor) sets the weights carried by each
    Measurement, since the file holds readings only.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        for col in ("x1", "x2"):
            if col not in header:
                raise IngestError(f"{path}: missing column {col!r}")
        rss_cols = [h for h in header if h.startswith("rss_")]
        n = n_anchors if n_anchors is not None else len(rss_cols)
        if n < 1:
            raise IngestError(f"{path}: missing column 'rss_1'")
        expected = ["x1", "x2", *[f"rss_{i}" for i in range(1, n + 1)]]
        for col in expected:
            if col not in header:
                raise IngestError(f"{path}: missing column {col!r}")
        if len(header) != len(expected):
            extra = [h for h in header if h not in expected]
            raise IngestError(f"{path}: unexpected columns {extra}")
        idx = [header.index(c) for c in expected]
        sigma = np.broadcast_to(np.asarray(noise_std_db, dtype=float), (n,))
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = np.array([float(row[i]) for i in idx])
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(vals)):
                raise IngestError(f"{path}:{lineno}: non-finite value")
            records.append((Measurement(vals[2:], sigma), vals[:2]))
    return records


def _dataset_case(args):
    spec, scenario, records, t = args
    pick = int(stream(spec.master_seed, _TRIAL, t).integers(len(records)))
    meas, target = records[pick]
    try:
        bound = crlb(scenario.with_noise(meas.noise_std_db), target)
    except SingularGeometryError:
        bound = float("nan")
    return bound, evaluate_case(spec, scenario, meas, np.asarray(target), t)


def run_dataset(spec: ExperimentSpec, scenario: Scenario, records, trials: int,
                workers: int = 1) -> ExperimentReport:
    """Localization trials on recorded measurements; trial ``t`` picks one record at random."""
    if trials < 1 or not records:
        raise ValueError("need at least one trial and one record")
    items = [(spec, scenario, records, t) for t in range(trials)]
    rows = _map(_dataset_case, items, workers)
    return _collect(spec, rows, "dataset", float(trials), float(np.mean(scenario.noise_std_db)),
                    scenario.n_anchors, fixed_target=False)


# --- report output ----------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def write_csv(reports, path) -> None:
    """Accuracy table; every column is seed-deterministic."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "sweep", "sweep_value", "rmse", "crlb", "mean_iters"])
        for rep in reports:
            for name, r in rep.results.items():
                w.writerow([name, rep.sweep, _fmt(rep.sweep_value), _fmt(r.rmse),
                            _fmt(rep.crlb_ref), _fmt(r.mean_iterations)])


def write_timing_csv(reports, path) -> None:
    """Wall-clock table, kept apart because it is not reproducible."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "sweep", "sweep_value", "mean_time_ms"])
        for rep in reports:
            for name, r in rep.results.items():
                w.writerow([name, rep.sweep, _fmt(rep.sweep_value), _fmt(r.mean_time * 1e3)])


def write_json(reports, path, metadata: Optional[dict] = None) -> None:
    doc = {"metadata": metadata or {}, "reports": [r.to_dict() for r in reports]}
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=True))
