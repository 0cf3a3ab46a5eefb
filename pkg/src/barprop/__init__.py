"""BARProp: buffered adaptive RMSProp for RSS-based localization.

Core entry points::

    from barprop import Scenario, generate_rss, solve, builtin_layout
    sc = Scenario([0, 0], [40, 40], builtin_layout("homogeneous_12"), noise_std_db=3.0)
    meas = generate_rss(sc, [12.0, 25.0], np.random.default_rng(1))
    est = solve(sc, meas, rng=np.random.default_rng(2))
"""

from .baselines import DeConfig, LmConfig, RmspropConfig, de_solve, lm_solve, rmsprop_solve
from .harness import (
    ALGORITHMS, ExperimentReport, ExperimentSpec, anchor_count_sweep, builtin_layout,
    empirical_cdf, ingest_measurements, noise_sweep, rmse, run_dataset, run_experiment,
    write_measurements,
)
from .model import (
    D_MIN, CostEval, Measurement, Scenario, SingularGeometryError, cost, crlb,
    fisher_information, generate_rss,
)
from .optim import (
    BarpropConfig, BarpropState, Estimate, NumericalAbort, adaptive_decay, bound_project,
    buffer_index, init_feasible, solve, step,
)

__version__ = "0.1.0"
