"""Localize one target with each algorithm.

Twelve anchors sit on a regular grid over a 40 m x 40 m floor. One noisy RSS
vector is generated and handed to every solver, and the errors are compared
with the Cramer-Rao bound at the true position.
"""

# %%
import numpy as np

from barprop import (
    Scenario, builtin_layout, crlb, de_solve, generate_rss, lm_solve, rmsprop_solve, solve,
)

scenario = Scenario([0, 0], [40, 40], builtin_layout("homogeneous_12"), noise_std_db=3.0)
target = np.array([12.0, 27.0])
meas = generate_rss(scenario, target, np.random.default_rng(5))
print("RSS (dBm):", np.round(meas.rss_dbm, 1))

# %% Same measurement for everyone; independent generators for the random parts.
estimates = {
    "barprop": solve(scenario, meas, rng=np.random.default_rng(1)),
    "rmsprop": rmsprop_solve(scenario, meas, rng=np.random.default_rng(1)),
    "lm (start at truth)": lm_solve(scenario, meas, target),
    "de": de_solve(scenario, meas, rng=np.random.default_rng(1)),
}
for name, est in estimates.items():
    err = np.linalg.norm(est.position - target)
    print(f"{name:>20}: x={np.round(est.position, 3)} error={err:.3f} m "
          f"iterations={est.iterations} ({est.reason})")

# %% A single draw can beat the bound; the bound constrains the RMSE over many draws.
print(f"CRLB at the target: {crlb(scenario, target):.3f} m")
