"""Watch the adaptive decay factor during one solve.

The decay factor sits at its nominal floor while the buffered squared
gradients fluctuate, and climbs towards one once they flatten. Switching
``adaptive`` off gives plain RMSProp for comparison.
"""

# %%
import numpy as np

from barprop import BarpropConfig, Scenario, builtin_layout, generate_rss, solve

scenario = Scenario([0, 0], [40, 40], builtin_layout("nonhomogeneous_12"), noise_std_db=3.0)
target = np.array([22.0, 18.0])
meas = generate_rss(scenario, target, np.random.default_rng(0))

est = solve(scenario, meas, rng=np.random.default_rng(3), record=True)
decay, smoothed = est.trace["decay"], est.trace["smoothed"]

# %%
print(" iter   rho_x   rho_y      c_x        c_y")
for j in list(range(0, len(decay), max(1, len(decay) // 12))) + [len(decay) - 1]:
    print(f"{j + 1:5d}  {decay[j, 0]:.4f}  {decay[j, 1]:.4f}  {smoothed[j, 0]:9.4f}  {smoothed[j, 1]:9.4f}")
print(f"stopped after {est.iterations} iterations ({est.reason}), "
      f"error {np.linalg.norm(est.position - target):.3f} m")

# %% Fixed decay with the same start and seed.
fixed = solve(scenario, meas, BarpropConfig(adaptive=False), np.random.default_rng(3))
print(f"fixed decay: {fixed.iterations} iterations, error {np.linalg.norm(fixed.position - target):.3f} m")
