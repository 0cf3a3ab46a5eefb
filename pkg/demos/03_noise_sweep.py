"""RMSE against shadowing noise, next to the mean CRLB.

A reduced Monte Carlo (200 runs per level) so it finishes in about a
minute; ``barprop sweep-noise`` runs the full 1000-run version.
"""

# %%
from barprop import ExperimentSpec, noise_sweep

spec = ExperimentSpec(noise_levels=(1.0, 2.0, 3.0, 4.0, 5.0), runs=200,
                      algorithms=("barprop", "rmsprop", "lm"), master_seed=0)
reports = noise_sweep(spec)

# %%
print("sigma   crlb   " + "  ".join(f"{a:>8}" for a in spec.algorithms))
for rep in reports:
    row = "  ".join(f"{rep.results[a].rmse:8.3f}" for a in spec.algorithms)
    print(f"{rep.noise_std_db:5.1f}  {rep.crlb_ref:5.3f}  {row}")

# %% Mean iterations show how quickly each gradient method stops.
for a in ("barprop", "rmsprop"):
    print(a, [round(r.results[a].mean_iterations, 1) for r in reports])
