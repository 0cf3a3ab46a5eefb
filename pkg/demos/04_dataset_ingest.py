"""Plug recorded measurements into the CDF pipeline.

No recorded campaign ships with the package, so this writes a synthetic
CSV in the expected ``x1,x2,rss_1..rss_N`` layout, ingests it, and runs
localization trials that each pick one stored sample.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from barprop import ExperimentSpec, Scenario, generate_rss, ingest_measurements, run_dataset
from barprop.harness import cdf_at, write_measurements

anchors = [(2, 2), (54, 3), (28, 23), (4, 22), (50, 21)]
scenario = Scenario([0, 0], [56, 25], anchors, noise_std_db=4.0)
positions = [(4.0 + 6.0 * i, y) for i in range(9) for y in (5.0, 12.5, 20.0)]
rng = np.random.default_rng(7)
records = [(generate_rss(scenario, p, rng), np.array(p)) for p in positions for _ in range(50)]

# %%
path = Path(tempfile.mkdtemp()) / "campaign.csv"
write_measurements(path, records)
print(path.read_text().splitlines()[0])
data = ingest_measurements(path, noise_std_db=4.0, n_anchors=5)
print(f"{len(data)} records")

# %%
spec = ExperimentSpec(layout="custom", anchors=tuple(anchors), region_max=(56.0, 25.0),
                      algorithms=("barprop", "rmsprop"))
rep = run_dataset(spec, scenario, data, trials=300)
for name, res in rep.results.items():
    print(f"{name}: rmse {res.rmse:.2f} m, P(error <= 6.5 m) = {cdf_at(res.errors, 6.5):.3f}")
