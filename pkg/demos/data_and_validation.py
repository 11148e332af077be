"""Draw a unit-sphere dataset, validate its geometry, round-trip it as CSV.

The convergence theory needs two things from the inputs: unit norms and no
two parallel examples.  validate() measures both margins; anything that
fails is refused by the training loop but can still be loaded and
inspected.
"""
import tempfile
from pathlib import Path

import numpy as np

import natgrad as ng

ds = ng.synth_sphere(n=16, d=8, seed=0)
rep = ng.validate(ds)
print(f"n={ds.n} d={ds.d}")
print(f"max |row norm - 1| : {rep.max_norm_deviation:.3e}")
print(f"min pairwise gap   : {rep.min_pairwise_angle_gap:.3e}")
print(f"max |target|       : {rep.max_abs_target}")
print(f"passed             : {rep.passed}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "data.csv"
    ng.save_csv(ds, path)
    back = ng.load_csv(path)
    print(f"csv round trip exact: {np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)}")

# scaling the rows off the sphere is caught immediately
bad = ng.Dataset(1.1 * ds.X, ds.y)
print(f"off-sphere data passes: {ng.validate(bad).passed}")
