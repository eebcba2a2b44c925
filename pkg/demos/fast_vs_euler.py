"""The fast Euler method against plain Euler on one noise path.

The history kernel is replaced by a sum of exponentials certified to a
tolerance eps; the path gap should scale with eps while the memory per path
drops from N values to m_exp modes.  Timing shows where the O(N m_exp)
cost overtakes the O(N^2) one.
"""
import time

import numpy as np

from fracgle import Grid, ModelSpec, NoiseSeed
from fracgle.harness import fast_agreement_sweep
from fracgle.noise import build_g_sampler, sample_g
from fracgle.solver import default_soe, euler_solve, fast_euler_solve

model = ModelSpec(0.6, 0.8)
rep = fast_agreement_sweep(model, Grid(2**10), [1e-2, 1e-3, 1e-4, 1e-6], NoiseSeed(3))
for row in rep.rows:
    print(f"eps={row.tolerance:.0e}  m_exp={row.m_exp:3d}  max gap={row.max_path_gap:.2e}")

for n in (2**8, 2**10, 2**12):
    grid = Grid(n)
    g = sample_g(build_g_sampler(grid, model), NoiseSeed(4), n_samples=64)
    soe = default_soe(model.alpha, grid)
    t0 = time.perf_counter()
    euler_solve(model, grid, g)
    t1 = time.perf_counter()
    fast_euler_solve(model, grid, soe, g)
    t2 = time.perf_counter()
    print(f"N={n:5d}  m_exp={soe.m_exp:3d}  euler {t1 - t0:.3f}s  fast {t2 - t1:.3f}s  "
          f"ratio {(t1 - t0) / (t2 - t1):.2f}")
