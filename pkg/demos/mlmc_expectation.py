"""Estimating E[x(1)] with multilevel Monte Carlo.

Constants of the level plan are calibrated from a small pilot run, then the
plan sets the number of levels and per-level sample counts for each target
accuracy.  The result is compared against single-level MC of matched
accuracy in model cost units.  The plan targets a root-mean-square error of eps,
so a single run can land outside eps now and then.
"""
from fracgle import ModelSpec, NoiseSeed
from fracgle.harness import mc_mlmc_compare
from fracgle.mlmc import variance_decay_exponent

model = ModelSpec(0.6, 0.8)
rep = mc_mlmc_compare(model, "identity", [0.2, 0.1], NoiseSeed(9),
                      reference_stepsize=2.0**-9, reference_samples=20_000)
print("calibrated constants", [round(c, 3) for c in rep.constants])
print(f"reference {rep.reference.estimate:.4f} +- {rep.reference.std_error:.4f}")
for row, res in zip(rep.rows, rep.mlmc_results):
    print(f"eps={row.accuracy}: L={row.levels}  MLMC {row.mlmc_estimate:.4f} (cost {row.mlmc_cost:.3g})  "
          f"MC {row.mc_estimate:.4f} (cost {row.mc_cost:.3g})  decay {variance_decay_exponent(res):.2f}")
