"""Monte Carlo demo: how well are the lag weights recovered?

Runs small versions of the univariate and two-regressor designs and prints
bias, SD and RMSE of every parameter. Raise T, M and R to approach the
full-size studies (those take minutes per cell on one core).

    python notebooks/simulation_study.py
"""

import time

import numpy as np

from pdfmidas import FitConfig, SimDesign, run_study
from pdfmidas.simulation import exact_training_set
from pdfmidas.estimation import fit

# Noiseless sanity check: with exact densities the fit is exact.
design = SimDesign.univariate(T=60, p=12)
model = fit(design.model_spec(), exact_training_set(design))
print(f"exact data: theta_1 = {model.theta[0][0]:.6f} (truth -0.05), Q = {model.diagnostics.objective:.2e}")

# Sampling noise enters through the KDE step; more samples per period (M)
# and more periods (T) both shrink the error.
for T, M in ((50, 100), (50, 500), (200, 500)):
    t0 = time.perf_counter()
    rep = run_study(SimDesign.univariate(T=T, M=M, p=12, R=10, seed=1))
    s = rep.stat("theta_1")
    print(f"univariate T={T:4d} M={M:4d}: bias={s['bias']:+.5f} sd={s['sd']:.5f} "
          f"rmse={s['rmse']:.5f}  ({time.perf_counter() - t0:.1f}s)")

# Two regressors, combined with weights (0.4, 0.6).
rep = run_study(SimDesign.multivariate(T=200, M=300, p=12, R=5, seed=2), FitConfig(restarts=1))
print("\nmultivariate T=200 M=300 R=5")
print(rep.to_csv(), end="")
print("mean estimates:", np.round(rep.estimates.mean(axis=0), 4), "truth:", rep.truth)
