"""
A priori estimates on a simulated series
========================================

Calibrates the Calderon-Zygmund constant, checks both SQG gradient bounds on
a short run, and scans gamma to find the tightest admissible bound.
"""
import numpy as np

from apriori_lab.estimates import EstimateParams, check_denominator, check_main, gamma_sweep
from apriori_lab.norms import calibrate
from apriori_lab.solvers import SimConfig, run
from apriori_lab.spectral import Grid

series = run(SimConfig(system="qg", n=32, t_end=0.5, dt=1e-2, stride=5, norms=((0, 2.0),), besov=True)).series

# constant in ||grad theta||_Linf <= C ||theta||_B
c0 = calibrate("C_CZ", trials=10, seed=1, grid=Grid(2, 32)).constant
print(f"calibrated C_CZ = {c0:.4f}")

for theorem in ("1.4upper", "1.4lower"):
    params = EstimateParams(theorem, gamma=2 * c0, c0=c0)
    print(check_main(series, params).summary())
print(check_denominator(series, EstimateParams("1.4lower", 2 * c0, c0)).summary())

# the tightest gamma at each sample time
table = gamma_sweep(series, "1.4upper", np.linspace(c0, 10 * c0, 40), c0)
print("threshold:", table.threshold)
print("tightest gamma per t:", np.round(table.tightest_gamma, 3))
