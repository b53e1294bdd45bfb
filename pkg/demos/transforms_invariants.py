"""
Similarity transforms of a norm series
======================================

Maps a simulated SQG series through the QG-Wkp rescaling in both directions
and reports the invariants that should not change.
"""
from apriori_lab.solvers import SimConfig, run
from apriori_lab.transforms import TransformParams, invariant_report, norm_transfer

series = run(SimConfig(system="qg", n=64, t_end=0.5, dt=5e-3, stride=4, norms=((0, 2.0), (0, 4.0), (3, 2.0)))).series

for sign in ("+", "-"):
    params = TransformParams("QG-Wkp", sign=sign, gamma=0.5, k=3, p=2.0)
    a, b = params.rates
    out = norm_transfer(series, params)
    print(f"sign {sign}: rates a={a:.3f} b={b:.3f}, s(T)={out.s[-1]:.4f}")
    print(invariant_report(series, params).summary())
