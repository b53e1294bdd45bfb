"""
Pseudo-spectral runs and conservation checks
============================================

Integrates inviscid SQG and viscous Navier-Stokes on small grids and reports
how well the conserved or dissipated quantities behave.
"""
import numpy as np

from apriori_lab.solvers import SimConfig, run

# inviscid SQG conserves every Lp norm of theta
qg = run(SimConfig(system="qg", n=64, t_end=0.5, dt=5e-3, stride=10, norms=((0, 2.0), (0, 4.0)), besov=True))
for name in ("l2", "lp_4"):
    col = qg.series.columns[name]
    print(f"qg {name}: relative drift {np.abs(col / col[0] - 1).max():.2e}")
print("qg grad_linf growth:", qg.series.columns["grad_linf"][-1] / qg.series.columns["grad_linf"][0])

# viscous Navier-Stokes: the L2 norm of the velocity decays monotonically
ns = run(SimConfig(system="ns", n=32, t_end=0.5, dt=1e-2, nu=0.05, preset="taylor_green", stride=5, norms=((0, 2.0),)))
l2 = ns.series.columns["l2"]
print("ns l2 monotone:", bool(np.all(np.diff(l2) <= 0)), "final/initial:", l2[-1] / l2[0])
print("warnings:", ns.warnings or "none")
