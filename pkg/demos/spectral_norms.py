"""
Spectral operators and norm diagnostics
=======================================

Builds a small periodic field, checks the spectral derivative against the
exact one, and prints the norms that the estimate checker consumes.
"""
import numpy as np

from apriori_lab.norms import BesovPartition, besov_b0inf1, grad_linf, homogeneous_sobolev, lp_norm
from apriori_lab.spectral import Grid, SpectralField, gradient, qg_velocity, divergence

grid = Grid(2, 64)
x1, x2 = grid.x
theta = SpectralField.from_real(grid, np.cos(3 * x1) - 0.7 * np.sin(5 * x2), zero_mean=True)

# derivative in x1 is exact for a trigonometric polynomial
d1 = gradient(theta).component(0).real()
print("max |d1 theta - exact|:", np.abs(d1 + 3 * np.sin(3 * x1)).max())

# the QG velocity is divergence free
print("max |div v|:", np.abs(divergence(qg_velocity(theta)).real()).max())

# norm family
for p in (2, 4, np.inf):
    print(f"||theta||_L{p}: {lp_norm(theta, p):.6f}")
print("|theta|_H3:", homogeneous_sobolev(theta, 3))
print("||grad theta||_Linf:", grad_linf(theta))

part = BesovPartition(grid)
print("partition residual:", part.partition_residual())
print("B^0_{inf,1} norm:", besov_b0inf1(theta, part))
