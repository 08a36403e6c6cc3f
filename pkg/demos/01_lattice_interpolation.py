"""Multilinear lattice lookups, the building block of every stage."""

import numpy as np

from panlut.lattice import LutTable, interpolate, locate

# %% A 2-D table with 5 points per axis whose entries are an affine function
# of the lattice position. Multilinear interpolation reproduces it exactly.
n = 5
grid = np.linspace(0.0, 1.0, n)
yy, xx = np.meshgrid(grid, grid, indexing="ij")
table = LutTable((0.2 + 0.5 * yy - 0.3 * xx)[..., None])

rng = np.random.default_rng(0)
v = rng.random((2, 6))
q = locate(v, n)
print("cell of each query:\n", q.base)
print("position inside the cell:\n", q.frac.round(3))
print("lookup:", interpolate(table, q)[0].round(6))
print("affine:", (0.2 + 0.5 * v[0] - 0.3 * v[1]).round(6))

# %% The upper edge of the domain maps into the last cell, not one beyond it.
edge = locate(np.array([[1.0], [0.0]]), n)
print("v = 1 lands in cell", edge.base.ravel(), "with fraction", edge.frac.ravel())

# %% Five-dimensional tables (32 corners per query) work the same way.
big = LutTable(rng.standard_normal((9,) * 5 + (4,)))
print("5-D lookup of 3 points:", interpolate(big, locate(rng.random((5, 3)), 9)).shape)
