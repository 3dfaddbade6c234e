#!/usr/bin/env python
# coding: utf-8

# # Box grids, boundary faces and star-shapedness
#
# The box [0, L1] x [0, L2] x [0, L3] is split into uniform hexahedral cells.
# Boundary faces carry their outward normal, which drives every boundary
# integral.

# In[1]:


import numpy as np

from piezostab import AlphaExpression, build_grid, c_alpha, star_shaped_delta, tangential_decompose


# In[2]:


grid = build_grid((1.0, 0.5, 2.0), (4, 2, 8))
print(grid.node_count, "nodes,", grid.cell_count, "cells, spacing", grid.spacing)
faces = grid.faces
print(len(faces.normal), "boundary faces")
print("total boundary area", faces.area.sum(), "expected", 2 * (0.5 + 2.0 + 1.0))


# The decay estimate needs (x - x0) . nu >= delta > 0 on the boundary. For a
# box this holds with delta equal to the distance from x0 to the nearest wall.

# In[3]:


for x0 in ([0.5, 0.25, 1.0], [0.1, 0.25, 1.0], [-0.2, 0.25, 1.0]):
    rep = star_shaped_delta(grid, x0)
    print(x0, "delta =", rep.delta, "strict" if rep.is_strict else "not strict")


# c_alpha = max |grad alpha| from nodal samples. It is exact for affine alpha.

# In[4]:


alpha = AlphaExpression(1.0, (0.3, 0.0, -0.4))
print("c_alpha =", c_alpha(grid, alpha), "exact", np.hypot(0.3, 0.4))
print("constant alpha:", c_alpha(grid, np.ones(grid.node_count)))


# Normal / tangential split of a boundary field, X = (X . nu) nu + X_tau.

# In[5]:


X = np.random.default_rng(0).standard_normal((len(faces.normal), 3))
normal, tau = tangential_decompose(X, faces.normal)
print("tangential part is orthogonal to nu:", abs(np.einsum("fi,fi->f", tau, faces.normal)).max())
print("reconstruction error:", abs(tau + normal - X).max())
