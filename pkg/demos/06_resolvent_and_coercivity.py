#!/usr/bin/env python
# coding: utf-8

# # Resolvent solves and coercivity
#
# Dissipativity makes I - A invertible with ((I - A) U, U) >= |U|^2. The
# resolvent solver uses GMRES on the mass-weighted system and reports the
# achieved residual.

# In[1]:


from dataclasses import replace

import numpy as np

from piezostab import (
    AlphaExpression,
    FieldState,
    MaterialSet,
    PiezoTensor,
    ScalarQ,
    assemble,
    build_grid,
    coercivity_estimate,
    dissipativity_check,
    solve_resolvent,
)


# In[2]:


rng = np.random.default_rng(3)
m = MaterialSet.isotropic(lam=2.0, mu_shear=1.0, piezo=PiezoTensor(0.4 * rng.standard_normal((3, 6))),
                          eps=1.3, mu=0.7, gain=1.1, q=ScalarQ(AlphaExpression(0.8, (0.3, -0.2, 0.5))))
sys = assemble(build_grid((1.0, 0.8, 1.3), (2, 2, 2)), m)

x = rng.standard_normal(sys.size)
rhs = FieldState.from_vector(x - sys.apply(x))
sol, rep = solve_resolvent(sys, rhs)
print(rep)
print("round trip error", np.linalg.norm(sol.to_vector() - x) / np.linalg.norm(x))


# Sampled dissipativity defect and the smallest observed resolvent gap.

# In[3]:


print(dissipativity_check(sys, samples=100, seed=0))


# The coupled form of the stationary problem is coercive. Its symmetric part
# does not see Q or the piezoelectric coupling, which only enter
# skew-symmetrically.

# In[4]:


for q in (m.q, ScalarQ(0.0), ScalarQ(5.0)):
    print(coercivity_estimate(assemble(sys.grid, replace(m, q=q))))
