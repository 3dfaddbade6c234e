#!/usr/bin/env python
# coding: utf-8

# # Material laws
#
# Elasticity, piezoelectric coupling and the boundary operator Q, with the
# validation that rejects non-physical input.

# In[1]:


import numpy as np

from piezostab import (
    AlphaExpression,
    ElasticityTensor,
    MaterialSet,
    PiezoTensor,
    ScalarQ,
    SymTensor3,
    electric_displacement,
    piezo_adjoint_check,
    stress,
    validate_material,
)
from piezostab.errors import PiezoError


# An isotropic solid. Symmetric tensors are packed in Mandel form, so the
# smallest eigenvalue of the 6x6 matrix is the coercivity constant alpha0.

# In[2]:


C = ElasticityTensor.isotropic(lam=1.0, mu_shear=1.0)
print(C.voigt)
print("alpha0 =", np.linalg.eigvalsh(C.voigt)[0])


# A piezoelectric coupling given in engineering notation (3x6) and a
# constitutive evaluation: stress and electric displacement for a shear strain
# under a field.

# In[3]:


e = np.zeros((3, 6))
e[2, 2] = 0.4      # e33
e[0, 4] = 0.2      # e15
m = MaterialSet(C, PiezoTensor(e), eps=1.0, mu=1.0, gain=1.0, q=ScalarQ(1.0))
strain = SymTensor3.from_matrix([[0.0, 0.01, 0.0], [0.01, 0.0, 0.0], [0.0, 0.0, 0.02]])
field = np.array([0.0, 0.0, 1.0])
print("stress\n", stress(m, strain, field).to_matrix())
print("D =", electric_displacement(m, strain, field))


# The coupling and its adjoint satisfy e gamma . E = gamma : e^T E. The check
# samples random pairs and reports the worst relative defect.

# In[4]:


print("adjoint defect", piezo_adjoint_check(m, n_samples=100))


# A spatially varying scalar alpha(x) = a0 + g . x.

# In[5]:


alpha = AlphaExpression(1.0, (0.2, 0.0, -0.1))
m_var = MaterialSet(C, PiezoTensor(e), eps=1.0, mu=1.0, gain=1.0, q=ScalarQ(alpha))
print(validate_material(m_var))


# Non-physical data is rejected with a message naming the offending quantity.

# In[6]:


bad = np.diag([1.0, 1.0, 1.0, -0.5, 1.0, 1.0])
for make in (
    lambda: MaterialSet(ElasticityTensor.from_engineering(bad), PiezoTensor.zero(), 1.0, 1.0, 1.0, ScalarQ(1.0)),
    lambda: MaterialSet(C, PiezoTensor.zero(), eps=-1.0, mu=1.0, gain=1.0, q=ScalarQ(1.0)),
):
    try:
        validate_material(make())
    except PiezoError as exc:
        print(type(exc).__name__, exc)
