"""Boundary-damped piezoelectric dynamics on box domains.

Trilinear finite elements for the coupled elasticity and Maxwell system,
energy-consistent implicit midpoint stepping, and diagnostics for the energy
balance, exponential decay and the dissipativity of the discrete generator.
"""
from .config import ScenarioConfig, parse_config, validate_config
from .dynamics import (
    GaussianDisplacement,
    Mixed,
    Scenario,
    SolenoidalEM,
    TimeSteppingConfig,
    VectorPotential,
    checkpoint_load,
    checkpoint_save,
    divergence_residual,
    init_state,
    run,
    step_midpoint,
)
from .energy import (
    EnergyTrace,
    audit_balance,
    boundary_dissipation,
    energy,
    fit_decay,
    observability_report,
    spectral_abscissa,
)
from .errors import *  # noqa: F401,F403
from .grid import BoxGrid, build_grid, c_alpha, star_shaped_delta, tangential_decompose
from .materials import (
    AlphaExpression,
    ElasticityTensor,
    GeneralQ,
    MaterialSet,
    PiezoTensor,
    ScalarQ,
    SymTensor3,
    electric_displacement,
    piezo_adjoint_check,
    stress,
    validate_material,
)
from .operators import (
    DiscreteSystem,
    FieldState,
    apply_generator,
    assemble,
    energy_inner_product,
    green_identity_residuals,
)
from .resolvent import coercivity_estimate, dissipativity_check, solve_resolvent

__version__ = "0.1.0"
