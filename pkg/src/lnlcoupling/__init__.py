"""Variational solvers for coupled local/nonlocal energies on Cartesian grids."""

from .dofs import DofMap, Field, QuadraticSystem, build_dofmap
from .elastic_models import ElasticParams, assemble_bond, assemble_bond_gamma, assemble_elastic_local, rigid_motion_basis
from .geometry import (AdmissibilityReport, FacetSet, GridDomain, Label, Mode, build_grid,
                       check_admissibility, check_generalized_admissibility, delta_connected_components,
                       extract_gamma)
from .kernels import (KernelKind, KernelSpec, SurfaceKernelKind, SurfaceKernelSpec, check_G1, check_J1,
                      eval_kernel, eval_surface_kernel, exterior_mass)
from .models import ModelConfig, ModelKind, assemble_system, discrete_energy
from .scalar_models import (NonlocalMode, apply_exterior_shift, assemble_gamma_coupling, assemble_load,
                            assemble_local_stiffness, assemble_nonlocal)
from .solvers import (CoercivityReport, ConvergenceError, SolveReport, coercivity_estimate, minimize_nonlinear,
                      minimize_quadratic)
from .verify import el_residual, gradient_check, nullspace_characterization

__all__ = [
    "AdmissibilityReport", "CoercivityReport", "ConvergenceError", "DofMap", "ElasticParams", "FacetSet",
    "Field", "GridDomain", "KernelKind", "KernelSpec", "Label", "Mode", "ModelConfig", "ModelKind",
    "NonlocalMode", "QuadraticSystem", "SolveReport", "SurfaceKernelKind", "SurfaceKernelSpec",
    "apply_exterior_shift", "assemble_bond", "assemble_bond_gamma", "assemble_elastic_local",
    "assemble_gamma_coupling", "assemble_load", "assemble_local_stiffness", "assemble_nonlocal",
    "assemble_system", "build_dofmap", "build_grid", "check_G1", "check_J1", "check_admissibility",
    "check_generalized_admissibility", "coercivity_estimate", "delta_connected_components",
    "discrete_energy", "el_residual", "eval_kernel", "eval_surface_kernel", "exterior_mass",
    "extract_gamma", "gradient_check", "minimize_nonlinear", "minimize_quadratic",
    "nullspace_characterization", "rigid_motion_basis",
]
