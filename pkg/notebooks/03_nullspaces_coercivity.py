# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Null spaces and coercivity
#
# Without any boundary data, a nonlocal operator annihilates functions
# that are constant on each chain of cells linked within the horizon.
# Elastic bonds annihilate rigid motions instead.  Once exterior data is
# switched on, coercivity returns exactly when the geometry is admissible.

# %%
import numpy as np

from lnlcoupling import (KernelSpec, Label, ModelConfig, SurfaceKernelSpec, assemble_system, build_grid, check_admissibility,
                         coercivity_estimate, delta_connected_components, nullspace_characterization,
                         rigid_motion_basis)
from lnlcoupling.geometry import default_pad, halfspace

# %% [markdown]
# ## Scalar: one constant per component
#
# An exterior slab of growing width cuts a nonlocal strip.  While the
# slab is narrower than the horizon the two halves still interact.

# %%
n, rho = 80, 0.05
h = 1 / n
centers = (np.arange(n) + 0.5) * h
for width in (0.0, 0.025, 0.05, 0.0625):
    labels = np.full(n, int(Label.NONLOCAL), dtype=np.int8)
    labels[np.abs(centers - 0.5) < width / 2] = int(Label.EXTERIOR)
    grid = build_grid(1, [(0.0, 1.0)], h, labels)
    model = ModelConfig("scalar_source", grid, kernel=KernelSpec("top_hat", rho), exterior=False, dirichlet=False)
    system = assemble_system(model)
    dim, _ = nullspace_characterization(system.A, system.M)
    ncomp = len(delta_connected_components(grid.cells_with(Label.NONLOCAL), grid, rho))
    print(f"slab width {width:.4f}: null space dim {dim}, horizon-connected pieces {ncomp}")

# %% [markdown]
# ## Elasticity: rigid motions
#
# The flux model couples the two halves only through the surface kernel.
# Without it each half keeps its own three rigid motions.

# %%
rho, h = 0.25, 1 / 10
grid = build_grid(2, [(0.0, 1.0)] * 2, h, halfspace(0, 0.5))
cases = [("elastic_source", None), ("elastic_flux", SurfaceKernelSpec("top_hat", rho)), ("elastic_flux", None)]
for kind, gk in cases:
    system = assemble_system(ModelConfig(kind, grid, kernel=KernelSpec("top_hat", rho), gkernel=gk,
                                         exterior=False, dirichlet=False))
    R = rigid_motion_basis(system.dofmap)
    dim, matched = nullspace_characterization(system.A, system.M, R)
    label = kind + ("" if kind == "elastic_source" else (" + G" if gk else " no G"))
    print(f"{label:20s} |A r| max {np.abs(system.A @ R.T).max():.1e}, null space dim {dim}, "
          f"equals rigid motions {matched}")

# %% [markdown]
# ## Coercivity against the gap
#
# The local region sits on the left; an exterior gap separates it from
# the nonlocal part, and interactions with the exterior are dropped so the
# nonlocal part only sees the local one.  The smallest eigenvalue stays
# positive while the gap is shorter than the horizon and collapses after.
# Admissibility asks for links shorter than half the horizon, so it fails
# earlier: it is a sufficient condition, not a necessary one.

# %%
rho, h = 0.1, 0.0125
for gap in (0.0, 0.025, 0.05, 0.075, 0.0875, 0.1, 0.125):
    grid = build_grid(1, [(0.0, 1.0)], h, halfspace(0, 0.3, gap=gap), pad=default_pad(rho, h))
    model = ModelConfig("scalar_source", grid, kernel=KernelSpec("top_hat", rho), exterior=False)
    adm = check_admissibility(grid, model.gamma, model.kernel.delta, model.kind.admissibility_mode)
    lam = coercivity_estimate(assemble_system(model)).lambda_min
    print(f"gap {gap:.4f}  admissible={str(adm.ok):5s}  lambda_min={lam:.3e}")
