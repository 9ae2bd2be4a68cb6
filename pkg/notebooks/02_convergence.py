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
# # Convergence under mesh refinement
#
# Two studies.  First the purely local limit, where the discrete
# solution of -u'' = pi^2 sin(pi x) must approach sin(pi x) at second
# order.  Then the flux model, where the discrete balance between the
# local normal derivative and the surface coupling should shrink as the
# grid is refined.

# %%
import numpy as np

from lnlcoupling import (KernelSpec, Label, ModelConfig, SurfaceKernelSpec, assemble_system, build_grid,
                         el_residual, minimize_quadratic)
from lnlcoupling.geometry import default_pad, halfspace
from lnlcoupling.kernels import GaussianBump, SeparableSine

# %% [markdown]
# ## Local limit

# %%
source = SeparableSine(np.pi ** 2, (1,))
errors = []
hs = [1 / 8, 1 / 16, 1 / 32, 1 / 64, 1 / 128]
for h in hs:
    grid = build_grid(1, [(0.0, 1.0)], h, lambda x: np.full(len(x), int(Label.LOCAL)))
    system = assemble_system(ModelConfig("scalar_source", grid, source=source))
    field, _ = minimize_quadratic(system, tol=1e-12)
    x = system.dofmap.node_coords[: system.n, 0]
    errors.append(np.abs(field.values - np.sin(np.pi * x)).max())

for k, (h, e) in enumerate(zip(hs, errors)):
    rate = "" if k == 0 else f"{np.log2(errors[k - 1] / e):.3f}"
    print(f"h=1/{round(1 / h):<4d} error={e:.3e}  2h^2={2 * h * h:.3e}  rate={rate}")

# %% [markdown]
# ## Interface flux balance
#
# Near the corners where the interface meets the outer boundary the
# solution is singular, so in two dimensions only facets at least 0.25
# away from the boundary along the interface are measured.

# %%
def flux_level(dim, h, margin):
    rho = 0.25
    grid = build_grid(dim, [(0.0, 1.0)] * dim, h, halfspace(0, 0.5), pad=default_pad(rho, h))
    model = ModelConfig("scalar_flux", grid, kernel=KernelSpec("top_hat", rho),
                        gkernel=SurfaceKernelSpec("top_hat", rho), source=GaussianBump(1.0, (0.5,) * dim, 0.3))
    system = assemble_system(model)
    field, _ = minimize_quadratic(system, tol=1e-10)
    return el_residual(model, system, field.values, margin=margin)["flux"]["max"]


for dim, hs, margin in [(1, [1 / 20, 1 / 40, 1 / 80, 1 / 160], 0.0), (2, [1 / 16, 1 / 32, 1 / 64], 0.25)]:
    levels = [flux_level(dim, h, margin) for h in hs]
    ratios = [a / b for a, b in zip(levels[:-1], levels[1:])]
    print(f"dim={dim}: levels {[f'{v:.2e}' for v in levels]}  halving ratios {np.round(ratios, 2).tolist()}")
