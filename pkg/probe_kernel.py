import math

import numpy as np

from entrolab.fields import ConfigSpace, PhysicalParams, ScalarField
from entrolab.kernel import (
    StepConstraints,
    build_exact_kernel,
    gaussian_step_moments,
    kernel_mean_displacement,
    kernel_step_sq,
)

params = PhysicalParams.from_masses([1.0], eta=1.0, osmotic_ratio=1.0, tau=0.5)
space = ConfigSpace(dim=1, extents=12.0, points=512, sigma_sq=params.sigma_sq)
x = space.meshes[0]
S = ScalarField(space, 0.4 * np.sin(2.0 * math.pi * x / 12.0))
source = (200,)

rows = []
for alpha in (8.0, 16.0, 32.0, 64.0):
    dt = params.tau / alpha
    kern = build_exact_kernel(S, source, StepConstraints(alpha=alpha))
    mean = kernel_mean_displacement(kern)
    drift, cov = gaussian_step_moments(S, params, dt)
    mean_err = abs(mean[0] - drift.components[0][source]) / dt
    var = kernel_step_sq(kern) * params.sigma_sq[0] - mean[0] ** 2
    var_err = abs(var - cov[0]) / dt
    rows.append((alpha, dt, mean_err, var_err))
    print(f"alpha {alpha:5.1f}  dt {dt:.5f}  mean gap/dt {mean_err:.6e}  var gap/dt {var_err:.6e}")

for i in range(1, len(rows)):
    print(
        f"alpha {rows[i][0]:.0f}: mean ratio {rows[i - 1][2] / rows[i][2]:.2f}  "
        f"var ratio {rows[i - 1][3] / rows[i][3]:.2f}  (>= 2 means at least linear)"
    )
