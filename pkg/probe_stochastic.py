import math
import time

import numpy as np

from entrolab import ensemble as ens, fokker_planck as fp
from entrolab.fields import (
    ConfigSpace,
    PhysicalParams,
    ScalarField,
    axis_gradient,
    clamped_log,
    density_moments,
    l1_distance,
    normalize_density,
)

# --- criterion 2: pure diffusion variance growth (eta/m) t within 1% over 10x
params = PhysicalParams.from_masses([1.0], eta=1.0, osmotic_ratio=1.0, tau=0.1)
space = ConfigSpace(dim=1, extents=8.0, points=512, sigma_sq=params.sigma_sq)
x = space.meshes[0]
rho = normalize_density(ScalarField(space, np.exp(-(x**2) / (2.0 * 0.05))))
S0 = ScalarField(space, np.zeros(space.shape))
limit = fp.fp_stability_limit(S0, params, None, rho)
dt = 0.0001
assert dt < limit, (dt, limit)
_, var0 = density_moments(rho)
t, worst = 0.0, 0.0
checks = []
target_times = [0.01 * (10 ** (k / 4.0)) for k in range(5)]  # 0.01 .. 0.1
for t_target in target_times:
    while t < t_target - 1e-12:
        rho = fp.fp_step(rho, S0, params, dt)
        t += dt
    _, var = density_moments(rho)
    growth = (var[0] - var0[0]) / t
    gap = abs(growth - 1.0)
    worst = max(worst, gap)
    checks.append((t, growth))
print("criterion 2 variance growth:", [f"t={t:.4f} rate={g:.6f}" for t, g in checks])
print(f"criterion 2 worst rel gap: {worst:.2e}  (dt {dt}, limit {limit:.2e})")

# --- criterion 3: 1e5 walkers vs FP after 500 steps, L1 <= 1.5x multinomial bound
params3 = PhysicalParams.from_masses([1.0], eta=1.0, osmotic_ratio=1.0, tau=0.1)
space3 = ConfigSpace(dim=1, extents=20.0, points=100, sigma_sq=params3.sigma_sq)
x3 = space3.meshes[0]
S3 = ScalarField(space3, 0.3 * np.sin(2.0 * math.pi * x3 / 20.0))
rho3 = normalize_density(ScalarField(space3, np.exp(-(x3**2) / 2.0)))
limit3 = fp.fp_stability_limit(S3, params3, None, rho3)
dt3 = 0.4 * limit3
t0 = time.time()
cloud = ens.Ensemble.from_density(rho3, 100_000, dt3, seed=42)
rho_fp = rho3
for _ in range(500):
    cloud = ens.step_ensemble(cloud, S3, params3)
    rho_fp = fp.fp_step(rho_fp, S3, params3, dt3)
gap = l1_distance(ens.estimate_density(cloud), rho_fp)
bound = ens.sampling_l1_bound(rho_fp, cloud.walkers)
print(f"criterion 3: L1 {gap:.4f}  bound {bound:.4f}  ratio {gap / bound:.3f}  "
      f"dt {dt3:.4f}  wall {time.time() - t0:.1f}s")

# --- criterion 4: backward drift identity within 3 stderr in >= 95% of cells
params4 = PhysicalParams.from_masses([1.0], eta=1.0, osmotic_ratio=1.0, tau=0.1)
space4 = ConfigSpace(dim=1, extents=12.0, points=64, sigma_sq=params4.sigma_sq)
x4 = space4.meshes[0]
S4 = ScalarField(space4, 0.25 * np.sin(2.0 * math.pi * x4 / 12.0))
rho4 = normalize_density(ScalarField(space4, np.exp(-(x4**2) / 2.0)))
dt4 = 0.02
before = ens.Ensemble.from_density(rho4, 200_000, dt4, seed=3)
after = ens.step_ensemble(before, S4, params4)
est = ens.empirical_backward_drift(before, after)
b = fp.drift_velocity(S4, params4)
dlog = axis_gradient(ScalarField(space4, clamped_log(rho4.values)), 0)
b_star = b.components[0] - params4.eta_over_m[0] * dlog
ok_cells = est.reliable_cells(200)
resid = np.abs(est.drift.components[0] - b_star)
within = resid[ok_cells] <= 3.0 * est.stderr[0][ok_cells]
frac = within.mean()
print(f"criterion 4: {ok_cells.sum()} cells >=200 samples, within 3 stderr: "
      f"{frac:.3f}  max resid/stderr {np.max(resid[ok_cells] / est.stderr[0][ok_cells]):.2f}")
