import math
import time

import numpy as np

from entrolab.dynamics import (
    ManifoldState,
    coupled_stability_limit,
    coupled_step,
    energy,
)
from entrolab.fields import (
    ConfigSpace,
    PhysicalParams,
    ScalarField,
    density_moments,
    normalize_density,
)
from entrolab.schrodinger import to_wavefunction, unitary_step


def l2(a, b, space):
    return math.sqrt(float(((a - b) ** 2).sum()) * space.cell_volume)


def make(extent, points, tau=0.1):
    params = PhysicalParams.from_masses([1.0], eta=1.0, osmotic_ratio=1.0, tau=tau)
    space = ConfigSpace(dim=1, extents=extent, points=points, sigma_sq=params.sigma_sq)
    return space, params


def gaussian(space, center, var):
    x = space.meshes[0]
    return normalize_density(ScalarField(space, np.exp(-((x - center) ** 2) / (2.0 * var))))


def run_coupled(state, params, V, T, frac, A=None):
    dt = frac * coupled_stability_limit(state, params, A)
    n = int(np.ceil(T / dt))
    h = T / n
    minlim = np.inf
    for _ in range(n):
        state = coupled_step(state, params, V, h, A)
        minlim = min(minlim, coupled_stability_limit(state, params, A, safety=1.0))
    return state, n, minlim


def run_cn(state, params, V, T, n):
    w = to_wavefunction(state)
    h = T / n
    for _ in range(n):
        w = unitary_step(w, params, V, h)
    return np.abs(w.psi.values) ** 2


# --- free packet, L=30, N=512, T=2
space, params = make(30.0, 512)
V0 = ScalarField(space, np.zeros(space.shape))
rho0 = gaussian(space, 0.0, 1.0)
st0 = ManifoldState(rho0, ScalarField(space, np.zeros(space.shape)), 0.0)
t0 = time.time()
fin, nsteps, minlim = run_coupled(st0, params, V0, 2.0, 0.45)
wall = time.time() - t0
x = space.meshes[0]
s2 = 1.0 + (2.0 / 2.0) ** 2
rho_exact = np.exp(-(x**2) / (2.0 * s2)) / math.sqrt(2.0 * math.pi * s2)
err_exact = l2(fin.rho.values, rho_exact, space)
rho_cn = run_cn(st0, params, V0, 2.0, 2000)
err_cn = l2(fin.rho.values, rho_cn, space)
_, var = density_moments(fin.rho)
print(f"free packet: L2 analytic {err_exact:.4e}  L2 CN {err_cn:.4e}  "
      f"var {var[0]:.5f}  steps {nsteps}  minlim {minlim:.3e}  wall {wall:.1f}s")

# --- coherent state, N=256 and N=512, T = 2 pi
for pts in (256, 512):
    space, params = make(12.0, pts)
    x = space.meshes[0]
    Vh = ScalarField(space, 0.5 * x**2)
    s2c = 0.5
    rho0 = gaussian(space, 1.0, s2c)
    st0 = ManifoldState(rho0, ScalarField(space, np.zeros(space.shape)), 0.0)
    T = 2.0 * math.pi
    t0 = time.time()
    fin, nsteps, minlim = run_coupled(st0, params, Vh, T, 0.40)
    wall = time.time() - t0
    rho_cn = run_cn(st0, params, Vh, T, 4000)
    err_cn = l2(fin.rho.values, rho_cn, space)
    rho_exact = np.exp(-((x - 1.0) ** 2) / (2.0 * s2c)) / math.sqrt(2.0 * math.pi * s2c)
    err_exact = l2(fin.rho.values, rho_exact, space)
    e0 = energy(st0, params, Vh)
    ef = energy(fin, params, Vh)
    drift = abs(ef.total - e0.total) / abs(e0.total)
    print(f"coherent N={pts}: L2 CN {err_cn:.4e}  L2 analytic {err_exact:.4e}  "
          f"E drift {drift:.2e}  steps {nsteps}  minlim {minlim:.3e}  wall {wall:.1f}s")

# --- oscillator ground state, N=512, T = 2 pi
space, params = make(12.0, 512)
x = space.meshes[0]
Vh = ScalarField(space, 0.5 * x**2)
rho0 = gaussian(space, 0.0, 0.5)
st0 = ManifoldState(rho0, ScalarField(space, np.zeros(space.shape)), 0.0)
t0 = time.time()
fin, nsteps, minlim = run_coupled(st0, params, Vh, 2.0 * math.pi, 0.45)
wall = time.time() - t0
e0 = energy(st0, params, Vh)
ef = energy(fin, params, Vh)
drift = abs(ef.total - e0.total) / abs(e0.total)
gap = abs(e0.total - 0.5) / 0.5
rho_drift = l2(fin.rho.values, st0.rho.values, space)
print(f"ground N=512: E0 {e0.total:.10f}  rel gap {gap:.2e}  drift {drift:.2e}  "
      f"rho drift {rho_drift:.2e}  steps {nsteps}  wall {wall:.1f}s")

# --- refinement pair: free packet T=0.5 at N=128 and N=256 (dt tied to dx)
errs = {}
for pts in (128, 256):
    space, params = make(30.0, pts)
    x = space.meshes[0]
    V0 = ScalarField(space, np.zeros(space.shape))
    rho0 = gaussian(space, 0.0, 1.0)
    st0 = ManifoldState(rho0, ScalarField(space, np.zeros(space.shape)), 0.0)
    fin, nsteps, _ = run_coupled(st0, params, V0, 0.5, 0.45)
    s2 = 1.0 + (0.5 / 2.0) ** 2
    rho_exact = np.exp(-(x**2) / (2.0 * s2)) / math.sqrt(2.0 * math.pi * s2)
    errs[pts] = l2(fin.rho.values, rho_exact, space)
    print(f"refine N={pts}: err {errs[pts]:.4e}  steps {nsteps}")
print(f"refinement ratio: {errs[128] / errs[256]:.2f}")
