import math

import numpy as np

from entrolab import dynamics, schrodinger as schro
from entrolab.dynamics import _mass_mask, coupled_stability_limit, coupled_step
from entrolab.fields import ScalarField, VectorField, axis_gradient, gradient
from entrolab.scenarios import resolve_dt, scenario_from_dict

cfg = {
    "name": "gauge-coupled",
    "space": {"dim": 1, "extent": 20.0, "points": 256},
    "params": {"eta": 1.0, "tau": 0.1, "masses": 1.0, "beta": 0.7},
    "initial": {"type": "gaussian", "center": -2.0, "width": 1.0, "momentum": 0.5},
    "potentials": {
        "V": {"type": "harmonic", "omega": 1.0},
        "A": {"type": "constant", "value": 0.4},
    },
    "run": {"engine": "coupled", "steps": 400, "snapshot_stride": 50},
}
sc = scenario_from_dict(cfg)
space = sc.space
beta = sc.params.beta
x = space.meshes[0]
chi = ScalarField(space, 0.8 * np.sin(2.0 * math.pi * x / 20.0))
grad_chi = gradient(chi)
A = sc.vector_potential
A_twin = VectorField(space, A.components + grad_chi.components)
dt = resolve_dt(sc)
print("dt =", dt)

base = sc.initial
twin = dynamics.ManifoldState(
    rho=base.rho, phi=ScalarField(space, base.phi.values + beta * chi.values), time=0.0
)

for step in range(1, 401):
    v_mid = sc.potential_at((step - 0.5) * dt)
    lim_b = coupled_stability_limit(base, sc.params, A, safety=1.0)
    lim_t = coupled_stability_limit(twin, sc.params, A_twin, safety=1.0)
    if lim_t < dt or lim_b < dt or step % 50 == 0:
        rho_gap = np.sqrt(np.sum((base.rho.values - twin.rho.values) ** 2) * space.cell_volume)
        print(f"step {step}: lim_b {lim_b:.3e} lim_t {lim_t:.3e} rho_gap {rho_gap:.3e}")
    if lim_t < dt:
        m = _mass_mask(twin.rho.values)
        v_t = (sc.params.eta / 1.0) * (
            axis_gradient(twin.phi, 0) - beta * A_twin.components[0]
        )
        v_b = (sc.params.eta / 1.0) * (
            axis_gradient(base.phi, 0) - beta * A.components[0]
        )
        vm = np.where(m, np.abs(v_t), 0.0)
        k = int(np.argmax(vm))
        print(f"  twin vmax {vm.max():.2f} at k={k} x={x[k]:.3f}")
        sl = slice(max(k - 4, 0), min(k + 5, 256))
        print("  rho_t:", np.array2string(twin.rho.values[sl], precision=2))
        print("  rho_b:", np.array2string(base.rho.values[sl], precision=2))
        print("  phi_t:", np.array2string(twin.phi.values[sl], precision=3))
        print("  phi_b+bchi:", np.array2string(
            base.phi.values[sl] + beta * chi.values[sl], precision=3))
        print("  mask_t:", m[sl].astype(int), " mask_b:", _mass_mask(base.rho.values)[sl].astype(int))
        print("  peak_t:", twin.rho.values.max(), "relmax at k:", twin.rho.values[k] / twin.rho.values.max())
        break
    base = coupled_step(base, sc.params, v_mid, dt, A)
    twin = coupled_step(twin, sc.params, v_mid, dt, A_twin)
