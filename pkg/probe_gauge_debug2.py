import math

import numpy as np

from entrolab import dynamics
from entrolab.dynamics import _mass_mask, coupled_step
from entrolab.fields import ScalarField, VectorField, gradient
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

base = sc.initial
twin = dynamics.ManifoldState(
    rho=base.rho, phi=ScalarField(space, base.phi.values + beta * chi.values), time=0.0
)

for step in range(1, 401):
    v_mid = sc.potential_at((step - 0.5) * dt)
    base = coupled_step(base, sc.params, v_mid, dt, A)
    twin = coupled_step(twin, sc.params, v_mid, dt, A_twin)
    if step % 50 == 0 or step == 400:
        d = twin.rho.values - base.rho.values
        gap = np.sqrt(np.sum(d**2) * space.cell_volume)
        k = int(np.argmax(np.abs(d)))
        peak = base.rho.values.max()
        print(
            f"step {step}: rho_gap {gap:.3e}  worst k={k} x={x[k]:.2f} "
            f"|d| {abs(d[k]):.2e}  rho_b/peak {base.rho.values[k] / peak:.2e}"
        )

# where is the gap concentrated relative to the support mask?
m = _mass_mask(base.rho.values)
d = twin.rho.values - base.rho.values
in_sup = np.sqrt(np.sum(d[m] ** 2) * space.cell_volume)
out_sup = np.sqrt(np.sum(d[~m] ** 2) * space.cell_volume)
print(f"final: gap inside support {in_sup:.3e}  outside {out_sup:.3e}")
core = base.rho.values > 1e-3 * base.rho.values.max()
print(f"gap on cells above 1e-3 peak: {np.sqrt(np.sum(d[core] ** 2) * space.cell_volume):.3e}")
