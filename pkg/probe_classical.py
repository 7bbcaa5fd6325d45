import json
import time

from entrolab.scenarios import classical_limit, scenario_from_dict

cfg = {
    "name": "classical-sweep",
    "space": {"dim": 1, "extent": 20.0, "points": 256},
    "params": {"eta": 1.0, "tau": 0.1, "masses": 1.0},
    "initial": {"type": "gaussian", "center": 0.0, "width": 1.0, "momentum": 0.3},
    "potentials": {"V": {"type": "harmonic", "omega": 1.0}},
    "run": {"engine": "coupled", "steps": 10, "walkers": 200000, "seed": 7},
}

sc = scenario_from_dict(cfg)
t0 = time.time()
rep = classical_limit(sc, eta_scales=(1.0, 0.5, 0.25))
print("eta sweep:", json.dumps(rep["checks"], indent=1))
print("residuals:", ["%.6e" % r for r in rep["residuals"]])
print("variances:", [["%.6e" % v for v in row] for row in rep["variances"]])
print("wall %.1fs" % (time.time() - t0))

t0 = time.time()
rep2 = classical_limit(sc, mu_scales=(1.0, 0.5, 0.25, 0.125))
print("mu sweep:", json.dumps(rep2["checks"], indent=1))
print("residuals:", ["%.6e" % r for r in rep2["residuals"]])
print("wall %.1fs" % (time.time() - t0))
