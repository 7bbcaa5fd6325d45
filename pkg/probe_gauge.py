import time

from entrolab.scenarios import gauge_check, scenario_from_dict


def cfg(engine, steps):
    return {
        "name": f"gauge-{engine}",
        "space": {"dim": 1, "extent": 20.0, "points": 256},
        "params": {"eta": 1.0, "tau": 0.1, "masses": 1.0, "beta": 0.7},
        "initial": {"type": "gaussian", "center": -2.0, "width": 1.0, "momentum": 0.5},
        "potentials": {
            "V": {"type": "harmonic", "omega": 1.0},
            "A": {"type": "constant", "value": 0.4},
        },
        "run": {"engine": engine, "steps": steps, "snapshot_stride": 50},
    }


for engine, steps in (("coupled", 400), ("schrodinger", 400)):
    sc = scenario_from_dict(cfg(engine, steps))
    t0 = time.time()
    rep = gauge_check(sc, chi_amplitude=0.8, chi_mode=1, outdir=f"/tmp/gauge_{engine}")
    print(
        f"{engine}: rho_gap {rep['rho_gap_max']:.3e}  phase_gap {rep['phase_gap_max']:.3e}"
        f"  dt {rep['dt']:.3e}  passed {rep['passed']}  wall {time.time() - t0:.1f}s"
    )
