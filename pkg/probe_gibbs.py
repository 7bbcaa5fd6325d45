import time

from entrolab.scenarios import maxent_audit, scenario_from_dict


def cfg(name, amplitude, mode, dt):
    return {
        "name": name,
        "space": {"dim": 1, "extent": 10.0, "points": 128},
        "params": {"eta": 1.0, "tau": 0.1, "masses": 1.0},
        "entropy": {"type": "sine", "amplitude": amplitude, "mode": mode},
        "initial": {"type": "uniform"},
        "potentials": {},
        "run": {"engine": "fokker-planck", "dt": dt, "steps": 10, "seed": 11},
    }


for name, amp, mode, dt in (
    ("gibbs-a", 0.4, 1, 0.1 / 40.0),
    ("gibbs-b", 0.2, 2, 0.1 / 150.0),
):
    sc = scenario_from_dict(cfg(name, amp, mode, dt))
    t0 = time.time()
    rep = maxent_audit(sc, trials=1000, tolerance=1e-9)
    print(
        f"{name}: alpha {rep['alpha']:.1f}  max_gap {rep['max_gap']:.3e}  "
        f"skipped {rep['skipped']}  passed {rep['passed']}  wall {time.time() - t0:.1f}s"
    )
