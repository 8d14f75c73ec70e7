"""Exact acceptance-protocol dry run: warp 0.04, all 10 seeds, K5 + K1,
plus a convergence diagnostic on any heavy-tail case."""
import json
import time

import numpy as np

from lumenreg.bvh import build_accel
from lumenreg.cmaes import CmaesConfig
from lumenreg.registration import register, registration_error, session_from_case
from lumenreg.shapes import make_bent_tube
from lumenreg.synthetic import generate_synthetic_case

CORRUPT = dict(depth_noise_sigma=0.5, scale_jitter=0.10, warp_amplitude=0.04)
accel = build_accel(make_bent_tube())
results = []

def run(tag, case, gens=35):
    ses = session_from_case(case, accel, optimizer=CmaesConfig(
        population=100, sigma0=0.1, max_generations=gens,
        stagnation_tol=1e-9, seed=case.seed + 1000))
    t0 = time.time()
    res = register(ses)
    err = registration_error(case.t_gt, res.t_final)
    rec = dict(tag=tag, seed=case.seed, gens=gens, secs=round(time.time() - t0, 1),
               t_mm=round(err.translation_mm, 4), r_deg=round(err.rotation_deg, 4))
    results.append(rec)
    print(json.dumps(rec), flush=True)
    return err

for seed in range(10):
    run("k5", generate_synthetic_case("complex", seed, accel=accel, **CORRUPT))
    run("k1", generate_synthetic_case("complex", seed, accel=accel,
                                      keyframes=1, **CORRUPT))

def vals(tag, key):
    return [r[key] for r in results if r["tag"] == tag]

k5t, k1t = np.mean(vals("k5", "t_mm")), np.mean(vals("k1", "t_mm"))
k5r, k1r = np.mean(vals("k5", "r_deg")), np.mean(vals("k1", "r_deg"))
print(f"k5 median: {np.median(vals('k5','t_mm')):.4f} mm {np.median(vals('k5','r_deg')):.4f} deg")
print(f"means k5 {k5t:.4f}/{k5r:.4f} vs k1 {k1t:.4f}/{k1r:.4f}")
print(f"improvement t {100*(1-k5t/k1t):.1f}% r {100*(1-k5r/k1r):.1f}%")
with open("scripts/calibration4_results.json", "w") as fh:
    json.dump(results, fh, indent=1)
print("DONE")
