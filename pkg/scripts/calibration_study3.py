"""K-trend and ablation under frame-level systematic target distortion."""
import json
import sys
import time

import numpy as np

from lumenreg.bvh import build_accel
from lumenreg.cmaes import CmaesConfig
from lumenreg.registration import register, registration_error, session_from_case
from lumenreg.shapes import make_bent_tube
from lumenreg.synthetic import generate_synthetic_case

GENS = 35
CORRUPT = dict(depth_noise_sigma=0.5, scale_jitter=0.10, warp_amplitude=0.06)

accel = build_accel(make_bent_tube())
results = []

def run(tag, case, domain="edge", metric="proposed"):
    ses = session_from_case(case, accel, optimizer=CmaesConfig(
        population=100, sigma0=0.1, max_generations=GENS,
        stagnation_tol=1e-10, seed=case.seed + 1000))
    t0 = time.time()
    res = register(ses, domain=domain, metric=metric)
    err = registration_error(case.t_gt, res.t_final)
    rec = dict(tag=tag, seed=case.seed, secs=round(time.time() - t0, 1),
               t_mm=round(err.translation_mm, 4), r_deg=round(err.rotation_deg, 4))
    results.append(rec)
    print(json.dumps(rec), flush=True)

seeds = list(range(6))
for seed in seeds:
    c5 = generate_synthetic_case("complex", seed, accel=accel, **CORRUPT)
    run("k5", c5)
    c1 = generate_synthetic_case("complex", seed, accel=accel, keyframes=1, **CORRUPT)
    run("k1", c1)

# ablation sanity at two seeds under the same corruption
for seed in (0, 1):
    c5 = generate_synthetic_case("complex", seed, accel=accel, **CORRUPT)
    run("edge-l1", c5, "edge", "l1")
    run("depth-l1", c5, "depth", "l1")
    run("depth-gc", c5, "depth", "gc")

def agg(tag, key):
    vals = [r[key] for r in results if r["tag"] == tag]
    return float(np.mean(vals))

for tag in ("k5", "k1", "edge-l1", "depth-l1", "depth-gc"):
    if any(r["tag"] == tag for r in results):
        print(f"{tag}: mean {agg(tag, 't_mm'):.4f} mm / {agg(tag, 'r_deg'):.4f} deg")
k5t, k1t = agg("k5", "t_mm"), agg("k1", "t_mm")
k5r, k1r = agg("k5", "r_deg"), agg("k1", "r_deg")
print(f"improvement: t {100*(1-k5t/k1t):.1f}%  r {100*(1-k5r/k1r):.1f}%")
with open("scripts/calibration3_results.json", "w") as fh:
    json.dump(results, fh, indent=1)
print("DONE")
