"""Definitive settings study: GAN-emulating target corruption
(scale jitter 0.10 + depth noise 0.5 mm), K-trend and ablation arms."""
import json
import time

import numpy as np

from lumenreg.bvh import build_accel
from lumenreg.cmaes import CmaesConfig
from lumenreg.registration import register, registration_error, session_from_case
from lumenreg.shapes import make_bent_tube
from lumenreg.synthetic import generate_synthetic_case

SEEDS = [0, 1, 2, 3, 4]
GENS = 35
NOISE = dict(depth_noise_sigma=0.5, scale_jitter=0.10)

accel = build_accel(make_bent_tube())
results = []

def run(tag, case, domain, metric):
    ses = session_from_case(case, accel, optimizer=CmaesConfig(
        population=100, sigma0=0.1, max_generations=GENS,
        stagnation_tol=1e-10, seed=case.seed + 1000))
    t0 = time.time()
    res = register(ses, domain=domain, metric=metric)
    err = registration_error(case.t_gt, res.t_final)
    rec = dict(tag=tag, seed=case.seed, gens=res.trace.generations,
               secs=round(time.time() - t0, 1),
               t_mm=round(err.translation_mm, 4), r_deg=round(err.rotation_deg, 4))
    results.append(rec)
    print(json.dumps(rec), flush=True)

for seed in SEEDS:
    c5 = generate_synthetic_case("complex", seed, accel=accel, **NOISE)
    run("k5", c5, "edge", "proposed")
    c1 = generate_synthetic_case("complex", seed, accel=accel, keyframes=1, **NOISE)
    run("k1", c1, "edge", "proposed")
    run("edge-l1", c5, "edge", "l1")
    run("depth-l1", c5, "depth", "l1")
    run("depth-gc", c5, "depth", "gc")

with open("scripts/calibration2_results.json", "w") as fh:
    json.dump(results, fh, indent=1)

def agg(tag, key):
    vals = [r[key] for r in results if r["tag"] == tag]
    return float(np.mean(vals)), float(np.median(vals))

for tag in ("k5", "k1", "edge-l1", "depth-l1", "depth-gc"):
    mt, medt = agg(tag, "t_mm")
    mr, medr = agg(tag, "r_deg")
    print(f"{tag}: mean {mt:.4f} mm / {mr:.4f} deg; median {medt:.4f} / {medr:.4f}")
print("DONE")
