"""Development-time study of registration accuracy vs settings.

Not part of the package; results inform acceptance-suite settings.
"""
import json
import sys
import time

import numpy as np

from lumenreg.bvh import build_accel
from lumenreg.cmaes import CmaesConfig
from lumenreg.registration import register, registration_error, session_from_case
from lumenreg.shapes import make_bent_tube
from lumenreg.synthetic import generate_synthetic_case

SEEDS = [0, 1, 2]
GENS = 30

accel = build_accel(make_bent_tube())
results = []

def run(tag, case, domain, metric, gens=GENS, seed_off=100):
    ses = session_from_case(case, accel, optimizer=CmaesConfig(
        population=100, sigma0=0.1, max_generations=gens,
        stagnation_tol=1e-10, seed=case.seed + seed_off))
    t0 = time.time()
    res = register(ses, domain=domain, metric=metric)
    err = registration_error(case.t_gt, res.t_final)
    rec = dict(tag=tag, seed=case.seed, kind=case.kind, domain=domain, metric=metric,
               gens=res.trace.generations, secs=round(time.time() - t0, 1),
               t_mm=err.translation_mm, r_deg=err.rotation_deg,
               loss=res.final_loss)
    results.append(rec)
    print(json.dumps(rec), flush=True)

for seed in SEEDS:
    clean = generate_synthetic_case("complex", seed=seed, accel=accel)
    run("k5", clean, "edge", "proposed")
    one = generate_synthetic_case("complex", seed=seed, accel=accel, keyframes=1)
    run("k1", one, "edge", "proposed")

for seed in SEEDS:
    jit = generate_synthetic_case("complex", seed=seed, accel=accel, scale_jitter=0.10)
    run("jit-proposed", jit, "edge", "proposed")
    run("jit-edge-l1", jit, "edge", "l1")
    run("jit-depth-l1", jit, "depth", "l1")
    run("jit-depth-gc", jit, "depth", "gc")

with open("scripts/calibration_results.json", "w") as fh:
    json.dump(results, fh, indent=1)
print("DONE")
