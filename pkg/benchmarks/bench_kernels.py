"""Compare the numba kernels against the numpy fallback.

Each backend runs in its own interpreter because the choice is made at
import time from LATGAUSS_DISABLE_NUMBA.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, time
import numpy as np
from latgauss import kernels
from latgauss.harness import bench_instance, random_basis
from latgauss.combiner import PipelineConfig
from latgauss.dgs import DGSRequest, SamplerConfig, dgs_solve

def best(fn, repeat):
    fn()  # warm-up, includes compilation
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)

repeat = {repeat}
rng = np.random.default_rng(0)
centers = rng.normal(0.0, 50.0, 1 << 18)
uniforms = rng.random(1 << 18)
B = random_basis(6, 10, rng)
gs = B.gs
tau = rng.random(6) * 3
r2 = float(gs.norms2.sum())
Bb, tb, sb, M = bench_instance(7, 0)
req, cfg = DGSRequest(Bb, tb, sb), PipelineConfig(ell=2, kappa=4.0)

res = {{
    "backend": kernels.BACKEND,
    "inverse_cdf_1d[2^18, s=3]": best(lambda: kernels.inverse_cdf_1d(centers, 3.0, uniforms, 31.0), repeat),
    "enum_points[n=6]": best(lambda: kernels.enum_points(gs.mu, gs.norms2, tau, r2), repeat),
    "enum_closest[n=6]": best(lambda: kernels.enum_closest(gs.mu, gs.norms2, tau, r2), repeat),
    "dgs_solve[n=7]": best(lambda: dgs_solve(req, cfg, M_override=M, rng=np.random.default_rng(1), sampler=SamplerConfig()), repeat),
}}
print(json.dumps(res))
"""


def run(disable: bool, repeat: int) -> dict:
    env = dict(os.environ, LATGAUSS_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run(
        [sys.executable, "-c", WORKLOAD.format(repeat=repeat)],
        env=env,
        check=True,
        capture_output=True,
        text=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    fast = run(False, args.repeat)
    slow = run(True, args.repeat)
    print(f"{'kernel':28s} {fast['backend']:>10s} {slow['backend']:>10s} {'speedup':>8s}")
    for key in fast:
        if key == "backend":
            continue
        a, b = fast[key], slow[key]
        print(f"{key:28s} {a:10.4f} {b:10.4f} {b / a:8.1f}x")


if __name__ == "__main__":
    main()
