"""Time the numba kernels against their numpy twins.

Each backend runs in its own interpreter so that ``SYMLAB_NO_NUMBA`` takes
effect at import time. Usage: ``python3 benchmarks/bench_kernels.py [--n 96]``.
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from symlab import kernels

n, reps = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
u = rng.standard_normal((n, n, n))
pts = rng.uniform(0, (n - 1) * 0.1, size=(200_000, 3))
flat = rng.standard_normal(n ** 3)
cases = {
    "lap7": lambda: kernels.lap7(u, 0.1),
    "lap4": lambda: kernels.lap4(u, 0.1),
    "trilinear": lambda: kernels.trilinear(u, (0.0, 0.0, 0.0), 0.1, pts),
    "compensated_sum": lambda: kernels.compensated_sum(flat),
}
out = {"numba": kernels.USE_NUMBA}
for name, fn in cases.items():
    fn()                      # warm-up and JIT compilation
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    out[name] = (time.perf_counter() - t0) / reps
print(json.dumps(out))
"""


def run(no_numba, n, reps):
    env = dict(os.environ)
    if no_numba:
        env["SYMLAB_NO_NUMBA"] = "1"
    else:
        env.pop("SYMLAB_NO_NUMBA", None)
    res = subprocess.run([sys.executable, "-c", WORKER, str(n), str(reps)], env=env, capture_output=True,
                         text=True, check=True)
    return json.loads(res.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=96, help="grid points per axis")
    ap.add_argument("--reps", type=int, default=5)
    a = ap.parse_args(argv)
    fast = run(False, a.n, a.reps)
    slow = run(True, a.n, a.reps)
    print(f"grid {a.n}^3, {a.reps} repetitions, numba active: {fast['numba']}")
    print(f"{'kernel':<18}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for k in ("lap7", "lap4", "trilinear", "compensated_sum"):
        print(f"{k:<18}{fast[k]:>12.4g}{slow[k]:>12.4g}{slow[k] / fast[k]:>10.2f}")


if __name__ == "__main__":
    main()
