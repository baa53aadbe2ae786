"""Time the hot kernels compiled with numba against the plain-Python fallback.

Each backend runs in its own subprocess (the switch is read at import time
from BOLTZGEN_DISABLE_JIT). Compilation is excluded by a warm-up call.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]
"""

import argparse
import json
import os
import subprocess
import sys
import time

CORPUS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests", "corpus")

WORKER = r"""
import json, sys, time
from boltzgen import _jit, parse_file
from boltzgen.controller import sample_approx, sample_exact
from boltzgen.oracle import evaluate, find_radius
from boltzgen.rng import UniformStream
from boltzgen.sampler import compile

corpus, repeat, scale = sys.argv[1], int(sys.argv[2]), float(sys.argv[3])


def spec(name):
    return parse_file(f"{corpus}/{name}.bg")


def best(fn):
    fn()  # warm-up, compiles under numba
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


rooted, ptrees, tan, parts = spec("rooted"), spec("ptrees"), spec("tan"), spec("partitions")
s_pt = compile(ptrees, 0.2499)
s_tan = compile(tan, 1.5)
s_parts = compile(parts, 0.9)
n_small = max(1, int(20 * scale))

cases = {
    "oracle: rooted trees at 0.33 (lattice Newton)": lambda: evaluate(rooted, 0.33),
    "oracle: tan at 1.5 (adaptive RK4)": lambda: evaluate(tan, 1.5),
    "radius: plane trees (bisection)": lambda: find_radius.__wrapped__(ptrees, "P"),
    "approx: plane trees n=1000, eps=0.1": lambda: [sample_approx(s_pt, "P", 1000, 0.1, UniformStream(i))
                                                    for i in range(n_small)],
    "exact: plane trees n=100": lambda: [sample_exact(s_pt, "P", 100, UniformStream(i)) for i in range(n_small)],
    "exact: decreasing trees n=31": lambda: [sample_exact(s_tan, "T", 31, UniformStream(i))
                                             for i in range(n_small)],
    "exact: partitions n=40": lambda: [sample_exact(s_parts, "Part", 40, UniformStream(i))
                                       for i in range(n_small)],
}
print(json.dumps({"backend": _jit.backend(), "times": {k: best(f) for k, f in cases.items()}}))
"""


def run(disable, repeat, scale):
    env = dict(os.environ, BOLTZGEN_DISABLE_JIT="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, CORPUS, str(repeat), str(scale)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="fewer draws per case")
    args = ap.parse_args()
    scale = 0.25 if args.quick else 1.0
    t0 = time.perf_counter()
    jit = run(False, args.repeat, scale)
    plain = run(True, args.repeat, scale)
    width = max(len(k) for k in jit["times"])
    print(f"{'case':<{width}}  {jit['backend']:>12}  {plain['backend']:>12}  speedup")
    for k, tj in jit["times"].items():
        tp = plain["times"][k]
        print(f"{k:<{width}}  {tj:12.4f}  {tp:12.4f}  {tp / tj:7.1f}x")
    print(f"(best of {args.repeat}; total wall time {time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
