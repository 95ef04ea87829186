"""Compare the compiled and pure-Python rollout kernels.

    python3 benchmarks/bench_kernels.py --rollouts 500
"""

import argparse
import time

import numpy as np

from parapet import kernels
from parapet.adversary import Disturbance
from parapet.protection import TrivialProtection
from parapet.scenario import ScenarioConfig, run_scenario


def bench(advance, n, x, cfg):
    t0 = time.perf_counter()
    digests = []
    for s in range(n):
        r = run_scenario(cfg, x, TrivialProtection(), s, advance=advance)
        digests.append(r.observations.digest())
    return time.perf_counter() - t0, digests


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rollouts", type=int, default=500)
    args = ap.parse_args()
    cfg = ScenarioConfig()
    # a weak attack keeps the vehicle moving through most of the horizon
    x = Disturbance(0.004, 0.2, 10.0, -15.0, 20.0)
    if kernels.compiled_advance is None:
        print("compiled kernel not built; only the Python backend is available")
    t_py, d_py = bench(kernels.python_advance, args.rollouts, x, cfg)
    print(f"python  {t_py:8.3f} s  {1e3 * t_py / args.rollouts:7.3f} ms/rollout")
    if kernels.compiled_advance is not None:
        t_c, d_c = bench(kernels.compiled_advance, args.rollouts, x, cfg)
        print(f"cython  {t_c:8.3f} s  {1e3 * t_c / args.rollouts:7.3f} ms/rollout")
        print(f"speedup {t_py / t_c:.1f}x, identical observations: {d_py == d_c}")
    steps = np.mean([len(run_scenario(cfg, x, TrivialProtection(), s).states) for s in range(20)])
    print(f"mean rollout length {steps:.0f} steps")


if __name__ == "__main__":
    main()
