"""Compare the compiled switching kernel against the pure-Python fallback.

Runs the same regulated rectifier-electrolyzer case on both backends and
reports wall time, fine-step throughput, and the speedup ratio.  The two
trajectories are also checked against each other so the benchmark doubles
as a backend-equivalence smoke test.

Usage:  python3 benchmarks/bench_switching.py [t_end_seconds]
"""
import math
import sys
import time

import numpy as np

from thyrsim.switching import SwitchingParams, make_kernel, run_switching


def params():
    return SwitchingParams(
        v_m=120.0, omega_g=2 * math.pi * 50.0, l_c=2.7e-6,
        load="electrolyzer", l_d=20e-6, r0=0.8e-3, r1=3e-3, c1=10.0,
        v_rev=100.0, i0=1e4,
        control="pi", alpha0=math.radians(40.0), pi_kp=2e-5, pi_ki=6e-3,
        i_ref=1e4)


def bench(backend, t_end):
    p = params()
    kern = make_kernel(p, backend=backend)
    t0 = time.perf_counter()
    traj, _ = run_switching(p, t_end, stride=20, kern=kern)
    elapsed = time.perf_counter() - t0
    return elapsed, int(round(t_end / p.dt)), traj


def main():
    t_end = float(sys.argv[1]) if len(sys.argv) > 1 else 0.2
    results = {}
    for backend in ("cython", "pure"):
        try:
            elapsed, steps, traj = bench(backend, t_end)
        except Exception as exc:   # compiled extension may be unavailable
            print(f"{backend:>7}: skipped ({exc})")
            continue
        results[backend] = (elapsed, traj)
        print(f"{backend:>7}: {elapsed:8.3f} s   "
              f"{steps / elapsed / 1e6:6.2f} M fine steps/s")
    if len(results) == 2:
        (tc, trc), (tp, trp) = results["cython"], results["pure"]
        worst = float(np.max(np.abs(trc.i_dc - trp.i_dc)))
        print(f"speedup: {tp / tc:.1f}x   "
              f"max |i_dc| backend defect: {worst:.3g} A")


if __name__ == "__main__":
    main()
