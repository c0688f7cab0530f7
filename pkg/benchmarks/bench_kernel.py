"""Compare the compiled and numpy RK4 backends on a 30 s post-fault run.

    python3 benchmarks/bench_kernel.py [--regions 5] [--repeat 5] [--dt 1e-3]
"""
import argparse
import statistics
import time

import numpy as np

from regfreq import kernels
from regfreq.dynamics import simulate
from regfreq.model import FaultSpec, Line, RegionParams, SystemModel


def chain(n: int) -> SystemModel:
    ids = [f"r{i}" for i in range(n)]
    regions = tuple(RegionParams(r, 10000.0 + 2000.0 * i, 0.02, 20000.0, R=300.0, EFR=50.0) for i, r in enumerate(ids))
    return SystemModel(regions=regions, lines=tuple(Line(a, b, T=10000.0) for a, b in zip(ids, ids[1:])))


def timed(system, fault, backend, dt, repeat):
    simulate(system, fault, dt=dt, t_end=30.0, backend=backend)
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        tr = simulate(system, fault, dt=dt, t_end=30.0, backend=backend)
        runs.append(time.perf_counter() - t0)
    return statistics.median(runs), tr


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--regions", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dt", type=float, default=1e-3)
    args = ap.parse_args()

    try:
        kernels.get_integrator("cython")
        backends = ("cython", "python")
    except ImportError:
        print("compiled extension not built; timing the numpy backend only")
        backends = ("python",)

    print(f"{'N':>3} " + " ".join(f"{b + ' [ms]':>14}" for b in backends) + f" {'speed-up':>9} {'max |diff|':>11}")
    for n in range(1, args.regions + 1):
        system = chain(n)
        fault = FaultSpec("r0", 1000.0)
        res = {b: timed(system, fault, b, args.dt, args.repeat) for b in backends}
        cells = " ".join(f"{1e3 * res[b][0]:14.2f}" for b in backends)
        if len(backends) == 2:
            speed = res["python"][0] / res["cython"][0]
            diff = float(np.max(np.abs(res["python"][1].df - res["cython"][1].df)))
            print(f"{n:3d} {cells} {speed:9.1f} {diff:11.1e}")
        else:
            print(f"{n:3d} {cells}")


if __name__ == "__main__":
    main()
