"""Time the compiled and pure-Python kernel backends on the same inputs.

Usage: python3 benchmarks/bench_kernels.py [--records N] [--repeat R]
"""

import argparse
import time

import numpy as np

from qtomo import kernels
from qtomo.detector_sim import QuadratureTable
from qtomo.multimode import kappa, laguerre_nodes, total_photon_weights
from qtomo.states import StateSpec, make_state


def best_time(func, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        func()
        times.append(time.perf_counter() - start)
    return min(times)


def cases(records: int, rng: np.random.Generator):
    x = rng.normal(size=records)
    theta = rng.uniform(0, np.pi / 2, size=records)
    t, w = laguerre_nodes()
    k = kappa(0.9)
    tt, weights = total_photon_weights(8, 0.9)
    table = QuadratureTable.for_state(make_state(StateSpec.cat(2.0)))
    u = rng.random(records)
    phi = rng.random(records) * np.pi
    yield "joint_photon_values (nmax=8)", lambda b: b.joint_photon_values(x, theta, t, w, k, 8)
    yield "total_photon_values (nmax=8)", lambda b: b.total_photon_values(x, tt, weights, k)
    yield "trig_inverse_cdf (cat state)", lambda b: b.trig_inverse_cdf(u, phi, table.cdf_re, table.cdf_im, table.grid)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--records", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    python = kernels.get_backend("python")
    try:
        compiled = kernels.get_backend("compiled")
    except ImportError:
        compiled = None
        print("compiled backend not built; timing the python backend only")

    print(f"{'kernel':32s} {'python [s]':>11s} {'compiled [s]':>13s} {'speedup':>8s}")
    for name, run in cases(args.records, np.random.default_rng(0)):
        t_py = best_time(lambda: run(python), args.repeat)
        if compiled is None:
            print(f"{name:32s} {t_py:11.4f} {'-':>13s} {'-':>8s}")
            continue
        t_c = best_time(lambda: run(compiled), args.repeat)
        print(f"{name:32s} {t_py:11.4f} {t_c:13.4f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
