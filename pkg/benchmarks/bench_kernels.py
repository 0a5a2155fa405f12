"""Benchmark the two hot kernels: numba lane vs pure-Python/numpy lane.

The lanes share one code path (see aoicorr._accel); this script times the
same workload through both and checks they agree bit-for-bit.  Run as

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

import aoicorr.opt as opt_mod
import aoicorr.sim as sim_mod
from aoicorr._accel import NUMBA_ENABLED
from aoicorr.model import ProcessModel, SystemConfig, validate_config
from aoicorr.opt import ConstraintSet, Family, solve_grid
from aoicorr.sim import SimParams, run_simulation

OMEGA = np.array([[0.4, 0.6], [0.3, 0.7]])


def build_config():
    return validate_config(
        SystemConfig(
            sensor_rates=np.array([2.0, 8.0]),
            service_rate=4.0,
            correlation=np.array([[1.0, 0.5], [0.5, 1.0]]),
            processes=(ProcessModel(OMEGA, 4.0), ProcessModel(OMEGA, 4.0)),
        )
    )


def timed(fn, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def bench_simulator(horizon=5e3):
    cfg = build_config()
    params = SimParams(horizon=horizon, seed=17)
    run_simulation(cfg, params)  # JIT warmup

    sim_mod._USE_NUMBA = NUMBA_ENABLED
    t_fast, fast = timed(lambda: run_simulation(cfg, params))
    sim_mod._USE_NUMBA = False
    t_slow, slow = timed(lambda: run_simulation(cfg, params), repeats=1)
    sim_mod._USE_NUMBA = NUMBA_ENABLED

    events = slow.arrivals + slow.departures  # lower bound on processed events
    assert np.array_equal(fast.aoi_mean, slow.aoi_mean), "lanes diverged"
    print(f"simulator  horizon={horizon:g}  events>={events}")
    print(f"  numba lane : {t_fast * 1e3:9.2f} ms")
    print(f"  python lane: {t_slow * 1e3:9.2f} ms")
    print(f"  speedup    : {t_slow / t_fast:9.1f}x")


def bench_grid(step=0.01):
    cs = ConstraintSet(Family.QUADRATIC_CONCAVE, [1.0, 1.0])
    lam = np.array([1.0, 5.0])
    solve_grid(cs, lam, 2, step=step)  # JIT warmup

    opt_mod._USE_NUMBA = NUMBA_ENABLED
    t_fast, fast = timed(lambda: solve_grid(cs, lam, 2, step=step))
    opt_mod._USE_NUMBA = False
    t_slow, slow = timed(lambda: solve_grid(cs, lam, 2, step=step), repeats=1)
    opt_mod._USE_NUMBA = NUMBA_ENABLED

    assert np.array_equal(fast.correlation, slow.correlation), "lanes diverged"
    print(f"grid scan  step={step:g}")
    print(f"  numba lane : {t_fast * 1e3:9.2f} ms")
    print(f"  python lane: {t_slow * 1e3:9.2f} ms")
    print(f"  speedup    : {t_slow / t_fast:9.1f}x")


if __name__ == "__main__":
    if not NUMBA_ENABLED:
        print("numba lane disabled (AOI_CORR_NO_NUMBA set or numba missing); "
              "timing the python lane against itself")
    bench_simulator()
    print()
    bench_grid()
