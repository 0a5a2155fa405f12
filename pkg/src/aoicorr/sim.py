"""Discrete-event Monte Carlo simulator of the full sensing system.

This is the ground truth the closed forms are validated against.  One
run is a single-threaded continuous-time event loop (exact exponential
races, not a time-stepped approximation); replications use independent
RNG streams derived from the base seed and run in parallel threads.
Everything is deterministic for a fixed seed.

Initial conditions: each process starts in a state drawn from its
stationary distribution, the monitor starts correct, the server idle,
and metrics skip a configurable warmup (default 1% of the horizon).
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _accel, _kernels
from .model import SystemConfig, stationary_distribution

_EVENT_NAMES = {
    _kernels.EV_ARRIVAL: "arrival",
    _kernels.EV_DEPARTURE: "departure",
    _kernels.EV_STATE_CHANGE: "state_change",
    _kernels.EV_ARRIVAL_DROPPED: "arrival_dropped",
    _kernels.EV_ARRIVAL_BUFFERED: "arrival_buffered",
}

# consulted per call so tests and the benchmark can force the pure lane
_USE_NUMBA = _accel.NUMBA_ENABLED


@dataclass(frozen=True)
class SimParams:
    """Run parameters.  ``warmup=None`` means 1% of the horizon."""

    horizon: float
    seed: int
    buffer_capacity: int = 0
    warmup: float | None = None

    def __post_init__(self):
        if self.buffer_capacity not in (0, 1):
            raise ValueError("buffer_capacity must be 0 or 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        warmup = 0.01 * self.horizon if self.warmup is None else float(self.warmup)
        if not 0.0 <= warmup < self.horizon:
            raise ValueError("need horizon > warmup >= 0")
        object.__setattr__(self, "warmup", warmup)
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class EventLog:
    """Compact per-event record of one run (testing/debugging aid).

    ``carry_mask`` holds, for arrival-family events, a bitmask of the
    processes whose state the packet carries (bit j = process j).
    ``x``/``y``/``z`` are the post-event per-process views.
    """

    time: np.ndarray
    kind: np.ndarray
    actor: np.ndarray
    carry_mask: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def write_csv(self, path) -> None:
        """One row per (event, process): time, event_type, sensor, process, x, y, z."""
        m = self.x.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "event_type", "sensor", "process", "x", "y", "z"])
            for n in range(self.time.shape[0]):
                kind = int(self.kind[n])
                name = _EVENT_NAMES[kind]
                sensor = int(self.actor[n]) if kind != _kernels.EV_DEPARTURE and kind != _kernels.EV_STATE_CHANGE else -1
                for j in range(m):
                    writer.writerow(
                        [
                            format(float(self.time[n]), ".12g"),
                            name,
                            sensor,
                            j,
                            int(self.x[n, j]),
                            int(self.y[n, j]),
                            int(self.z[n, j]),
                        ]
                    )


@dataclass(frozen=True)
class SimMetrics:
    """Time-averaged metrics and counts from one run."""

    aoi_mean: np.ndarray
    error_ratio: np.ndarray
    arrivals: int
    drops: int
    departures: int
    in_flight: int
    informative_departures: np.ndarray
    interdeparture_mean: float
    interdeparture_second_moment: float
    measured_time: float
    occupancy: np.ndarray | None = None
    events: EventLog | None = None


@dataclass(frozen=True)
class ReplicatedMetrics:
    """Mean and standard error over replications (SE = 0 when n_reps = 1)."""

    n_reps: int
    aoi_mean: np.ndarray
    aoi_se: np.ndarray
    error_ratio: np.ndarray
    error_se: np.ndarray
    interdeparture_mean: float
    interdeparture_mean_se: float
    interdeparture_second_moment: float
    interdeparture_second_moment_se: float
    arrivals: int
    drops: int
    departures: int
    replicates: tuple[SimMetrics, ...] = field(repr=False, default=())


def _pack_processes(config: SystemConfig):
    m = config.num_processes
    kmax = max(p.num_states for p in config.processes)
    omega_cum = np.zeros((m, kmax, kmax))
    psi_cum = np.zeros((m, kmax))
    kvec = np.empty(m, dtype=np.int64)
    for j, proc in enumerate(config.processes):
        k = proc.num_states
        kvec[j] = k
        cum = np.cumsum(proc.transition_matrix, axis=1)
        cum[:, -1] = 1.0
        omega_cum[j, :k, :k] = cum
        psi = stationary_distribution(proc.transition_matrix)
        pc = np.cumsum(psi)
        pc[-1] = 1.0
        psi_cum[j, :k] = pc
    return omega_cum, psi_cum, kvec, kmax


def _call_kernel(args):
    if _USE_NUMBA:
        return _kernels.sim_core(*args)
    # wrapping uint64 RNG arithmetic overflows on purpose in the pure lane
    with np.errstate(over="ignore"):
        return _kernels.sim_core_py(*args)


def _run_one(
    config: SystemConfig,
    params: SimParams,
    rep: int,
    collect_occupancy: bool,
    log_events: bool,
    packed,
) -> SimMetrics:
    omega_cum, psi_cum, kvec, kmax = packed
    m = config.num_processes
    lam = np.ascontiguousarray(config.sensor_rates)
    zeta = np.array([p.state_change_rate for p in config.processes])
    pc = np.ascontiguousarray(config.correlation)

    if collect_occupancy:
        occupancy = np.zeros((m, kmax, kmax, 3), dtype=np.int64)
    else:
        occupancy = np.zeros((1, 1, 1, 3), dtype=np.int64)

    if log_events:
        if m > 64:
            raise ValueError("event logging supports at most 64 processes (carry bitmask)")
        expect = (lam.sum() * 2 + zeta.sum()) * params.horizon
        cap = int(expect + 10.0 * math.sqrt(max(expect, 1.0)) + 1024)
    else:
        cap = 0
    ev_time = np.zeros(cap)
    ev_kind = np.zeros(cap, dtype=np.int8)
    ev_actor = np.zeros(cap, dtype=np.int64)
    ev_mask = np.zeros(cap, dtype=np.uint64)
    ev_x = np.zeros((cap, m), dtype=np.int64)
    ev_y = np.zeros((cap, m), dtype=np.int64)
    ev_z = np.zeros((cap, m), dtype=np.int8)

    out = _call_kernel(
        (
            lam,
            float(config.service_rate),
            zeta,
            pc,
            omega_cum,
            psi_cum,
            kvec,
            float(params.horizon),
            float(params.warmup),
            int(params.buffer_capacity),
            np.uint64(params.seed & 0xFFFFFFFFFFFFFFFF),
            np.uint64(rep),
            collect_occupancy,
            occupancy,
            log_events,
            ev_time,
            ev_kind,
            ev_actor,
            ev_mask,
            ev_x,
            ev_y,
            ev_z,
        )
    )
    (
        aoi_int,
        err_int,
        measured,
        arrivals,
        drops,
        departures,
        inflight,
        inf_dep,
        y_sum,
        y2_sum,
        y_count,
        n_ev,
        overflow,
    ) = out
    if overflow:
        raise RuntimeError("event log capacity exceeded")

    events = None
    if log_events:
        events = EventLog(
            time=ev_time[:n_ev].copy(),
            kind=ev_kind[:n_ev].copy(),
            actor=ev_actor[:n_ev].copy(),
            carry_mask=ev_mask[:n_ev].copy(),
            x=ev_x[:n_ev].copy(),
            y=ev_y[:n_ev].copy(),
            z=ev_z[:n_ev].copy(),
        )
    return SimMetrics(
        aoi_mean=aoi_int / measured,
        error_ratio=err_int / measured,
        arrivals=int(arrivals),
        drops=int(drops),
        departures=int(departures),
        in_flight=int(inflight),
        informative_departures=np.asarray(inf_dep),
        interdeparture_mean=float(y_sum / y_count) if y_count else math.nan,
        interdeparture_second_moment=float(y2_sum / y_count) if y_count else math.nan,
        measured_time=float(measured),
        occupancy=occupancy if collect_occupancy else None,
        events=events,
    )


def run_simulation(
    config: SystemConfig,
    params: SimParams,
    *,
    collect_occupancy: bool = False,
    log_events: bool = False,
) -> SimMetrics:
    """Simulate one run and return its metrics.

    ``collect_occupancy`` additionally counts, for every process, the
    post-jump (x, y, z) visits of that process's embedded event chain
    (arrivals entering service, departures, own state changes).
    ``log_events`` records the full event sequence; see :class:`EventLog`.
    """
    packed = _pack_processes(config)
    return _run_one(config, params, 0, collect_occupancy, log_events, packed)


def _thread_count(n_tasks: int) -> int:
    env = os.environ.get("AOI_CORR_THREADS", "").strip()
    if env:
        cap = max(1, int(env))
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))


def replicate(config: SystemConfig, params: SimParams, n_reps: int) -> ReplicatedMetrics:
    """Run ``n_reps`` independent replications and aggregate.

    Replication r uses the RNG stream derived from (seed, r), so results
    are keyed by replication index and the aggregate is independent of
    execution or completion order.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    packed = _pack_processes(config)
    results: list[SimMetrics | None] = [None] * n_reps

    def work(rep: int) -> None:
        results[rep] = _run_one(config, params, rep, False, False, packed)

    workers = _thread_count(n_reps)
    if workers == 1 or n_reps == 1:
        for rep in range(n_reps):
            work(rep)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(n_reps)))

    runs: list[SimMetrics] = [r for r in results if r is not None]
    aoi = np.stack([r.aoi_mean for r in runs])
    err = np.stack([r.error_ratio for r in runs])
    ym = np.array([r.interdeparture_mean for r in runs])
    y2 = np.array([r.interdeparture_second_moment for r in runs])

    def se(a: np.ndarray) -> np.ndarray:
        if n_reps == 1:
            return np.zeros(a.shape[1:]) if a.ndim > 1 else 0.0
        return a.std(axis=0, ddof=1) / math.sqrt(n_reps)

    return ReplicatedMetrics(
        n_reps=n_reps,
        aoi_mean=aoi.mean(axis=0),
        aoi_se=se(aoi),
        error_ratio=err.mean(axis=0),
        error_se=se(err),
        interdeparture_mean=float(ym.mean()),
        interdeparture_mean_se=float(se(ym)),
        interdeparture_second_moment=float(y2.mean()),
        interdeparture_second_moment_se=float(se(y2)),
        arrivals=int(sum(r.arrivals for r in runs)),
        drops=int(sum(r.drops for r in runs)),
        departures=int(sum(r.departures for r in runs)),
        replicates=tuple(runs),
    )
