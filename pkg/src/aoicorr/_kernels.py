"""Hot numeric kernels: the event-driven simulator core and the grid scan.

Everything here is written so the same body runs compiled under numba or
as plain Python (see :mod:`aoicorr._accel`).  Randomness comes from
SplitMix64 streams kept as wrapping uint64 arithmetic, which behaves
identically in both lanes; the pure lane must run under
``np.errstate(over="ignore")`` because the wraparound is intentional.

Stream derivation: ``state[role] = mix64(mix64(mix64(seed) + GOLDEN*(rep+1))
^ ROLE_SALT*(role+1))`` with roles ARRIVAL (arrival times and carry draws),
SERVICE (service durations) and PROCESS (initial states, jump targets,
change epochs).  Replications therefore consume independent streams.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import maybe_njit, python_impl

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX_A = np.uint64(0xBF58476D1CE4E5B9)
MIX_B = np.uint64(0x94D049BB133111EB)
ROLE_SALT = np.uint64(0xD6E8FEB86659FD93)
U64_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

ROLE_ARRIVAL = 0
ROLE_SERVICE = 1
ROLE_PROCESS = 2

# event kinds in the log
EV_ARRIVAL = 0
EV_DEPARTURE = 1
EV_STATE_CHANGE = 2
EV_ARRIVAL_DROPPED = 3
EV_ARRIVAL_BUFFERED = 4


@maybe_njit
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * MIX_A
    z = (z ^ (z >> np.uint64(27))) * MIX_B
    return z ^ (z >> np.uint64(31))


@maybe_njit
def _init_streams(rng, seed, rep):
    repk = _mix64(_mix64(seed) + GOLDEN * (rep + U64_ONE))
    for role in range(3):
        rng[role] = _mix64(repk ^ (ROLE_SALT * np.uint64(role + 1)))


@maybe_njit
def _next_unit(rng, role):
    # uniform on (0, 1], 53-bit resolution
    rng[role] = rng[role] + GOLDEN
    x = _mix64(rng[role])
    return (float(x >> np.uint64(11)) + 1.0) * _INV53


@maybe_njit
def _next_exp(rng, role, rate):
    return -math.log(_next_unit(rng, role)) / rate


@maybe_njit
def _draw_index(rng, role, cumrow, k):
    u = _next_unit(rng, role)
    for i in range(k - 1):
        if u <= cumrow[i]:
            return i
    return k - 1


@maybe_njit
def _integrate(t0, t1, warmup, g, x, y, aoi_int, err_int):
    # accumulate per-process age and mismatch over [t0, t1), clipped to
    # the post-warmup window; g/x/y are constant between events
    lo = t0
    if lo < warmup:
        lo = warmup
    if t1 <= lo:
        return
    dt = t1 - lo
    mid = 0.5 * (lo + t1)
    for j in range(g.shape[0]):
        aoi_int[j] += dt * (mid - g[j])
        if x[j] != y[j]:
            err_int[j] += dt


@maybe_njit
def _record_jump_all(occupancy, x, y, busy, srv_carry):
    for j in range(x.shape[0]):
        if busy:
            z = 1 if srv_carry[j] else 2
        else:
            z = 0
        occupancy[j, x[j], y[j], z] += 1


@maybe_njit
def sim_core(
    lam,
    mu,
    zeta,
    pc,
    omega_cum,
    psi_cum,
    kvec,
    horizon,
    warmup,
    buffer_cap,
    seed,
    rep,
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
):
    """One continuous-time run; see :mod:`aoicorr.sim` for the wrapper.

    Three exponential event families race: per-sensor arrivals, service
    completion while busy, per-process change epochs.  Arrivals that find
    the server busy are dropped (or held in the single slot when
    ``buffer_cap`` is 1).  Age and mismatch integrals accumulate exactly
    between events.
    """
    n_sensors = lam.shape[0]
    m = zeta.shape[0]

    rng = np.empty(3, np.uint64)
    _init_streams(rng, seed, rep)

    x = np.empty(m, np.int64)
    y = np.empty(m, np.int64)
    g = np.zeros(m)
    for j in range(m):
        x[j] = _draw_index(rng, ROLE_PROCESS, psi_cum[j], kvec[j])
        y[j] = x[j]

    t_arr = np.empty(n_sensors)
    for i in range(n_sensors):
        t_arr[i] = _next_exp(rng, ROLE_ARRIVAL, lam[i])
    t_chg = np.empty(m)
    for j in range(m):
        if zeta[j] > 0.0:
            t_chg[j] = _next_exp(rng, ROLE_PROCESS, zeta[j])
        else:
            t_chg[j] = np.inf

    busy = False
    t_dep = np.inf
    srv_gen = 0.0
    srv_carry = np.zeros(m, np.bool_)
    srv_val = np.zeros(m, np.int64)
    buf_used = False
    buf_gen = 0.0
    buf_carry = np.zeros(m, np.bool_)
    buf_val = np.zeros(m, np.int64)
    tmp_carry = np.zeros(m, np.bool_)

    aoi_int = np.zeros(m)
    err_int = np.zeros(m)
    inf_dep = np.zeros(m, np.int64)
    arrivals = 0
    drops = 0
    departures = 0
    y_sum = 0.0
    y2_sum = 0.0
    y_count = 0
    prev_dep = -1.0
    n_ev = 0
    overflow = False
    cap = ev_time.shape[0]

    t = 0.0
    while True:
        t_next = t_dep
        kind = 0
        idx = -1
        for i in range(n_sensors):
            if t_arr[i] < t_next:
                t_next = t_arr[i]
                kind = 1
                idx = i
        for j in range(m):
            if t_chg[j] < t_next:
                t_next = t_chg[j]
                kind = 2
                idx = j
        if t_next >= horizon:
            _integrate(t, horizon, warmup, g, x, y, aoi_int, err_int)
            break
        _integrate(t, t_next, warmup, g, x, y, aoi_int, err_int)
        t = t_next

        mask = np.uint64(0)
        if kind == 1:
            arrivals += 1
            for j in range(m):
                u = _next_unit(rng, ROLE_ARRIVAL)
                carried = u <= pc[idx, j]
                tmp_carry[j] = carried
                if carried:
                    mask = mask | (U64_ONE << np.uint64(j))
            if not busy:
                busy = True
                srv_gen = t
                for j in range(m):
                    srv_carry[j] = tmp_carry[j]
                    srv_val[j] = x[j]
                t_dep = t + _next_exp(rng, ROLE_SERVICE, mu)
                klog = EV_ARRIVAL
                if collect_occupancy:
                    _record_jump_all(occupancy, x, y, busy, srv_carry)
            elif buffer_cap == 1 and not buf_used:
                buf_used = True
                buf_gen = t
                for j in range(m):
                    buf_carry[j] = tmp_carry[j]
                    buf_val[j] = x[j]
                klog = EV_ARRIVAL_BUFFERED
            else:
                drops += 1
                klog = EV_ARRIVAL_DROPPED
            t_arr[idx] = t + _next_exp(rng, ROLE_ARRIVAL, lam[idx])
        elif kind == 0:
            departures += 1
            if t >= warmup:
                if prev_dep >= 0.0:
                    dy = t - prev_dep
                    y_sum += dy
                    y2_sum += dy * dy
                    y_count += 1
                prev_dep = t
            for j in range(m):
                if srv_carry[j]:
                    y[j] = srv_val[j]
                    g[j] = srv_gen
                    inf_dep[j] += 1
            if buf_used:
                buf_used = False
                srv_gen = buf_gen
                for j in range(m):
                    srv_carry[j] = buf_carry[j]
                    srv_val[j] = buf_val[j]
                t_dep = t + _next_exp(rng, ROLE_SERVICE, mu)
            else:
                busy = False
                t_dep = np.inf
            klog = EV_DEPARTURE
            if collect_occupancy:
                _record_jump_all(occupancy, x, y, busy, srv_carry)
        else:
            j0 = idx
            x[j0] = _draw_index(rng, ROLE_PROCESS, omega_cum[j0, x[j0]], kvec[j0])
            t_chg[j0] = t + _next_exp(rng, ROLE_PROCESS, zeta[j0])
            klog = EV_STATE_CHANGE
            if collect_occupancy:
                if busy:
                    z0 = 1 if srv_carry[j0] else 2
                else:
                    z0 = 0
                occupancy[j0, x[j0], y[j0], z0] += 1

        if log_events:
            if n_ev < cap:
                ev_time[n_ev] = t
                ev_kind[n_ev] = klog
                ev_actor[n_ev] = idx
                ev_mask[n_ev] = mask
                for j in range(m):
                    ev_x[n_ev, j] = x[j]
                    ev_y[n_ev, j] = y[j]
                    if busy:
                        ev_z[n_ev, j] = 1 if srv_carry[j] else 2
                    else:
                        ev_z[n_ev, j] = 0
                n_ev += 1
            else:
                overflow = True

    inflight = 0
    if busy:
        inflight += 1
    if buf_used:
        inflight += 1
    measured = horizon - warmup
    return (
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
    )


@maybe_njit
def grid_scan(rows, offsets, counts, lam, lam_c):
    """Minimize sum_j lam_c / lam_star_j over the cartesian product of
    per-sensor candidate rows.

    ``rows`` stacks every sensor's candidate rows; sensor i owns
    ``rows[offsets[i] : offsets[i] + counts[i]]``.  Combinations where any
    process gets zero informative rate are skipped.  Exact objective ties
    go to the lexicographically largest flattened matrix, which keeps the
    result deterministic under symmetric candidate sets.

    Returns (chosen index per sensor, best objective); indices are -1 and
    the objective inf when every combination was skipped.
    """
    n = counts.shape[0]
    m = rows.shape[1]
    idx = np.zeros(n, np.int64)
    best = np.full(n, -1, np.int64)
    best_f = np.inf
    lam_star = np.empty(m)
    while True:
        ok = True
        f = 0.0
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += lam[i] * rows[offsets[i] + idx[i], j]
            lam_star[j] = s
        for j in range(m):
            if lam_star[j] <= 0.0:
                ok = False
                break
            f += lam_c / lam_star[j]
        if ok:
            if f < best_f:
                best_f = f
                for i in range(n):
                    best[i] = idx[i]
            elif f == best_f and best[0] >= 0:
                take = False
                decided = False
                for i in range(n):
                    if decided:
                        break
                    for j in range(m):
                        a = rows[offsets[i] + idx[i], j]
                        b = rows[offsets[i] + best[i], j]
                        if a > b:
                            take = True
                            decided = True
                            break
                        if a < b:
                            decided = True
                            break
                if take:
                    for i in range(n):
                        best[i] = idx[i]
        k = n - 1
        while k >= 0:
            idx[k] += 1
            if idx[k] < counts[k]:
                break
            idx[k] = 0
            k -= 1
        if k < 0:
            break
    return best, best_f


# uncompiled twins, used by the benchmark and the cross-lane tests
sim_core_py = python_impl(sim_core)
grid_scan_py = python_impl(grid_scan)
