"""Stationary monitor-error ratio via an embedded jump chain.

For one tracked process the system is observed at its event instants
(arrivals, departures, state changes) as a chain over states (x, y, z):
x the true process state, y the state stored at the monitor, z the
server occupancy (0 idle, 1 serving a packet that carries this process,
2 serving one that does not).  The long-run fraction of time with
x != y is the ratio of holding-time-weighted stationary mass on the
mismatched states.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import (
    SystemConfig,
    ValidationError,
    derive_rates,
    stationary_distribution,
)


class UntrackedProcessError(ValueError):
    """No sensor ever carries the process: the stationary error is undefined."""


def service_transition_matrix(
    omega: np.ndarray, state_change_rate: float, service_rate: float
) -> np.ndarray:
    """Distribution of the process state at the end of one service.

    Races an exponential service clock (rate mu) against Poisson jump
    epochs (rate zeta) whose targets are drawn from ``omega``:

        P = mu/(mu+zeta) * (I - zeta*omega/(mu+zeta))^-1

    Row-stochastic for any row-stochastic omega; the identity when the
    process cannot change during service (zeta = 0).
    """
    omega = np.asarray(omega, dtype=np.float64)
    k = omega.shape[0]
    if state_change_rate < 0.0:
        raise ValueError("state_change_rate must be nonnegative")
    if service_rate <= 0.0:
        raise ValueError("service_rate must be strictly positive")
    if state_change_rate == 0.0:
        return np.eye(k)
    denom = service_rate + state_change_rate
    a = np.eye(k) - (state_change_rate / denom) * omega
    try:
        return np.linalg.solve(a, np.eye(k) * (service_rate / denom))
    except np.linalg.LinAlgError as exc:  # spectral radius < 1 makes this unreachable
        raise RuntimeError(f"service transition solve failed: {exc}") from exc


@dataclass(frozen=True)
class EmbeddedChain:
    """Jump chain over (x, y, z) for one process.

    States are enumerated lexicographically in (x, y, z) with z fastest,
    x and y 0-based, so index(x, y, z) = (x*K + y)*3 + z.  ``holding`` is
    the expected sojourn per visit, a function of z alone.  ``stationary``
    is filled in by :func:`embedded_stationary`.
    """

    num_states: int
    states: tuple[tuple[int, int, int], ...]
    transition_matrix: np.ndarray
    holding: np.ndarray
    stationary: np.ndarray | None = None

    @staticmethod
    def state_index(x: int, y: int, z: int, num_process_states: int) -> int:
        return (x * num_process_states + y) * 3 + z


@dataclass(frozen=True)
class ErrorResult:
    """Error ratio in [0, 1] plus the solved chain for diagnostics."""

    ratio: float
    chain: EmbeddedChain | None


def build_embedded_chain(config: SystemConfig, j: int) -> EmbeddedChain:
    """Assemble the (3 K^2)-state transition matrix for process ``j``.

    Transition families, with zeta the process change rate, lam_c the
    total arrival rate, lam_star the informative rate and mu the service
    rate:

    * state change while idle / busy: omega row scaled by
      zeta/(zeta+lam_c) or zeta/(zeta+mu), z unchanged;
    * informative / uninformative arrival from idle: lam_star/(zeta+lam_c)
      and (lam_c-lam_star)/(zeta+lam_c);
    * uninformative departure: mu/(zeta+mu), y unchanged;
    * informative departure: mu/(zeta+mu) * P[y2, x1] * psi[y2]/psi[x1],
      the Bayes-inverted distribution of the state the packet carried
      given the state now is x1.

    Everything else is zero.  Rows sum to one because psi is stationary
    for the service transition matrix.
    """
    if not 0 <= j < config.num_processes:
        raise IndexError(f"process index {j} out of range for M={config.num_processes}")
    rates = derive_rates(config)
    lam_c = rates.total_rate
    lam_star = float(rates.informative_rates[j])
    mu = config.service_rate
    proc = config.processes[j]
    omega = proc.transition_matrix
    zeta = proc.state_change_rate
    k = proc.num_states

    psi = stationary_distribution(omega)
    pn = service_transition_matrix(omega, zeta, mu)

    n = 3 * k * k
    pm = np.zeros((n, n))
    idx = EmbeddedChain.state_index
    change_idle = zeta / (zeta + lam_c)
    change_busy = zeta / (zeta + mu)
    arr_inf = lam_star / (zeta + lam_c)
    arr_uninf = (lam_c - lam_star) / (zeta + lam_c)
    depart = mu / (zeta + mu)

    for x1 in range(k):
        for y1 in range(k):
            s0 = idx(x1, y1, 0, k)
            s1 = idx(x1, y1, 1, k)
            s2 = idx(x1, y1, 2, k)
            for x2 in range(k):
                pm[s0, idx(x2, y1, 0, k)] += omega[x1, x2] * change_idle
                pm[s1, idx(x2, y1, 1, k)] += omega[x1, x2] * change_busy
                pm[s2, idx(x2, y1, 2, k)] += omega[x1, x2] * change_busy
            pm[s0, s1] += arr_inf
            pm[s0, s2] += arr_uninf
            pm[s2, s0] += depart
            for y2 in range(k):
                pm[s1, idx(x1, y2, 0, k)] += depart * pn[y2, x1] * psi[y2] / psi[x1]

    holding = np.empty(n)
    holding[0::3] = 1.0 / (zeta + lam_c)
    holding[1::3] = 1.0 / (zeta + mu)
    holding[2::3] = 1.0 / (zeta + mu)

    states = tuple((x, y, z) for x in range(k) for y in range(k) for z in range(3))
    pm.setflags(write=False)
    holding.setflags(write=False)
    return EmbeddedChain(
        num_states=n, states=states, transition_matrix=pm, holding=holding
    )


def embedded_stationary(chain: EmbeddedChain) -> np.ndarray:
    """Stationary distribution pi of the jump chain, pi @ P = pi, sum pi = 1."""
    pm = chain.transition_matrix
    n = chain.num_states
    a = pm.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"embedded chain stationary solve failed: {exc}") from exc
    if np.min(pi) < -1e-9:
        raise ValidationError("embedded chain stationary solve produced negative mass")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    if np.max(np.abs(pi @ pm - pi)) > 1e-9:
        raise ValidationError("embedded chain stationary residual exceeds tolerance")
    pi.setflags(write=False)
    return pi


def error_ratio(config: SystemConfig, j: int) -> ErrorResult:
    """Long-run fraction of time the monitor state differs from process ``j``.

    Raises :class:`UntrackedProcessError` when the informative rate is
    zero (the chain has no informative departures and no stationary
    answer exists).  A frozen process (zeta = 0) never leaves the state
    the monitor already knows, so the ratio short-circuits to 0 without
    solving the chain.
    """
    rates = derive_rates(config)
    if rates.informative_rates[j] <= 0.0:
        raise UntrackedProcessError(
            f"process {j} is untracked (informative rate 0); error ratio undefined"
        )
    if config.processes[j].state_change_rate == 0.0:
        return ErrorResult(ratio=0.0, chain=None)

    chain = build_embedded_chain(config, j)
    pi = embedded_stationary(chain)
    weights = pi * chain.holding
    mismatch = 0.0
    for s, (x, y, _z) in enumerate(chain.states):
        if x != y:
            mismatch += weights[s]
    ratio = mismatch / weights.sum()
    ratio = min(max(ratio, 0.0), 1.0)
    return ErrorResult(ratio=float(ratio), chain=replace(chain, stationary=pi))
