"""System description and derived rate quantities.

A system is N sensors pushing status updates through one zero-buffer
exponential server while M finite-state Markov processes evolve in the
background.  Entry (i, j) of the correlation matrix is the probability
that a packet from sensor i carries the state of process j sampled at
the packet's generation instant.

All container types are frozen dataclasses holding read-only arrays;
once validated they are safe to share across threads, and every
operation in this module is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
_POWER_ITER_CUTOFF = 200
_POWER_ITER_MAX = 200_000


class ValidationError(ValueError):
    """A system description violates a structural invariant."""


def _readonly(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProcessModel:
    """One monitored process: a K-state jump chain with exponential change epochs.

    ``transition_matrix`` is the K x K row-stochastic jump distribution;
    ``state_change_rate`` is the rate of the exponential epochs at which a
    jump (possibly a self-transition) is drawn from the current row.
    """

    transition_matrix: np.ndarray
    state_change_rate: float

    def __post_init__(self):
        object.__setattr__(self, "transition_matrix", _readonly(self.transition_matrix))
        object.__setattr__(self, "state_change_rate", float(self.state_change_rate))

    @property
    def num_states(self) -> int:
        return self.transition_matrix.shape[0]


@dataclass(frozen=True)
class SystemConfig:
    """Full description of a sensing system.

    ``sensor_rates``: per-sensor Poisson packet rates (length N).
    ``service_rate``: rate of the shared exponential server.
    ``correlation``: N x M matrix of carry probabilities.
    ``processes``: the M monitored processes.
    """

    sensor_rates: np.ndarray
    service_rate: float
    correlation: np.ndarray
    processes: tuple[ProcessModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "sensor_rates", _readonly(np.atleast_1d(self.sensor_rates)))
        object.__setattr__(self, "service_rate", float(self.service_rate))
        object.__setattr__(self, "correlation", _readonly(np.atleast_2d(self.correlation)))
        object.__setattr__(self, "processes", tuple(self.processes))

    @property
    def num_sensors(self) -> int:
        return self.sensor_rates.shape[0]

    @property
    def num_processes(self) -> int:
        return len(self.processes)


@dataclass(frozen=True)
class DerivedRates:
    """Rate quantities computed from a validated config.

    ``total_rate``        combined arrival rate seen by the server.
    ``informative_rates`` per-process rate of arrivals carrying that process.
    ``informative_probs`` probability a served packet is informative per process.
    ``effective_rates``   per-process rate of informative arrivals that find
                          the server idle (mu * rate / (mu + total)).
    """

    total_rate: float
    informative_rates: np.ndarray
    informative_probs: np.ndarray
    effective_rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "informative_rates", _readonly(self.informative_rates))
        object.__setattr__(self, "informative_probs", _readonly(self.informative_probs))
        object.__setattr__(self, "effective_rates", _readonly(self.effective_rates))


def _check_row_stochastic(omega: np.ndarray, label: str) -> None:
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise ValidationError(f"{label}: transition matrix must be square, got shape {omega.shape}")
    if omega.shape[0] < 2:
        raise ValidationError(f"{label}: process needs at least 2 states, got {omega.shape[0]}")
    if np.any(omega < 0.0) or np.any(omega > 1.0):
        raise ValidationError(f"{label}: transition probabilities must lie in [0, 1]")
    sums = omega.sum(axis=1)
    bad = np.abs(sums - 1.0) > ROW_SUM_TOL
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ValidationError(
            f"{label}: row {row} sums to {sums[row]!r}, not 1 within {ROW_SUM_TOL}"
        )


def _strongly_connected(adj: np.ndarray) -> bool:
    # BFS from node 0 over adj and adj.T; both reaching all nodes is
    # equivalent to strong connectivity.
    n = adj.shape[0]
    for mat in (adj, adj.T):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            nxt = []
            for u in frontier:
                for v in np.nonzero(mat[u])[0]:
                    if not seen[v]:
                        seen[v] = True
                        nxt.append(int(v))
            frontier = nxt
        if not seen.all():
            return False
    return True


def _is_primitive(adj: np.ndarray) -> bool:
    # Wielandt: an irreducible chain is aperiodic iff adj**w is entrywise
    # positive for w = K^2 - 2K + 2.  Boolean powers keep this exact.
    k = adj.shape[0]
    w = k * k - 2 * k + 2
    result = np.eye(k, dtype=bool)
    base = adj.copy()
    e = w
    while e:
        if e & 1:
            result = (result @ base) > 0
        base = (base @ base) > 0
        e >>= 1
    return bool(result.all())


def validate_config(config: SystemConfig) -> SystemConfig:
    """Check every structural invariant and return the config unchanged.

    Raises ValidationError describing the first violated invariant:
    dimension mismatches, rates that are not strictly positive,
    correlation entries outside [0, 1], non-row-stochastic transition
    matrices, and reducible or periodic process chains.
    """
    lam = config.sensor_rates
    if lam.ndim != 1 or lam.shape[0] < 1:
        raise ValidationError("sensor_rates must be a non-empty vector")
    if np.any(lam <= 0.0) or not np.all(np.isfinite(lam)):
        raise ValidationError("sensor rates must be finite and strictly positive")
    if not (config.service_rate > 0.0 and np.isfinite(config.service_rate)):
        raise ValidationError("service_rate must be finite and strictly positive")
    if config.num_processes < 1:
        raise ValidationError("at least one process is required (M >= 1)")

    pc = config.correlation
    expected = (config.num_sensors, config.num_processes)
    if pc.shape != expected:
        raise ValidationError(
            f"correlation matrix has shape {pc.shape}, expected {expected}"
        )
    if np.any(pc < 0.0) or np.any(pc > 1.0) or not np.all(np.isfinite(pc)):
        raise ValidationError("correlation entries must lie in [0, 1]")

    for j, proc in enumerate(config.processes):
        label = f"processes[{j}]"
        if not (proc.state_change_rate > 0.0 and np.isfinite(proc.state_change_rate)):
            raise ValidationError(f"{label}: state_change_rate must be finite and positive")
        omega = proc.transition_matrix
        _check_row_stochastic(omega, label)
        adj = omega > 0.0
        if not _strongly_connected(adj):
            raise ValidationError(f"{label}: transition matrix is reducible")
        if not _is_primitive(adj):
            raise ValidationError(f"{label}: transition matrix is periodic")
    return config


def stationary_distribution(omega: np.ndarray) -> np.ndarray:
    """Stationary distribution psi of a row-stochastic matrix, psi @ omega = psi.

    Direct linear solve with the normalisation row replacing one balance
    equation; power iteration for large chains.  The input must already
    be validated irreducible and aperiodic, which guarantees a unique
    strictly positive solution.
    """
    omega = np.asarray(omega, dtype=np.float64)
    k = omega.shape[0]
    if k > _POWER_ITER_CUTOFF:
        psi = np.full(k, 1.0 / k)
        for _ in range(_POWER_ITER_MAX):
            nxt = psi @ omega
            nxt /= nxt.sum()
            if np.max(np.abs(nxt - psi)) < 1e-15:
                psi = nxt
                break
            psi = nxt
        else:
            raise ValidationError("power iteration for the stationary distribution did not converge")
    else:
        a = omega.T - np.eye(k)
        a[-1, :] = 1.0
        b = np.zeros(k)
        b[-1] = 1.0
        try:
            psi = np.linalg.solve(a, b)
        except np.linalg.LinAlgError as exc:
            raise ValidationError(f"stationary distribution solve failed: {exc}") from exc

    psi = psi / psi.sum()
    if np.any(psi <= 0.0):
        raise ValidationError("stationary distribution has non-positive entries; chain is not irreducible")
    if np.max(np.abs(psi @ omega - psi)) > STATIONARY_TOL:
        raise ValidationError("stationary distribution residual exceeds tolerance")
    return _readonly(psi)


def derive_rates(config: SystemConfig) -> DerivedRates:
    """Total, informative, serving-probability and effective rates.

    informative_rates = sensor_rates @ correlation, exactly; the other
    fields follow as ratios against the total arrival rate.
    """
    lam = config.sensor_rates
    total = float(lam.sum())
    informative = lam @ config.correlation
    probs = informative / total
    mu = config.service_rate
    effective = mu * informative / (mu + total)
    return DerivedRates(
        total_rate=total,
        informative_rates=informative,
        informative_probs=probs,
        effective_rates=effective,
    )
