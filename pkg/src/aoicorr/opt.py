"""Optimal sensing-probability allocation under per-sensor constraints.

The objective is the sum over processes of the reciprocal serving
probability, sum_j 1/p_j = sum_j lam_c / (lam @ col_j), which orders
allocations exactly like the summed average age.  Three constraint
families are supported; the two convex ones have closed-form optima,
the concave one is solved by exhaustive search over the constraint
boundary (every sensor either saturates its budget or tracks everything,
so the search space loses one dimension per sensor).
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from . import _accel, _kernels

INFINITE = math.inf

_FEAS_TOL = 1e-9
_ACTIVE_TOL = 1e-8
_COMBO_CAP = 9_000_000_000  # ~minutes of compiled scanning; N*M=6 at step 1e-3 fits
_CALLBACK_COMBO_CAP = 2_000_000

# consulted per call; tests and the benchmark may force the pure lane
_USE_NUMBA = _accel.NUMBA_ENABLED


class Family(enum.Enum):
    """How a sensor's total sensing ability reacts to spreading it out."""

    LINEAR = "linear"
    QUADRATIC_CONVEX = "qconvex"
    QUADRATIC_CONCAVE = "qconcave"


def _row_value(kind: Family, budget: float, row: np.ndarray) -> float:
    if kind is Family.LINEAR:
        return float(row.sum() - budget)
    if kind is Family.QUADRATIC_CONVEX:
        return float(row @ row - budget)
    loss = 1.0 - row
    return float(budget - loss @ loss)


@dataclass(frozen=True)
class ConstraintSet:
    """A constraint family plus per-sensor budgets b (all positive)."""

    kind: Family
    budgets: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.budgets, dtype=np.float64)).copy()
        if np.any(b <= 0.0) or not np.all(np.isfinite(b)):
            raise ValueError("budgets must be finite and strictly positive")
        b.setflags(write=False)
        object.__setattr__(self, "budgets", b)

    @property
    def num_sensors(self) -> int:
        return self.budgets.shape[0]

    def value(self, correlation: np.ndarray, i: int) -> float:
        """h_i(P); the row is feasible iff the value is <= 0."""
        return _row_value(self.kind, float(self.budgets[i]), np.asarray(correlation)[i])

    def values(self, correlation: np.ndarray) -> np.ndarray:
        return np.array([self.value(correlation, i) for i in range(self.num_sensors)])

    def gradient_row(self, correlation: np.ndarray, i: int) -> np.ndarray:
        """d h_i / d p_ij for every j."""
        row = np.asarray(correlation)[i]
        if self.kind is Family.LINEAR:
            return np.ones_like(row)
        if self.kind is Family.QUADRATIC_CONVEX:
            return 2.0 * row
        return 2.0 * (1.0 - row)

    def feasible(self, correlation: np.ndarray, tol: float = _FEAS_TOL) -> bool:
        p = np.asarray(correlation)
        if np.any(p < -tol) or np.any(p > 1.0 + tol):
            return False
        return bool(np.all(self.values(p) <= tol))


@dataclass(frozen=True)
class KktCertificate:
    """Least-squares multipliers and residuals for a candidate optimum.

    ``feasible`` is False when the point itself violates the constraints,
    which marks the certificate invalid regardless of residuals.
    """

    tau: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    stationarity_residual: float
    complementarity_residual: float
    feasible: bool


@dataclass(frozen=True)
class AllocationResult:
    correlation: np.ndarray
    objective: float
    certificate: KktCertificate | None
    method: str
    step: float | None = None


def objective(correlation: np.ndarray, sensor_rates: np.ndarray) -> float:
    """sum_j lam_c / (informative rate of process j); INFINITE if a column is dead."""
    p = np.atleast_2d(np.asarray(correlation, dtype=np.float64))
    lam = np.asarray(sensor_rates, dtype=np.float64)
    lam_star = lam @ p
    if np.any(lam_star <= 0.0):
        return INFINITE
    return float(np.sum(lam.sum() / lam_star))


def kkt_residuals(
    correlation: np.ndarray, sensor_rates: np.ndarray, constraints: ConstraintSet
) -> KktCertificate:
    """Fit nonnegative multipliers to the stationarity conditions.

    Complementary slackness fixes which multipliers may be nonzero (tau
    where p = 1, v where p = 0, xi where the budget is tight); the free
    ones are fitted per sensor by nonnegative least squares and the
    worst-case stationarity equation residual is reported.
    """
    p = np.atleast_2d(np.asarray(correlation, dtype=np.float64))
    lam = np.asarray(sensor_rates, dtype=np.float64)
    n, m = p.shape
    lam_c = lam.sum()
    lam_star = lam @ p
    feasible = constraints.feasible(p)

    tau = np.zeros((n, m))
    v = np.zeros((n, m))
    xi = np.zeros(n)
    if np.any(lam_star <= 0.0):
        return KktCertificate(tau, v, xi, INFINITE, INFINITE, feasible)

    grad = lam_c * lam[:, None] / lam_star[None, :] ** 2  # -d f / d p, entrywise positive
    stat_res = 0.0
    for i in range(n):
        at_one = p[i] >= 1.0 - _ACTIVE_TOL
        at_zero = p[i] <= _ACTIVE_TOL
        tight = abs(constraints.value(p, i)) <= _ACTIVE_TOL
        cols: list[np.ndarray] = []
        if tight:
            cols.append(constraints.gradient_row(p, i))
        one_idx = np.nonzero(at_one)[0]
        for j in one_idx:
            e = np.zeros(m)
            e[j] = 1.0
            cols.append(e)
        zero_idx = np.nonzero(at_zero)[0]
        for j in zero_idx:
            e = np.zeros(m)
            e[j] = -1.0
            cols.append(e)
        target = grad[i]
        if cols:
            a = np.column_stack(cols)
            sol, _ = nnls(a, target)
            resid = a @ sol - target
            pos = 0
            if tight:
                xi[i] = sol[0]
                pos = 1
            for k, j in enumerate(one_idx):
                tau[i, j] = sol[pos + k]
            for k, j in enumerate(zero_idx):
                v[i, j] = sol[pos + len(one_idx) + k]
        else:
            resid = -target
        stat_res = max(stat_res, float(np.max(np.abs(resid))))

    comp = 0.0
    h = constraints.values(p)
    comp = max(comp, float(np.max(np.abs(tau * (p - 1.0)))))
    comp = max(comp, float(np.max(np.abs(v * p))))
    comp = max(comp, float(np.max(np.abs(xi * h))))
    return KktCertificate(tau, v, xi, stat_res, comp, feasible)


def solve_closed_form(
    constraints: ConstraintSet, sensor_rates: np.ndarray, num_processes: int
) -> AllocationResult:
    """Optimal allocation for the two convex families.

    Equal spreading is optimal: each entry is min(M, b_i)/M for the
    linear family and sqrt(min(M, b_i)/M) for the quadratic-convex one
    (a sensor that can cover everything just tracks everything).
    """
    lam = np.asarray(sensor_rates, dtype=np.float64)
    n = constraints.num_sensors
    m = int(num_processes)
    if lam.shape != (n,):
        raise ValueError("sensor_rates length must match budgets length")
    shares = np.minimum(float(m), constraints.budgets) / m
    if constraints.kind is Family.LINEAR:
        p = np.tile(shares[:, None], (1, m))
    elif constraints.kind is Family.QUADRATIC_CONVEX:
        p = np.tile(np.sqrt(shares)[:, None], (1, m))
    else:
        raise ValueError("closed form exists only for the linear and quadratic-convex families")
    cert = kkt_residuals(p, lam, constraints)
    return AllocationResult(
        correlation=p, objective=objective(p, lam), certificate=cert, method="closed_form"
    )


def _grid_values(step: float) -> np.ndarray:
    n = int(math.floor(1.0 / step + 1e-9))
    vals = np.arange(n + 1) * step
    if vals[-1] < 1.0 - 1e-12:
        vals = np.append(vals, 1.0)
    else:
        vals[-1] = 1.0
    return vals


def _candidate_rows(constraints: ConstraintSet, i: int, m: int, step: float) -> np.ndarray:
    """Rows on the boundary h_i = 0, plus the all-ones row when feasible.

    The boundary is sampled once per choice of dependent coordinate (the
    other M-1 run over the grid, the dependent one is solved from
    tightness).  Sampling every orientation keeps the candidate set
    symmetric under column permutations, so mirrored optima tie exactly
    and the lexicographic rule can break the tie deterministically.
    """
    b = float(constraints.budgets[i])
    kind = constraints.kind
    vals = _grid_values(step)
    nfree = m - 1
    if nfree == 0:
        free = np.empty((1, 0))
    else:
        if len(vals) ** nfree > 20_000_000:
            raise ValueError("grid too fine for this many processes; increase step")
        grids = np.meshgrid(*([vals] * nfree), indexing="ij")
        free = np.stack([g.ravel() for g in grids], axis=1)

    if kind is Family.LINEAR:
        rest = b - free.sum(axis=1)
    elif kind is Family.QUADRATIC_CONVEX:
        rest = b - (free**2).sum(axis=1)
    else:
        rest = b - ((1.0 - free) ** 2).sum(axis=1)
    valid = (rest >= 0.0) & (rest <= 1.0 + 1e-12)
    free = free[valid]
    rest = np.clip(rest[valid], 0.0, 1.0)
    if kind is Family.LINEAR:
        solved = rest
    elif kind is Family.QUADRATIC_CONVEX:
        solved = np.sqrt(rest)
    else:
        solved = 1.0 - np.sqrt(rest)

    pieces = []
    for dep in range(m):
        block = np.empty((free.shape[0], m))
        others = [j for j in range(m) if j != dep]
        for pos, j in enumerate(others):
            block[:, j] = free[:, pos]
        block[:, dep] = solved
        pieces.append(block)
    rows = np.vstack(pieces)
    rows = np.unique(rows, axis=0)

    # the all-ones row is feasible when the sensor can track everything at once
    ones = np.ones(m)
    if _row_value(kind, b, ones) <= _FEAS_TOL:
        rows = np.vstack([rows, ones[None, :]])
    if rows.shape[0] == 0:
        raise ValueError(f"constraint set infeasible for sensor {i} (budget {b}, M={m})")
    return rows


def solve_grid(
    constraints: ConstraintSet,
    sensor_rates: np.ndarray,
    num_processes: int,
    step: float = 1e-3,
    objective_fn=None,
) -> AllocationResult:
    """Exhaustive search over the constraint-boundary grid.

    Intended for the quadratic-concave family, where the feasible set is
    non-convex and equal spreading need not be optimal; it also accepts
    the convex families (useful for cross-checks).  ``objective_fn``, if
    given, replaces the age objective with an arbitrary callable
    P_C -> float (e.g. a summed error ratio); candidate combinations with
    an infinite value are skipped either way.  Exact ties break toward the
    lexicographically largest flattened matrix.
    """
    lam = np.asarray(sensor_rates, dtype=np.float64)
    n = constraints.num_sensors
    m = int(num_processes)
    if lam.shape != (n,):
        raise ValueError("sensor_rates length must match budgets length")
    if constraints.kind is Family.QUADRATIC_CONCAVE and np.any(constraints.budgets > m):
        raise ValueError("infeasible: a quadratic-concave budget exceeds the number of processes")

    cand = [_candidate_rows(constraints, i, m, step) for i in range(n)]
    combos = 1
    for rows in cand:
        combos *= rows.shape[0]
    cap = _CALLBACK_COMBO_CAP if objective_fn is not None else _COMBO_CAP
    if combos > cap:
        raise ValueError(
            f"boundary grid has {combos} combinations (cap {cap}); coarsen the step"
        )

    if objective_fn is None:
        rows = np.ascontiguousarray(np.vstack(cand))
        counts = np.array([c.shape[0] for c in cand], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts[:-1])]).astype(np.int64)
        scan = _kernels.grid_scan if _USE_NUMBA else _kernels.grid_scan_py
        best_idx, best_f = scan(rows, offsets, counts, lam, float(lam.sum()))
        if best_idx[0] < 0:
            raise ValueError("every grid combination leaves some process untracked")
        p = np.stack([cand[i][best_idx[i]] for i in range(n)])
        best_val = objective(p, lam)
    else:
        best_val = INFINITE
        p = None
        for combo in itertools.product(*cand):
            candidate = np.stack(combo)
            val = objective_fn(candidate)
            if math.isinf(val):
                continue
            if val < best_val or (
                val == best_val and p is not None and _lex_larger(candidate, p)
            ):
                best_val = val
                p = candidate
        if p is None:
            raise ValueError("every grid combination has an infinite objective")

    cert = kkt_residuals(p, lam, constraints) if objective_fn is None else None
    return AllocationResult(
        correlation=p, objective=float(best_val), certificate=cert, method="grid_search", step=step
    )


def _lex_larger(a: np.ndarray, b: np.ndarray) -> bool:
    fa = a.ravel()
    fb = b.ravel()
    for x, y in zip(fa, fb):
        if x > y:
            return True
        if x < y:
            return False
    return False
