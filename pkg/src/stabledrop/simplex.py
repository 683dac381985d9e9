"""Dense two-phase simplex for equality-form LPs with nonnegative variables.

Solves ``max c.x  s.t.  A x = b, x >= 0``. Small dense problems only; the
equilibrium systems this package builds have tens of rows and a few hundred
columns. Dantzig pivoting with a permanent switch to Bland's rule after a
run of degenerate pivots guards against cycling. Unboundedness is certified
by an entering column with no positive entries (an unbounded ray).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LpNumericalFailure

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
MAX_ITER = 20000
DEGENERATE_RUN = 50

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None = None
    value: float | None = None


def _pivot(T, basis, r, j):
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = j


def _iterate(T, basis, ncols):
    """Run simplex iterations on a tableau whose last row is reduced costs.

    Returns "optimal" or "unbounded". Minimization convention: enter while
    some reduced cost is below -PIVOT_TOL.
    """
    m = T.shape[0] - 1
    bland = False
    degenerate = 0
    for _ in range(MAX_ITER):
        costs = T[m, :ncols]
        if bland:
            elig = np.flatnonzero(costs < -PIVOT_TOL)
            if elig.size == 0:
                return OPTIMAL
            j = int(elig[0])
        else:
            j = int(np.argmin(costs))
            if costs[j] >= -PIVOT_TOL:
                return OPTIMAL
        col = T[:m, j]
        pos = col > PIVOT_TOL
        if not np.any(pos):
            return UNBOUNDED
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + PIVOT_TOL)
        if bland:
            # smallest basis index among ties keeps Bland's rule honest
            r = int(min(ties, key=lambda i: basis[i]))
        else:
            # largest pivot element among ties; tiny pivots amplify noise
            r = int(ties[np.argmax(col[ties])])
        if rmin <= PIVOT_TOL:
            degenerate += 1
            if degenerate >= DEGENERATE_RUN:
                bland = True
        else:
            degenerate = 0
        _pivot(T, basis, r, j)
        rhs = T[:m, -1]
        drift = rhs < 0.0
        if np.any(drift):
            if rhs[drift].min() < -1e-6:
                raise LpNumericalFailure("tableau lost primal feasibility")
            rhs[drift] = 0.0
    raise LpNumericalFailure("simplex iteration limit reached")


def _phase_one(A, b):
    """Find a basic feasible solution; returns (T, basis) or None if infeasible."""
    m, n = A.shape
    sgn = np.where(b < 0.0, -1.0, 1.0)
    A1 = A * sgn[:, None]
    b1 = b * sgn
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A1
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b1
    # reduced costs for min(sum of artificials) with artificial basis
    T[m, :n] = -A1.sum(axis=0)
    T[m, -1] = -b1.sum()
    basis = list(range(n, n + m))

    status = _iterate(T, basis, n + m)
    if status != OPTIMAL:
        raise LpNumericalFailure("phase-1 cannot be unbounded")
    resid = -T[m, -1]
    if resid > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
        return None

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for i in range(m):
        if basis[i] < n:
            keep.append(i)
            continue
        row = T[i, :n]
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > PIVOT_TOL:
            _pivot(T, basis, i, j)
            keep.append(i)
        # else: redundant constraint, row dropped
    rows = keep + [m]
    T = T[np.ix_(rows, list(range(n)) + [n + m])]
    basis = [basis[i] for i in keep]
    return T, basis


def solve_lp(A, b, c):
    """Maximize ``c.x`` subject to ``A x = b``, ``x >= 0``.

    Returns LpResult with status "optimal" (x, value), "infeasible", or
    "unbounded".
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    if n == 0:
        ok = np.all(np.abs(b) <= FEAS_TOL)
        return LpResult(OPTIMAL, np.zeros(0), 0.0) if ok else LpResult(INFEASIBLE)
    if m == 0:
        if np.any(c > PIVOT_TOL):
            return LpResult(UNBOUNDED)
        return LpResult(OPTIMAL, np.zeros(n), 0.0)

    got = _phase_one(A, b)
    if got is None:
        return LpResult(INFEASIBLE)
    T, basis = got
    mm = T.shape[0] - 1

    # phase 2 reduced costs for min(-c)
    c2 = -c
    cb = c2[basis]
    T[mm, :n] = c2 - cb @ T[:mm, :n]
    T[mm, -1] = -(cb @ T[:mm, -1])
    status = _iterate(T, basis, n)
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED)
    x = np.zeros(n)
    xb = T[:mm, -1]
    for i, j in enumerate(basis):
        x[j] = xb[i]
    return LpResult(OPTIMAL, x, float(c @ x))


def feasible(A, b):
    """True when ``{x >= 0 : A x = b}`` is nonempty."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[1] == 0:
        return bool(np.all(np.abs(b) <= FEAS_TOL))
    if A.shape[0] == 0:
        return True
    return _phase_one(A, b) is not None
