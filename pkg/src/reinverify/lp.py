"""Dense two-phase primal simplex.

Solves ``min c.x  s.t.  A_ub x <= b_ub,  A_eq x == b_eq,  lb <= x <= ub``.
Pivoting uses Dantzig's rule and falls back to Bland's rule once a run of
degenerate pivots suggests cycling.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
DEGENERATE_RUN = 50


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: Optional[np.ndarray] = None
    fun: Optional[float] = None
    iterations: int = 0

    @property
    def feasible(self):
        return self.status != "infeasible"


class _Tableau:
    """Simplex tableau with an explicit basis; last row is the reduced cost."""

    def __init__(self, T, basis):
        self.T = T
        self.basis = basis
        self.iterations = 0

    def pivot(self, row, col):
        T = self.T
        T[row] /= T[row, col]
        col_vals = T[:, col].copy()
        col_vals[row] = 0.0
        nz = np.flatnonzero(np.abs(col_vals) > 0)
        if len(nz):
            T[nz] -= np.outer(col_vals[nz], T[row])
        self.basis[row] = col
        self.iterations += 1

    def run(self, allowed, max_iter):
        """Minimize the objective row over the columns flagged in ``allowed``."""
        T = self.T
        m = T.shape[0] - 1
        degenerate = 0
        for _ in range(max_iter):
            cost = T[-1, :-1]
            candidates = np.flatnonzero((cost < -PIVOT_TOL) & allowed)
            if len(candidates) == 0:
                return "optimal"
            bland = degenerate >= DEGENERATE_RUN
            col = candidates[0] if bland else candidates[np.argmin(cost[candidates])]
            column = T[:m, col]
            pos = column > PIVOT_TOL
            if not np.any(pos):
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = T[:m, -1][pos] / column[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-12)
            if bland:
                row = ties[np.argmin(self.basis[ties])]
            else:
                row = ties[np.argmax(column[ties])]
            degenerate = degenerate + 1 if best <= 1e-12 else 0
            self.pivot(row, col)
        raise RuntimeError("simplex iteration limit reached")


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None, max_iter=None):
    """Solve a small dense LP; ``bounds`` is a list of (lo, hi) with None or inf for open."""
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    if bounds is not None:
        for j, (a, b) in enumerate(bounds):
            lo[j] = -np.inf if a is None else a
            hi[j] = np.inf if b is None else b
    if np.any(lo > hi + FEAS_TOL):
        return LPResult("infeasible")

    # Map x to non-negative columns: x = shift + M @ u
    cols = []  # (orig index, sign)
    shift = np.zeros(n)
    extra_ub = []  # (column, limit) pairs for finite ranges
    for j in range(n):
        if np.isfinite(lo[j]):
            shift[j] = lo[j]
            cols.append((j, 1.0))
            if np.isfinite(hi[j]):
                extra_ub.append((len(cols) - 1, hi[j] - lo[j]))
        elif np.isfinite(hi[j]):
            shift[j] = hi[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nu = len(cols)
    M = np.zeros((n, nu))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s

    A1 = A_ub @ M
    r1 = b_ub - A_ub @ shift
    if extra_ub:
        E = np.zeros((len(extra_ub), nu))
        for r, (k, lim) in enumerate(extra_ub):
            E[r, k] = 1.0
        A1 = np.vstack([A1, E])
        r1 = np.concatenate([r1, [lim for _, lim in extra_ub]])
    A2 = A_eq @ M
    r2 = b_eq - A_eq @ shift
    cu = c @ M
    offset = float(c @ shift)

    m1, m2 = A1.shape[0], A2.shape[0]
    m = m1 + m2
    if m == 0:
        if np.any(cu < -PIVOT_TOL):
            return LPResult("unbounded")
        return LPResult("optimal", shift.copy(), offset)

    # rows: [A1 | I_slack], [A2 | 0]; flip rows with negative rhs
    A = np.zeros((m, nu + m1))
    A[:m1, :nu] = A1
    A[:m1, nu:] = np.eye(m1)
    A[m1:, :nu] = A2
    rhs = np.concatenate([r1, r2])
    neg = rhs < 0
    A[neg] *= -1
    rhs[neg] *= -1

    # slack columns that stay +1 can start basic; everything else gets an artificial
    basis = np.full(m, -1)
    for i in range(m1):
        if not neg[i]:
            basis[i] = nu + i
    need = np.flatnonzero(basis < 0)
    na = len(need)
    width = nu + m1 + na
    T = np.zeros((m + 1, width + 1))
    T[:m, :nu + m1] = A
    for k, i in enumerate(need):
        T[i, nu + m1 + k] = 1.0
        basis[i] = nu + m1 + k
    T[:m, -1] = rhs
    limit = max_iter or 50 * (m + width) + 1000
    tab = _Tableau(T, basis)

    if na:
        # phase one: minimize the sum of artificials
        T[-1, :] = 0.0
        T[-1, nu + m1:width] = 1.0
        for i in need:
            T[-1] -= T[i]
        allowed = np.ones(width, dtype=bool)
        tab.run(allowed, limit)
        if -T[-1, -1] > FEAS_TOL * max(1.0, np.abs(rhs).max()):
            return LPResult("infeasible", iterations=tab.iterations)
        # drive artificials out of the basis where possible
        for i in range(m):
            if basis[i] >= nu + m1:
                row = T[i, :nu + m1]
                nz = np.flatnonzero(np.abs(row) > PIVOT_TOL)
                if len(nz):
                    tab.pivot(i, nz[0])
        keep = basis < nu + m1
        T = np.vstack([T[:m][keep], T[-1:]])
        T = np.delete(T, np.s_[nu + m1:width], axis=1)
        tab = _Tableau(T, basis[keep].copy())
        tab.iterations = 0
        m = T.shape[0] - 1

    # phase two
    T = tab.T
    T[-1, :] = 0.0
    T[-1, :nu] = cu
    for i, b in enumerate(tab.basis):
        if T[-1, b] != 0.0:
            T[-1] -= T[-1, b] * T[i]
    status = tab.run(np.ones(T.shape[1] - 1, dtype=bool), limit)
    if status == "unbounded":
        return LPResult("unbounded", iterations=tab.iterations)
    u = np.zeros(T.shape[1] - 1)
    u[tab.basis] = T[:m, -1]
    x = shift + M @ u[:nu]
    return LPResult("optimal", x, float(c @ x), tab.iterations)
