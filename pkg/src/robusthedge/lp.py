"""Dense two-phase simplex with Bland's anti-cycling rule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILURE = "solver-failure"


@dataclass
class LinearProgram:
    """max/min c.x  s.t.  A_eq x = b_eq, A_ub x <= b_ub, x_j >= 0 unless free[j]."""

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    free: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.atleast_2d(np.asarray(self.A_eq, dtype=float))
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float)
        self.A_ub = np.zeros((0, n)) if self.A_ub is None else np.atleast_2d(np.asarray(self.A_ub, dtype=float))
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float)
        self.free = np.zeros(n, dtype=bool) if self.free is None else np.asarray(self.free, dtype=bool)

    @property
    def n(self) -> int:
        return self.c.size

    def residuals(self, x: np.ndarray) -> dict:
        eq = float(np.max(np.abs(self.A_eq @ x - self.b_eq))) if self.b_eq.size else 0.0
        ub = float(max(0.0, np.max(self.A_ub @ x - self.b_ub))) if self.b_ub.size else 0.0
        neg = x[~self.free]
        bnd = float(max(0.0, -neg.min())) if neg.size else 0.0
        return {"equality": eq, "inequality": ub, "bounds": bnd}


@dataclass
class LPSolution:
    status: str
    value: float = float("nan")
    x: np.ndarray | None = None
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    nz = np.nonzero(np.abs(col) > 0)[0]
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])


def _run(T, basis, ncols, max_iter, tol, it0):
    """Minimize the objective in the last row of T over the first ``ncols`` columns."""
    it = it0
    m = T.shape[0] - 1
    while True:
        red = T[-1, :ncols]
        cand = np.nonzero(red < -tol)[0]
        if cand.size == 0:
            return OPTIMAL, it
        if it >= max_iter:
            return FAILURE, it
        j = int(cand[0])  # Bland: lowest index entering
        colj = T[:m, j]
        pos = np.nonzero(colj > tol)[0]
        if pos.size == 0:
            return UNBOUNDED, it
        ratios = T[pos, -1] / colj[pos]
        rmin = ratios.min()
        ties = pos[ratios <= rmin + tol * max(1.0, abs(rmin))]
        # Bland: among ties leave the lowest-index basic variable
        r = int(ties[np.argmin(basis[ties])])
        _pivot(T, r, j)
        basis[r] = j
        it += 1


def solve_lp(lp: LinearProgram, max_iter: int = 200_000, tol: float = 1e-10) -> LPSolution:
    """Solve ``lp`` by the two-phase tableau simplex.

    Free variables are split into positive and negative parts, inequality rows
    get slacks, and every row gets an artificial in phase one. Artificials that
    stay basic at level zero are pivoted out, or their row is dropped when it is
    a linear combination of the others.
    """
    n = lp.n
    free_idx = np.nonzero(lp.free)[0]
    n_split = n + free_idx.size
    m_eq, m_ub = lp.b_eq.size, lp.b_ub.size
    m = m_eq + m_ub
    n_std = n_split + m_ub

    A = np.zeros((m, n_std))
    A[:m_eq, :n] = lp.A_eq
    A[m_eq:, :n] = lp.A_ub
    A[:m_eq, n:n_split] = -lp.A_eq[:, free_idx]
    A[m_eq:, n:n_split] = -lp.A_ub[:, free_idx]
    A[m_eq:, n_split:] = np.eye(m_ub)
    b = np.concatenate([lp.b_eq, lp.b_ub])
    c = np.zeros(n_std)
    c[:n] = -lp.c if lp.maximize else lp.c
    c[n:n_split] = -c[free_idx]

    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    if m == 0:
        if np.any(c < -tol):
            return LPSolution(UNBOUNDED, message="no constraints")
        x = np.zeros(n)
        return LPSolution(OPTIMAL, 0.0, x, 0, lp.residuals(x))

    # phase one tableau: [A | I | b], objective = -sum of rows
    T = np.zeros((m + 1, n_std + m + 1))
    T[:m, :n_std] = A
    T[:m, n_std:n_std + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n_std] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(n_std, n_std + m)

    status, it = _run(T, basis, n_std + m, max_iter, tol, 0)
    if status == FAILURE:
        return LPSolution(FAILURE, iterations=it, message="iteration guard tripped in phase one")
    scale = max(1.0, float(np.abs(b).max()))
    if -T[-1, -1] > 1e-9 * scale:
        return LPSolution(INFEASIBLE, iterations=it, message=f"phase-one residual {-T[-1, -1]:.3e}")

    # drive zero-level artificials out of the basis
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= n_std:
            row = T[r, :n_std]
            cand = np.nonzero(np.abs(row) > 1e-9)[0]
            if cand.size:
                j = int(cand[np.argmax(np.abs(row[cand]))])
                _pivot(T, r, j)
                basis[r] = j
            else:
                keep[r] = False
    rows = np.nonzero(keep)[0]
    T2 = np.zeros((rows.size + 1, n_std + 1))
    T2[:-1, :n_std] = T[rows, :n_std]
    T2[:-1, -1] = T[rows, -1]
    basis = basis[rows]
    T2[-1, :n_std] = c
    for r, j in enumerate(basis):
        if c[j] != 0.0:
            T2[-1] -= c[j] * T2[r]

    status, it = _run(T2, basis, n_std, max_iter, tol, it)
    if status != OPTIMAL:
        msg = "iteration guard tripped in phase two" if status == FAILURE else "objective unbounded"
        return LPSolution(status, iterations=it, message=msg)
    xs = np.zeros(n_std)
    xs[basis] = T2[:-1, -1]
    x = xs[:n].copy()
    x[free_idx] -= xs[n:n_split]
    value = float(lp.c @ x)
    return LPSolution(OPTIMAL, value, x, it, lp.residuals(x))

