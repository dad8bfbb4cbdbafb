"""Independent reference computations used by the tests.

Nothing here calls into the package's solvers, projections or distance code;
the oracles rebuild each quantity from its definition.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy import integrate, optimize


# ---------------------------------------------------------------- LP by vertex enumeration

def vertex_enumeration(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, free=None, maximize=False,
                       tol=1e-9):
    """Optimal value of a small bounded LP by checking every basic solution.

    Returns None when no vertex is feasible. The caller must make sure the
    feasible region is bounded (a polytope), so the optimum sits at a vertex.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    free = np.zeros(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float)
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float)
    # inequality rows a.x <= b, including x_j >= 0 written as -x_j <= 0
    bound_rows = np.array([-np.eye(n)[j] for j in range(n) if not free[j]]).reshape(-1, n)
    G = np.vstack([A_ub, bound_rows])
    h = np.concatenate([b_ub, np.zeros(bound_rows.shape[0])])
    best = None
    need = n - A_eq.shape[0]
    if need < 0:
        need = 0
    for active in itertools.combinations(range(G.shape[0]), need):
        M = np.vstack([A_eq, G[list(active)]])
        r = np.concatenate([b_eq, h[list(active)]])
        if M.shape[0] != n or np.linalg.cond(M) > 1e12:
            continue
        x = np.linalg.solve(M, r)
        if A_eq.size and np.max(np.abs(A_eq @ x - b_eq)) > tol:
            continue
        if G.size and np.max(G @ x - h) > tol:
            continue
        v = float(c @ x)
        if best is None or (v > best if maximize else v < best):
            best = v
    return best


# ---------------------------------------------------------------- gap menus

def menu_elements(k: int, N: int, count: int) -> list[Fraction]:
    """First ``count`` indices of both families of U_k^(N), as exact fractions."""
    d = (2 ** k) * N
    out = {Fraction(i, d) for i in range(1, count + 1)}
    out |= {Fraction(1, i * d) for i in range(1, count + 1)}
    return sorted(out)


def u_floor_enumerated(k: int, N: int, x) -> Fraction:
    """max{u in U_k^(N) : u < x} by scanning an explicit, large-enough menu."""
    x = Fraction(x)
    d = (2 ** k) * N
    count = int(max(x * d, 1 / (x * d))) + 3
    below = [u for u in menu_elements(k, N, count) if u < x]
    return max(below)


# ---------------------------------------------------------------- hat projection

def hat_projection_atomic(atoms, weights, N: int) -> dict:
    """Grid weights by exact rational arithmetic on the hat functions."""
    out: dict[int, Fraction] = {}
    for x, w in zip(atoms, weights):
        x, w = Fraction(x), Fraction(w)
        lo = math.floor(x * N)
        for k in (lo - 1, lo, lo + 1, lo + 2):
            if k < 0:
                continue
            hat = max(Fraction(0), 1 - abs(N * x - k))
            if hat:
                out[k] = out.get(k, Fraction(0)) + w * hat
    return {k: float(v) for k, v in sorted(out.items())}


def hat_projection_density(knots, dens, N: int) -> dict:
    """Grid weights of a piecewise-linear density by adaptive quadrature."""
    knots = np.asarray(knots, float)
    dens = np.asarray(dens, float)
    f = lambda x: float(np.interp(x, knots, dens, left=0.0, right=0.0))
    out = {}
    for k in range(max(0, math.floor(N * knots[0]) - 1), math.ceil(N * knots[-1]) + 2):
        a, b = max((k - 1) / N, knots[0]), min((k + 1) / N, knots[-1])
        if b <= a:
            continue
        pts = [p for p in (*knots, k / N) if a < p < b]
        v, _ = integrate.quad(lambda x: f(x) * max(0.0, 1 - abs(N * x - k)), a, b,
                              points=pts or None, epsabs=1e-14, epsrel=1e-13, limit=200)
        if v > 0:
            out[k] = v
    return out


# ---------------------------------------------------------------- Prokhorov by subsets

def prokhorov_bruteforce(ax, aw, bx, bw, tol=1e-12) -> float:
    """Prokhorov distance of two atomic laws by subset enumeration and bisection.

    For a candidate delta every subset A of either support is checked against
    the open delta-neighbourhood of A in the other measure.
    """
    ax, aw, bx, bw = map(lambda v: np.asarray(v, float), (ax, aw, bx, bw))

    def ok(delta):
        for (px, pw, qx, qw) in ((ax, aw, bx, bw), (bx, bw, ax, aw)):
            for r in range(1, len(px) + 1):
                for A in itertools.combinations(range(len(px)), r):
                    near = np.zeros(len(qx), dtype=bool)
                    for i in A:
                        near |= np.abs(qx - px[i]) < delta
                    if pw[list(A)].sum() > qw[near].sum() + delta + tol:
                        return False
        return True

    lo, hi = 0.0, 1.0
    if ok(0.0):
        return 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------- tree LP rebuilt from leaf histories

def tree_primal_highs(paths, payoffs, nu: dict, N: int):
    """max sum q G over leaves, with balance rows built from path prefixes.

    ``paths`` are GridPath objects (one per leaf), ``nu`` maps grid level to mass.
    A balance row exists for the start (root sign) and for every
    (prefix, next gap) that some leaf continues with; it requires equal up and
    down mass below it. Solved by HiGHS via scipy.
    """
    keys = []
    for f in paths:
        keys.append((round(f.initial * N) - N,
                     tuple((round(g * 2 ** (k + 1) * N * 1e6), s)
                           for k, (g, s) in enumerate(zip(f.gaps, f.signs)))))
    rows = {("root",): np.zeros(len(paths))}
    for j, (r0, hist) in enumerate(keys):
        rows[("root",)][j] = r0
        for k, (g, s) in enumerate(hist):
            key = (r0, hist[:k], g)
            rows.setdefault(key, np.zeros(len(paths)))[j] += s
    A = np.array(list(rows.values()))
    levels = np.array([round(f.terminal * N) for f in paths])
    P = np.array([(levels == x).astype(float) for x in sorted(nu)])
    A_eq = np.vstack([A, P])
    b_eq = np.concatenate([np.zeros(A.shape[0]), [nu[x] for x in sorted(nu)]])
    extra = sorted(set(levels.tolist()) - set(nu))
    if extra:
        Z = np.array([(levels == x).astype(float) for x in extra])
        A_eq = np.vstack([A_eq, Z])
        b_eq = np.concatenate([b_eq, np.zeros(len(extra))])
    res = optimize.linprog(-np.asarray(payoffs, float), A_eq=A_eq, b_eq=b_eq,
                           bounds=[(0, None)] * len(paths), method="highs")
    return (-res.fun if res.status == 0 else None), res.status
