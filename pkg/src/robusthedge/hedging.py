"""Semi-static portfolios on crossing-time grids and their pathwise evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .discretize import CrossingDecomposition, crossing_times, embed_F, u_floor_code
from .marginals import lift_static
from .paths import DomainError, GridPath, SampledPath, running_max, sup_norm


class OutOfTreeError(LookupError):
    def __init__(self, history: GridPath):
        super().__init__(f"embedded history leaves the tree: initial={history.initial}, "
                         f"gaps={list(history.gaps)}, signs={list(history.signs)}")
        self.history = history


@dataclass(frozen=True)
class CrossingPrefix:
    """What a trading rule may see at tau_k: crossing times and values up to index k."""

    N: int
    k: int
    taus: tuple
    values: tuple


@dataclass
class SemiStaticPortfolio:
    """Static payoff g(S_T) plus positions gamma_k held on (tau_k, tau_{k+1}].

    ``gamma`` maps a CrossingPrefix to a position, so it cannot look ahead.
    ``path_gamma`` optionally replaces it with a whole-path rule returning all
    positions at once; it must still only use data up to tau_k for gamma_k.
    """

    N: int
    g: Callable[[float], float]
    gamma: Callable[[CrossingPrefix], float] | None = None
    path_gamma: Callable[[SampledPath, CrossingDecomposition], list] | None = None
    M: float = 1.0
    p: float = 2.0
    label: str = "portfolio"

    def positions(self, S: SampledPath, dec: CrossingDecomposition | None = None) -> list[float]:
        dec = dec or crossing_times(S, self.N)
        if self.path_gamma is not None:
            return list(self.path_gamma(S, dec))
        vals = dec.values_at_taus
        if self.gamma is None:
            return [0.0] * dec.H
        return [float(self.gamma(CrossingPrefix(self.N, k, dec.taus[:k + 1], vals[:k + 1])))
                for k in range(dec.H)]

    def __add__(self, other: "SemiStaticPortfolio") -> "SemiStaticPortfolio":
        if other.N != self.N:
            raise DomainError("portfolios on different grids")

        def both(S, dec):
            return [a + b for a, b in zip(self.positions(S, dec), other.positions(S, dec))]

        return SemiStaticPortfolio(self.N, lambda x: self.g(x) + other.g(x), path_gamma=both,
                                   M=self.M + other.M, p=max(self.p, other.p),
                                   label=f"{self.label}+{other.label}")


def zero_portfolio(N: int) -> SemiStaticPortfolio:
    return SemiStaticPortfolio(N, lambda x: 0.0, label="zero")


def _gains(S: SampledPath, dec: CrossingDecomposition, pos: list[float], t: float) -> float:
    vals = dec.values_at_taus
    total = 0.0
    for k, gk in enumerate(pos):
        a = dec.taus[k]
        if a >= t:
            break
        b = dec.taus[k + 1]
        end = vals[k + 1] if b <= t else S.value(t)
        total += gk * (end - vals[k])
    return total


def portfolio_value(pi: SemiStaticPortfolio, S: SampledPath, t: float | None = None) -> float:
    """Z_t = g(S_T) 1{t = T} + sum_k gamma_k (S_{min(tau_{k+1}, t)} - S_{tau_k})."""
    T = S.horizon
    t = T if t is None else float(t)
    if not 0.0 <= t <= T:
        raise DomainError(f"t={t} outside [0, {T}]")
    dec = crossing_times(S, pi.N)
    z = _gains(S, dec, pi.positions(S, dec), t)
    return z + (float(pi.g(S.terminal)) if t == T else 0.0)


def portfolio_trace(pi: SemiStaticPortfolio, S: SampledPath) -> dict:
    """Positions and running value at every crossing time (g added at T only)."""
    dec = crossing_times(S, pi.N)
    pos = pi.positions(S, dec)
    vals = dec.values_at_taus
    z = np.concatenate([[0.0], np.cumsum([gk * (vals[k + 1] - vals[k]) for k, gk in enumerate(pos)])])
    return {"taus": list(dec.taus), "values": list(vals), "positions": pos, "gains": z.tolist(),
            "terminal_value": float(z[-1] + pi.g(S.terminal))}


# ----------------------------------------------------------------------------- alpha_K hedge

def alpha_static(N: int, K: float, p: float) -> Callable[[float], float]:
    c = p / (p - 1)

    def g(x):
        cx = (c * x) ** p
        return (1.0 + max(cx - c, 0.0)) / K + max(cx - (c * (K - 1)) ** p, 0.0) + 2.0 / N

    return g


def alpha_gamma_terms(prefix: CrossingPrefix, K: float, p: float) -> tuple[float, float]:
    """The two terms of gamma_k: running-max term and the post-theta term."""
    v = np.asarray(prefix.values, dtype=float)
    first = -(p * p / (K * (p - 1))) * float(np.max(v ** (p - 1)))
    hit = np.nonzero(v >= K - 1)[0]
    if hit.size == 0:
        return first, 0.0
    theta = int(hit[0])
    second = -(p * p / (p - 1)) * float(np.max(v[theta:] ** (p - 1)))
    return first, second


def alpha_hedge(N: int, K: float, p: float = 2.0) -> SemiStaticPortfolio:
    """Explicit super-hedge of ||S|| 1{||S|| >= K} + ||S||/K on crossing times."""
    if not p > 1:
        raise DomainError("p must exceed 1")
    if not K > 1:
        raise DomainError("K must exceed 1")
    if not N > K:
        raise DomainError(f"need N > K, got N={N}, K={K}")
    return SemiStaticPortfolio(N, alpha_static(N, K, p), lambda pr: sum(alpha_gamma_terms(pr, K, p)),
                               M=1.0, p=p, label=f"alpha(K={K},p={p})")


def alpha_inequality_margins(N: int, K: float, p: float, S: SampledPath) -> np.ndarray:
    """g(S_t) + int_0^t gamma dS - (Sbar_t/K + Sbar_t 1{Sbar_t >= K}) at each crossing time."""
    pi = alpha_hedge(N, K, p)
    dec = crossing_times(S, N)
    pos = pi.positions(S, dec)
    vals = dec.values_at_taus
    out = []
    gain = 0.0
    for k, t in enumerate(dec.taus):
        if k > 0:
            gain += pos[k - 1] * (vals[k] - vals[k - 1])
        smax = running_max(S, t)
        rhs = smax / K + (smax if smax >= K else 0.0)
        out.append(pi.g(vals[k]) + gain - rhs)
    return np.array(out)


# ----------------------------------------------------------------------------- checks

@dataclass
class SuperReplicationReport:
    margins: list
    admissibility: list
    violations: list = field(default_factory=list)
    tol: float = 1e-9

    @property
    def min_margin(self) -> float:
        return float(min(self.margins)) if self.margins else math.inf

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {"min_margin": self.min_margin, "margins": self.margins,
                "admissibility_ok": all(self.admissibility), "violations": self.violations,
                "tolerance": self.tol}


def check_superreplication(pi: SemiStaticPortfolio, G, paths, tol: float = 1e-9) -> SuperReplicationReport:
    """Z_T - G(S) per path plus the floor Z_t >= -M(1 + sup S^p) at crossing times."""
    margins, adm, viol = [], [], []
    for idx, S in enumerate(paths):
        tr = portfolio_trace(pi, S)
        m = tr["terminal_value"] - float(G(S))
        margins.append(m)
        floor = -pi.M * (1.0 + sup_norm(S) ** pi.p)
        ok_adm = min(tr["gains"]) >= floor - tol
        adm.append(ok_adm)
        if m < -tol:
            viol.append({"path": idx, "kind": "superreplication", "margin": m})
        if not ok_adm:
            viol.append({"path": idx, "kind": "admissibility", "floor": floor, "min_gain": min(tr["gains"])})
    return SuperReplicationReport(margins, adm, viol, tol)


# ----------------------------------------------------------------------------- tree hedge lifting

def lift_tree_hedge(h: dict, gamma: dict, tree, cash: float = 0.0) -> SemiStaticPortfolio:
    """Lift a tree certificate (h on grid levels, gamma per (node, gap code)) to continuous paths.

    On (tau_0, tau_1] the position is the virtual-root position; on
    (tau_k, tau_{k+1}] for k >= 1 it is the tree position at the node reached
    by the embedded path before its k-th jump, for the gap the k-th crossing
    interval snaps to. Balance rows dropped by presolve carry position 0.
    """
    N = tree.N
    g_lift = lift_static(h, N)
    g = (lambda x: cash + g_lift(x)) if cash else g_lift

    def positions(S: SampledPath, dec: CrossingDecomposition):
        F = embed_F(S, N, dec)
        if tree.locate(F) is None:
            raise OutOfTreeError(F)
        pos = [gamma.get((-1, None), 0.0)]
        lvl = F.initial_level
        node = tree.roots[1] if lvl == N + 1 else tree.roots[0]
        for k in range(1, dec.H):
            code = u_floor_code(k, N, dec.taus[k] - dec.taus[k - 1])
            pos.append(gamma.get((node, code), 0.0))
            node = tree.find_child(node, code, F.signs[k - 1])
        return pos

    return SemiStaticPortfolio(N, g, path_gamma=positions, label="lifted-tree-hedge")


def realize_leaf(f: GridPath, lam: float = 1.0, eps: float = 1e-3) -> SampledPath:
    """Continuous piecewise-linear path whose embedding is the grid path ``f``.

    Crossing intervals are stretched slightly past each gap so they snap back
    to it; the final move covers the fraction ``lam`` of 1/N in the last
    jump's direction (lam = 1 lands exactly on the grid at T).
    """
    N, T = f.N, f.T
    levels = f.levels
    if not f.gaps:
        s = levels[0] - N
        return SampledPath(np.array([0.0, T]), np.array([1.0, 1.0 + s * lam / N]))
    total = math.fsum(f.gaps)
    room = T - total
    times, vals = [0.0], [1.0]
    t = 0.0
    for k, gap in enumerate(f.gaps, 1):
        succ = _successor(k, N, gap)
        step = min(eps * (succ - gap), room / (2 * len(f.gaps)))
        t += gap + step
        times.append(t)
        vals.append(levels[k - 1] / N)
    times.append(T)
    vals.append(levels[-2] / N + f.signs[-1] * lam / N)
    return SampledPath(np.array(times), np.array(vals))


def _successor(k: int, N: int, gap: float) -> float:
    """Next element of U_k^(N) above ``gap``."""
    from .discretize import gap_code, gap_value

    fam, i = gap_code(k, N, gap)
    if fam == "A":
        return gap_value(k, N, ("A", i + 1))
    return gap_value(k, N, ("B", i - 1) if i > 2 else ("A", 1))
