"""Terminal laws: validation, grid projection, static lift and Prokhorov distance."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import networkx as nx
import numpy as np

from .paths import ConfigError, DomainError

MASS_TOL = 1e-12


class UnsupportedError(ValueError):
    pass


@dataclass(frozen=True)
class Marginal:
    """Atomic law (``kind='atomic'``: atoms/weights) or piecewise-linear density on knots."""

    kind: str
    x: np.ndarray
    w: np.ndarray
    p: float = 2.0
    mean_tol: float = 1e-9

    @classmethod
    def atomic(cls, atoms, weights, p: float = 2.0, mean_tol: float = 1e-9, validate: bool = True):
        x = np.asarray(atoms, dtype=float)
        w = np.asarray(weights, dtype=float)
        order = np.argsort(x, kind="stable")
        m = cls("atomic", x[order], w[order], p, mean_tol)
        if validate:
            m.validate()
        return m

    @classmethod
    def density(cls, knots, values, p: float = 2.0, mean_tol: float = 1e-9, validate: bool = True):
        m = cls("density", np.asarray(knots, dtype=float), np.asarray(values, dtype=float), p, mean_tol)
        if validate:
            m.validate()
        return m

    def validate(self) -> None:
        if self.x.shape != self.w.shape or self.x.ndim != 1 or self.x.size == 0:
            raise DomainError("marginal needs matching non-empty 1-d arrays")
        if np.any(self.x < 0):
            raise DomainError("marginal support must lie in [0, inf)")
        if self.kind == "atomic":
            if np.any(self.w <= 0):
                raise DomainError("atomic weights must be positive")
        elif self.kind == "density":
            if np.any(np.diff(self.x) <= 0):
                raise DomainError("density knots must be strictly increasing")
            if np.any(self.w < 0):
                raise DomainError("density values must be nonnegative")
        else:
            raise DomainError(f"unknown marginal kind {self.kind!r}")
        if not self.p > 1:
            raise DomainError("moment order p must exceed 1")
        if abs(self.mass - 1.0) > MASS_TOL:
            raise DomainError(f"total mass {self.mass!r} differs from 1")
        if abs(self.mean - 1.0) > self.mean_tol:
            raise DomainError(f"mean {self.mean!r} differs from 1")

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """int f dmu; exact for atoms, Simpson on each density piece (exact for cubics)."""
        if self.kind == "atomic":
            return float(np.sum(self.w * f(self.x)))
        a, b = self.x[:-1], self.x[1:]
        m = 0.5 * (a + b)
        fa, fb, fm = self.w[:-1], self.w[1:], 0.5 * (self.w[:-1] + self.w[1:])
        return float(np.sum((b - a) / 6 * (f(a) * fa + 4 * f(m) * fm + f(b) * fb)))

    @property
    def mass(self) -> float:
        return self.integrate(np.ones_like)

    @property
    def mean(self) -> float:
        return self.integrate(lambda x: x)

    def moment(self, p: float | None = None) -> float:
        p = self.p if p is None else p
        if self.kind == "atomic":
            return float(np.sum(self.w * self.x ** p))
        # int x^p (alpha + beta x) dx in closed form per piece
        tot = 0.0
        for x0, x1, f0, f1 in zip(self.x[:-1], self.x[1:], self.w[:-1], self.w[1:]):
            beta = (f1 - f0) / (x1 - x0)
            alpha = f0 - beta * x0
            tot += alpha * (x1 ** (p + 1) - x0 ** (p + 1)) / (p + 1)
            tot += beta * (x1 ** (p + 2) - x0 ** (p + 2)) / (p + 2)
        return float(tot)

    def call_price(self, K: float) -> float:
        if self.kind == "atomic":
            return self.integrate(lambda x: np.maximum(x - K, 0.0))
        # the kink at K breaks exactness unless K is a knot
        knots = np.union1d(self.x, [K]) if self.x[0] < K < self.x[-1] else self.x
        vals = np.interp(knots, self.x, self.w)
        return Marginal("density", knots, vals, self.p).integrate(lambda x: np.maximum(x - K, 0.0))


@dataclass(frozen=True)
class GridMarginal:
    """Law on {k/N : k >= 0}; ``weights`` maps k to mass."""

    N: int
    weights: Mapping[int, float] = field(default_factory=dict)

    @property
    def support(self) -> list[int]:
        return sorted(self.weights)

    @property
    def mass(self) -> float:
        return math.fsum(self.weights.values())

    @property
    def mean(self) -> float:
        return math.fsum(k / self.N * w for k, w in self.weights.items())

    def as_marginal(self) -> Marginal:
        ks = [k for k in self.support if self.weights[k] > 0]
        return Marginal.atomic([k / self.N for k in ks], [self.weights[k] for k in ks], validate=False)

    def validate(self) -> None:
        if any(w < -MASS_TOL for w in self.weights.values()):
            raise DomainError("grid marginal has negative weight")
        if abs(self.mass - 1.0) > MASS_TOL:
            raise DomainError("grid marginal mass differs from 1")


def _hat(N: int, k: int):
    return lambda x: np.maximum(0.0, 1.0 - np.abs(N * np.asarray(x) - k))


def project_marginal(mu: Marginal, N: int, drop_below: float = 0.0) -> GridMarginal:
    """Hat-function projection onto the 1/N grid.

    Each grid point k/N receives int max(0, 1 - |Nx - k|) dmu. An atom on a
    grid point goes entirely to that point.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    out: dict[int, float] = {}
    if mu.kind == "atomic":
        for x, w in zip(mu.x, mu.w):
            y = N * x
            k = math.floor(y)
            frac = y - k
            out[k] = out.get(k, 0.0) + w * (1.0 - frac)
            if frac > 0:
                out[k + 1] = out.get(k + 1, 0.0) + w * frac
    else:
        # refine knots at grid points so hat * density is quadratic on every piece
        lo, hi = mu.x[0], mu.x[-1]
        grid = np.arange(math.floor(N * lo), math.ceil(N * hi) + 1) / N
        knots = np.union1d(mu.x, grid[(grid > lo) & (grid < hi)])
        dens = np.interp(knots, mu.x, mu.w)
        refined = Marginal("density", knots, dens, mu.p)
        for k in range(math.floor(N * lo), math.ceil(N * hi) + 1):
            if k < 0:
                continue
            v = refined.integrate(_hat(N, k))
            if v != 0.0:
                out[k] = v
    return GridMarginal(N, {k: v for k, v in sorted(out.items()) if v > drop_below})


def lift_static(h: Callable[[int], float] | Mapping[int, float], N: int) -> Callable[[float], float]:
    """Linear interpolation of a grid function h (indexed by k, value at k/N).

    Grid points missing from a mapping count as 0.
    """
    get = (lambda k: h.get(k, 0.0)) if isinstance(h, Mapping) else h

    def g(x):
        y = N * float(x)
        k = math.floor(y)
        frac = y - k
        val = (1.0 - frac) * get(k)
        if frac:
            val += frac * get(k + 1)
        return val

    return g


@dataclass(frozen=True)
class PairingCheck:
    lhs: float
    rhs: float
    ok: bool


def pairing_identity_check(h, mu: Marginal, N: int) -> PairingCheck:
    """int h dmu^(N) against int L^(N)(h) dmu."""
    get = (lambda k: h.get(k, 0.0)) if isinstance(h, Mapping) else h
    proj = project_marginal(mu, N)
    lhs = math.fsum(w * get(k) for k, w in proj.weights.items())
    g = lift_static(h, N)
    if mu.kind == "atomic":
        rhs = math.fsum(float(wi) * g(xi) for xi, wi in zip(mu.x, mu.w))
    else:
        # g is linear between grid points; integrate on the refined knot set
        lo, hi = mu.x[0], mu.x[-1]
        grid = np.arange(math.floor(N * lo), math.ceil(N * hi) + 1) / N
        knots = np.union1d(mu.x, grid[(grid > lo) & (grid < hi)])
        refined = Marginal("density", knots, np.interp(knots, mu.x, mu.w), mu.p)
        rhs = refined.integrate(np.vectorize(g, otypes=[float]))
    return PairingCheck(lhs, rhs, abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs)))


def _excess(a_x, a_w, b_x, b_w, radius: float, tol: float) -> float:
    """max over A of a(A) - b(closed radius-neighbourhood of A), via max-flow."""
    G = nx.DiGraph()
    for i, w in enumerate(a_w):
        G.add_edge("s", ("a", i), capacity=float(w))
    for j, w in enumerate(b_w):
        G.add_edge(("b", j), "t", capacity=float(w))
    close = np.abs(a_x[:, None] - b_x[None, :]) <= radius + tol
    for i, j in zip(*np.nonzero(close)):
        G.add_edge(("a", int(i)), ("b", int(j)))  # no capacity attribute: infinite
    if "t" not in G:
        return float(np.sum(a_w))
    flow = nx.maximum_flow_value(G, "s", "t")
    return max(0.0, float(np.sum(a_w)) - flow)


def prokhorov_distance(a: Marginal | GridMarginal, b: Marginal | GridMarginal, tol: float = 1e-12) -> float:
    """Exact Prokhorov distance between atomic laws on the real line.

    On each interval (d_j, d_{j+1}] between consecutive pairwise atom distances
    the open delta-neighbourhood of a set is its closed d_j-neighbourhood, so
    the feasibility condition reduces to delta >= F_j with F_j the largest mass
    excess, computed by max-flow. The answer is min_j max(F_j, d_j) over
    intervals where that value stays inside the interval.
    """
    a = a.as_marginal() if isinstance(a, GridMarginal) else a
    b = b.as_marginal() if isinstance(b, GridMarginal) else b
    if a.kind != "atomic" or b.kind != "atomic":
        raise UnsupportedError("Prokhorov distance needs atomic inputs; discretize densities first")
    d = np.unique(np.abs(a.x[:, None] - b.x[None, :]))
    d = np.unique(np.concatenate([[0.0], d]))
    best = 1.0
    for j, dj in enumerate(d):
        if dj >= best:
            break
        upper = d[j + 1] if j + 1 < len(d) else math.inf
        F = max(_excess(a.x, a.w, b.x, b.w, dj, tol), _excess(b.x, b.w, a.x, a.w, dj, tol))
        cand = max(F, dj)
        if cand <= upper:
            best = min(best, cand)
    return float(best)


def read_marginal_csv(src, p: float = 2.0, mean_tol: float = 1e-9) -> Marginal:
    with open(src, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{src}: empty marginal file")
    head = [c.strip().lower() for c in rows[0]]
    if head not in (["x", "weight"], ["x", "density"]):
        raise ConfigError(f"{src}: header must be 'x,weight' or 'x,density'")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{src}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != 2:
        raise ConfigError(f"{src}: expected two columns")
    if head[1] == "weight":
        return Marginal.atomic(data[:, 0], data[:, 1], p, mean_tol)
    return Marginal.density(data[:, 0], data[:, 1], p, mean_tol)


def write_marginal_csv(mu: Marginal, dest) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "weight" if mu.kind == "atomic" else "density"])
        for x, v in zip(mu.x, mu.w):
            w.writerow([repr(float(x)), repr(float(v))])
