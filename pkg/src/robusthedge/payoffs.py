"""Path-dependent claims with tracked sup-norm Lipschitz constants."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .discretize import embed_F
from .paths import ConfigError, DomainError, Profile, SampledPath, sup_norm


def _profile(path) -> Profile:
    return path if isinstance(path, Profile) else path.profile()


def _growth_integral(r: float, h: float) -> tuple[float, float]:
    """(int_0^h e^{ru} du, int_0^h u e^{ru} du)."""
    if r == 0.0:
        return h, 0.5 * h * h
    rh = r * h
    i0 = math.expm1(rh) / r
    if abs(rh) < 1e-4:
        i1 = h * h * (0.5 + rh / 3 + rh * rh / 8)
    else:
        i1 = (rh * math.exp(rh) - math.expm1(rh)) / (r * r)
    return i0, i1


@dataclass(frozen=True)
class PathStats:
    """Discounted path statistics: e^{rT}S_T, min/max of e^{rt}S_t, int e^{rt}S_t dt."""

    terminal: float
    minimum: float
    maximum: float
    integral: float
    horizon: float


def path_stats(path, rate: float = 0.0) -> PathStats:
    p = _profile(path)
    t0, t1 = p.times[:-1], p.times[1:]
    a, b = p.right, p.left
    T = p.horizon
    if rate == 0.0:
        mx = max(p.at0, p.atT, a.max(), b.max())
        mn = min(p.at0, p.atT, a.min(), b.min())
        integral = float(np.sum(0.5 * (a + b) * (t1 - t0)))
        return PathStats(p.atT, float(mn), float(mx), integral, T)
    g0, g1 = np.exp(rate * t0), np.exp(rate * t1)
    cand = [p.at0, p.atT * math.exp(rate * T), *(a * g0), *(b * g1)]
    integral = 0.0
    for lo, hi, va, vb in zip(t0, t1, a, b):
        h = hi - lo
        s = (vb - va) / h
        i0, i1 = _growth_integral(rate, h)
        integral += math.exp(rate * lo) * (va * i0 + s * i1)
        if s != 0.0:
            # stationary point of e^{ru}(va + s u)
            u = -(va / s + 1.0 / rate)
            if 0.0 < u < h:
                cand.append(math.exp(rate * (lo + u)) * (va + s * u))
    return PathStats(p.atT * math.exp(rate * T), float(min(cand)), float(max(cand)), integral, T)


class Claim:
    """A payoff functional G on paths with Lipschitz constant ``lipschitz``."""

    kind = "claim"
    horizon: float = 1.0

    def __call__(self, path) -> float:
        raise NotImplementedError

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError

    @property
    def terminal_only(self) -> bool:
        return False

    def terminal_payoff(self, x):
        raise TypeError(f"{self.kind} is path dependent")


@dataclass(frozen=True)
class VanillaCall(Claim):
    K: float
    rate: float = 0.0
    horizon: float = 1.0
    kind = "vanilla-call"

    def __call__(self, path) -> float:
        p = _profile(path)
        return max(p.atT - self.K * math.exp(-self.rate * p.horizon), 0.0)

    @property
    def lipschitz(self) -> float:
        return 1.0

    @property
    def terminal_only(self) -> bool:
        return True

    def terminal_payoff(self, x):
        return np.maximum(np.asarray(x, dtype=float) - self.K * math.exp(-self.rate * self.horizon), 0.0)


@dataclass(frozen=True)
class TerminalLinear(Claim):
    """G(S) = S_T."""

    horizon: float = 1.0
    kind = "terminal"

    def __call__(self, path) -> float:
        return float(_profile(path).atT)

    @property
    def lipschitz(self) -> float:
        return 1.0

    @property
    def terminal_only(self) -> bool:
        return True

    def terminal_payoff(self, x):
        return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class LookbackMax(Claim):
    rate: float = 0.0
    horizon: float = 1.0
    kind = "lookback-max"

    def __call__(self, path) -> float:
        st = path_stats(path, self.rate)
        return math.exp(-self.rate * st.horizon) * st.maximum

    @property
    def lipschitz(self) -> float:
        return max(1.0, self.rate)


@dataclass(frozen=True)
class LookbackPutOnMax(Claim):
    K: float
    rate: float = 0.0
    horizon: float = 1.0
    kind = "lookback-put-on-max"

    def __call__(self, path) -> float:
        st = path_stats(path, self.rate)
        return max(self.K * math.exp(-self.rate * st.horizon) - math.exp(-self.rate * st.horizon) * st.maximum, 0.0)

    @property
    def lipschitz(self) -> float:
        return max(1.0, self.rate)


@dataclass(frozen=True)
class AsianAverage(Claim):
    """Discounted average e^{-rT} (1/T) int_0^T e^{rt} S_t dt."""

    rate: float = 0.0
    horizon: float = 1.0
    kind = "asian-average"

    def __call__(self, path) -> float:
        st = path_stats(path, self.rate)
        return math.exp(-self.rate * st.horizon) * st.integral / st.horizon

    @property
    def lipschitz(self) -> float:
        # jump-time clause carries 1/T (times 1 + rT for the growth factor)
        return max(1.0, (1.0 + self.rate * self.horizon) / self.horizon)


@dataclass(frozen=True)
class Composite(Claim):
    """e^{-rT} H(e^{rT}S_T, min e^{rt}S_t, max e^{rt}S_t, int e^{rt}S_t dt).

    ``lipschitz_H`` is the Lipschitz constant of H in the l1 norm on R^4.
    """

    H: Callable[[float, float, float, float], float]
    lipschitz_H: float
    rate: float = 0.0
    horizon: float = 1.0
    kind = "custom-composite"

    def __call__(self, path) -> float:
        st = path_stats(path, self.rate)
        return math.exp(-self.rate * st.horizon) * self.H(st.terminal, st.minimum, st.maximum, st.integral)

    @property
    def lipschitz(self) -> float:
        r, T = self.rate, self.horizon
        return self.lipschitz_H * max(3.0 + T, 1.0 + 2.0 * r + r * T)


@dataclass(frozen=True)
class AlphaClaim(Claim):
    """||S|| 1{||S|| >= K} + ||S|| / K; discontinuous at ||S|| = K."""

    K: float
    horizon: float = 1.0
    kind = "alpha"

    def __post_init__(self):
        if not self.K > 1:
            raise DomainError(f"alpha claim needs K > 1, got {self.K}")

    def __call__(self, path) -> float:
        s = sup_norm(path)
        return (s if s >= self.K else 0.0) + s / self.K

    @property
    def lipschitz(self) -> float:
        return math.inf


def alpha_claim(K: float) -> AlphaClaim:
    return AlphaClaim(K)


@dataclass(frozen=True)
class Truncated(Claim):
    """G ^ K."""

    inner: Claim
    cap: float
    kind = "truncated"

    def __call__(self, path) -> float:
        return min(self.inner(path), self.cap)

    @property
    def lipschitz(self) -> float:
        return self.inner.lipschitz

    @property
    def horizon(self):
        return self.inner.horizon


@dataclass(frozen=True)
class Floored(Claim):
    """G v (-c)."""

    inner: Claim
    c: float
    kind = "floored"

    def __call__(self, path) -> float:
        return max(self.inner(path), -self.c)

    @property
    def lipschitz(self) -> float:
        return self.inner.lipschitz

    @property
    def horizon(self):
        return self.inner.horizon


def truncate_above(G: Claim, K: float) -> Claim:
    return Truncated(G, float(K))


def floor_below(G: Claim, c: float) -> Claim:
    return Floored(G, float(c))


def eval_claim(G: Claim, path) -> float:
    return float(G(path))


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    ok: bool


def discrepancy_bound_check(G: Claim, S: SampledPath, N: int) -> BoundCheck:
    """|G(S) - G(F(S))| against 4 L ||S|| / N."""
    F = embed_F(S, N)
    lhs = abs(G(S) - G(F.to_step()))
    rhs = 4.0 * G.lipschitz * sup_norm(S) / N
    return BoundCheck(lhs, rhs, lhs <= rhs + 1e-12)


CLAIM_KINDS = ("vanilla", "lookback", "asian", "lookback-put", "alpha", "terminal")


def make_claim(params: dict) -> Claim:
    """Build a claim from ``{kind, K?, rate?, T?}``."""
    kind = params.get("kind")
    rate = float(params.get("rate", 0.0) or 0.0)
    T = float(params.get("T", 1.0) or 1.0)
    K = params.get("K")
    if kind in ("vanilla", "vanilla-call"):
        return VanillaCall(float(1.0 if K is None else K), rate, T)
    if kind in ("lookback", "lookback-max"):
        return LookbackMax(rate, T)
    if kind in ("asian", "asian-average"):
        return AsianAverage(rate, T)
    if kind in ("lookback-put", "lookback-put-on-max"):
        return LookbackPutOnMax(float(1.0 if K is None else K), rate, T)
    if kind == "alpha":
        return AlphaClaim(float(2.0 if K is None else K), T)
    if kind == "terminal":
        return TerminalLinear(T)
    raise ConfigError(f"unsupported claim kind {kind!r}; expected one of {CLAIM_KINDS}")
