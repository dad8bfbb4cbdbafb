"""Crossing-time decomposition of continuous paths and embedding into grid paths."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .paths import DomainError, GridPath, SampledPath, StepPath

# below this gap size a snapped gap is flagged in diagnostics
TINY_GAP = 2.0 ** -52


def sign(x: float) -> int:
    """Sign with sign(0) = +1, so the terminal half-step is always a full +-1/N move."""
    return 1 if x >= 0 else -1


@dataclass(frozen=True)
class CrossingDecomposition:
    N: int
    taus: tuple          # tau_0 = 0 < ... < tau_H = T
    levels: tuple        # integer levels j with S_{tau_k} = j / N, for k < H
    terminal: float      # S_T

    @property
    def H(self) -> int:
        return len(self.taus) - 1

    @property
    def values_at_taus(self) -> tuple:
        return tuple(j / self.N for j in self.levels) + (self.terminal,)

    @property
    def horizon(self) -> float:
        return self.taus[-1]

    def last_sign(self) -> int:
        return sign(self.terminal - self.levels[-1] / self.N)


@dataclass(frozen=True)
class SnappedGaps:
    N: int
    hat_taus: tuple
    deltas: tuple                     # snapped gaps, i = 1..n-1
    codes: tuple                      # (family, i) of each snapped gap
    slack: float                      # sum of (dtau - dtau_hat)
    tiny: tuple = field(default=())   # indices flagged below TINY_GAP


def gap_value(k: int, N: int, code: tuple) -> float:
    fam, i = code
    d = (2 ** k) * N
    return i / d if fam == "A" else 1 / (i * d)


def u_floor_code(k: int, N: int, x: float) -> tuple:
    """Index of max{u in U_k^(N) : u < x} as ``(family, i)``.

    Family ``A`` is {i / (2^k N)}, family ``B`` is {1 / (i 2^k N)} with i >= 2
    (i = 1 is shared with ``A``).
    """
    if not x > 0:
        raise DomainError(f"u_floor needs x > 0, got {x!r}")
    d = (2 ** k) * N
    xd = Fraction(x) * d
    i = math.ceil(xd) - 1
    if i >= 1:
        return ("A", i)
    # largest 1/(i d) < x  <=>  smallest i > 1/(x d)
    j = math.floor(1 / xd) + 1
    return ("B", max(j, 2)) if j >= 2 else ("A", 1)


def u_floor(k: int, N: int, x: float) -> float:
    """max{u in U_k^(N) : u < x}."""
    code = u_floor_code(k, N, x)
    u = gap_value(k, N, code)
    # the exact element is < x, but rounding i/d to a float can land on x;
    # fall back to the float just below x (off by at most one ulp)
    if u >= x:
        u = math.nextafter(x, 0.0)
    return u


def gap_code(k: int, N: int, gap: float, rtol: float = 1e-9) -> tuple | None:
    """Canonical ``(family, i)`` code of a gap value, or None if not a member of U_k^(N)."""
    d = (2 ** k) * N
    x = gap * d
    i = round(x)
    if i >= 1 and abs(x - i) <= rtol * max(1.0, x):
        return ("A", i)
    y = 1.0 / x
    j = round(y)
    if j >= 2 and abs(y - j) <= rtol * y:
        return ("B", j)
    return None


def _segment_hit(t0, v0, t1, v1, lo, hi):
    """First time in [t0, t1] an affine segment from (t0,v0) to (t1,v1) reaches lo or hi."""
    if v1 >= hi:
        target = hi
    elif v1 <= lo:
        target = lo
    else:
        return None
    if v1 == v0:
        return t0, target
    return t0 + (target - v0) / (v1 - v0) * (t1 - t0), target


def crossing_times(S: SampledPath, N: int) -> CrossingDecomposition:
    """Successive first times the path moves by exactly 1/N from the last crossing level.

    Crossing equations are solved in closed form on each affine segment; the
    crossing level itself is carried as an integer so levels never drift.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    T = S.horizon
    times, vals = S.times, S.values
    level = N  # S_0 = 1
    taus, levels = [0.0], [level]
    seg = 0
    t_cur, v_cur = 0.0, 1.0
    while True:
        lo, hi = (level - 1) / N, (level + 1) / N
        hit = None
        while seg < len(times) - 1:
            hit = _segment_hit(t_cur, v_cur, times[seg + 1], vals[seg + 1], lo, hi)
            if hit is not None:
                break
            seg += 1
            t_cur, v_cur = float(times[seg]), float(vals[seg])
        if hit is None:
            taus.append(T)
            break
        t_hit, target = hit
        t_hit = min(max(t_hit, t_cur), float(times[seg + 1]))
        if t_hit >= T:
            taus.append(T)
            break
        level += 1 if target == hi else -1
        taus.append(t_hit)
        levels.append(level)
        t_cur, v_cur = t_hit, level / N
        if t_hit == times[seg + 1]:
            seg += 1
    return CrossingDecomposition(N, tuple(taus), tuple(levels), S.terminal)


def hat_path(S: SampledPath, N: int, dec: CrossingDecomposition | None = None) -> StepPath:
    """Step approximation holding S_{tau_k} on [tau_k, tau_{k+1})."""
    dec = dec or crossing_times(S, N)
    n = dec.H
    last = (dec.levels[n - 1] + dec.last_sign()) / N
    vals = np.array([j / N for j in dec.levels[:n]])
    return StepPath(np.array(dec.taus[:n]), vals, dec.horizon, terminal=last)


def snap_gaps(dec: CrossingDecomposition) -> SnappedGaps:
    N, n = dec.N, dec.H
    taus = dec.taus
    deltas, codes, tiny = [], [], []
    slack = 0.0
    for i in range(1, n):
        dt = taus[i] - taus[i - 1]
        u = u_floor(i, N, dt)
        codes.append(gap_code(i, N, u))
        deltas.append(u)
        slack += dt - u
        if u < TINY_GAP:
            tiny.append(i)
    hat = [0.0]
    for u in deltas:
        hat.append(hat[-1] + u)
    hat.append(dec.horizon)
    return SnappedGaps(N, tuple(hat), tuple(deltas), tuple(codes), slack, tuple(tiny))


def embed_F(S: SampledPath, N: int, dec: CrossingDecomposition | None = None) -> GridPath:
    """Map a continuous path to a grid path.

    The k-th jump of the result equals the (k+1)-th move of the crossing
    decomposition, and the last jump is the sign of the final partial move.
    The map is not adapted; it is meant for lifting tree strategies.
    """
    dec = dec or crossing_times(S, N)
    n = dec.H
    T = dec.horizon
    if n == 1:
        return GridPath(N, T, (N + dec.last_sign()) / N)
    snap = snap_gaps(dec)
    levels = dec.levels
    signs = [levels[k + 1] - levels[k] for k in range(1, n - 1)] + [dec.last_sign()]
    return GridPath(N, T, levels[1] / N, snap.deltas, tuple(signs))


def discretize_diagnostics(S: SampledPath, N: int) -> dict:
    dec = crossing_times(S, N)
    snap = snap_gaps(dec)
    return {
        "H": dec.H,
        "taus": list(dec.taus),
        "hat_taus": list(snap.hat_taus),
        "gap_slack": snap.slack,
        "slack_bound": 1.0 / N,
        "tiny_gaps": list(snap.tiny),
    }
