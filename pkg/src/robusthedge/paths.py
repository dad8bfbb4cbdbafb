"""Path representations: sampled continuous paths, step paths and grid paths.

Every path is reduced to a common piecewise-affine *profile* so that norms,
extrema and integrals are computed exactly:

* ``times``: breakpoints ``0 = t_0 < ... < t_M = T``
* ``right[i]``: value just after ``t_i`` (also the point value for ``0 < t_i < T``)
* ``left[i]``: left limit at ``t_{i+1}``
* ``at0`` / ``atT``: point values at the two ends of the horizon

A continuous sampled path has ``right[i+1] == left[i]``; a step path has
``right == left``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

RNG_ALGORITHM = "PCG64"
POSITIVITY_FLOOR = 1e-9


class DomainError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Profile:
    times: np.ndarray
    right: np.ndarray
    left: np.ndarray
    at0: float
    atT: float

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def right_at(self, t: np.ndarray) -> np.ndarray:
        """Right limits at times in [0, T)."""
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.right) - 1)
        return self._interp(i, t)

    def left_at(self, t: np.ndarray) -> np.ndarray:
        """Left limits at times in (0, T]."""
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.times, t, side="left") - 1, 0, len(self.left) - 1)
        return self._interp(i, t)

    def _interp(self, i, t):
        t0 = self.times[i]
        t1 = self.times[i + 1]
        w = np.where(t1 > t0, (t - t0) / np.where(t1 > t0, t1 - t0, 1.0), 0.0)
        w = np.clip(w, 0.0, 1.0)
        return self.right[i] + (self.left[i] - self.right[i]) * w

    def sup_abs(self) -> float:
        return float(max(abs(self.at0), abs(self.atT),
                         np.max(np.abs(self.right)), np.max(np.abs(self.left))))


@dataclass(frozen=True)
class SampledPath:
    """Strictly positive continuous path, linear between knots, with S_0 = 1."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 2:
            raise DomainError("need at least two knots with matching times/values")
        if t[0] != 0.0:
            raise DomainError("first knot time must be 0")
        if np.any(np.diff(t) <= 0):
            raise DomainError("knot times must be strictly increasing")
        if np.any(v <= 0):
            raise DomainError("path values must be strictly positive")
        if abs(v[0] - 1.0) > 1e-12:
            raise DomainError(f"path must start at 1, got {v[0]!r}")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def value(self, t: float) -> float:
        if not 0.0 <= t <= self.horizon:
            raise DomainError(f"t={t} outside [0, {self.horizon}]")
        return float(np.interp(t, self.times, self.values))

    def profile(self) -> Profile:
        return Profile(self.times, self.values[:-1], self.values[1:],
                       float(self.values[0]), float(self.values[-1]))


@dataclass(frozen=True)
class StepPath:
    """Right-continuous step function.

    ``values[i]`` holds on ``[breaks[i], breaks[i+1])``; ``terminal`` is the value
    at ``T`` and ``initial`` (defaults to ``values[0]``) the value at exactly 0.
    """

    breaks: np.ndarray
    values: np.ndarray
    horizon: float
    terminal: float | None = None
    initial: float | None = None

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "values", v)
        if b.shape != v.shape or len(b) == 0 or b[0] != 0.0:
            raise DomainError("breaks must start at 0 and match values")
        if np.any(np.diff(b) <= 0) or b[-1] >= self.horizon:
            raise DomainError("breaks must be strictly increasing and < T")
        if self.terminal is None:
            object.__setattr__(self, "terminal", float(v[-1]))
        if self.initial is None:
            object.__setattr__(self, "initial", float(v[0]))

    def value(self, t: float) -> float:
        if t == self.horizon:
            return float(self.terminal)
        if t == 0.0:
            return float(self.initial)
        i = int(np.searchsorted(self.breaks, t, side="right") - 1)
        return float(self.values[i])

    def profile(self) -> Profile:
        times = np.append(self.breaks, self.horizon)
        return Profile(times, self.values, self.values, float(self.initial), float(self.terminal))


def _gap_is_member(k: int, N: int, gap: float, rtol: float = 1e-9) -> bool:
    d = (2 ** k) * N
    x = gap * d
    i = round(x)
    if i >= 1 and abs(x - i) <= rtol * max(1.0, x):
        return True
    y = 1.0 / x if x > 0 else math.inf
    j = round(y)
    return j >= 1 and abs(y - j) <= rtol * max(1.0, y)


@dataclass(frozen=True)
class GridPath:
    """Step path with +-1/N jumps and dyadic-harmonic inter-jump gaps.

    Gaps are stored instead of absolute jump times: cumulative sums lose the
    exact membership of tiny gaps.
    """

    N: int
    T: float
    initial: float
    gaps: tuple = ()
    signs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "gaps", tuple(float(g) for g in self.gaps))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if len(self.gaps) != len(self.signs):
            raise DomainError("gaps and signs must have equal length")

    @classmethod
    def from_jump_times(cls, N, T, initial, jump_times, signs):
        jt = [0.0, *map(float, jump_times)]
        return cls(N, T, initial, tuple(b - a for a, b in zip(jt, jt[1:])), tuple(signs))

    @property
    def n_jumps(self) -> int:
        return len(self.gaps)

    @property
    def jump_times(self) -> tuple:
        return tuple(math.fsum(self.gaps[: i + 1]) for i in range(len(self.gaps)))

    @property
    def initial_level(self) -> int:
        return round(self.initial * self.N)

    @property
    def levels(self) -> tuple:
        out = [self.initial_level]
        for s in self.signs:
            out.append(out[-1] + s)
        return tuple(out)

    @property
    def values(self) -> tuple:
        return tuple(j / self.N for j in self.levels)

    @property
    def terminal(self) -> float:
        return self.values[-1]

    def to_step(self, anchor: float | None = None) -> StepPath:
        """Render as a step path; ``anchor`` overrides the point value at t = 0."""
        breaks = np.array((0.0, *self.jump_times))
        vals = np.array(self.values)
        return StepPath(breaks, vals, self.T, terminal=float(vals[-1]), initial=anchor)

    def profile(self) -> Profile:
        return self.to_step().profile()


def validate_grid_path(f: GridPath) -> list[tuple[int, str]]:
    """Check membership in the countable class of grid paths.

    Returns a list of ``(condition, message)`` pairs; empty means the path is valid.
    Condition 5 is nonnegativity.
    """
    issues = []
    N = f.N
    if abs(f.initial - (1 - 1 / N)) > 1e-12 and abs(f.initial - (1 + 1 / N)) > 1e-12:
        issues.append((1, f"initial value {f.initial!r} not in {{1-1/N, 1+1/N}}"))
    jt = f.jump_times
    if any(g <= 0 for g in f.gaps):
        issues.append((2, "jump times must be strictly increasing"))
    if jt and jt[-1] >= f.T:
        issues.append((2, f"last jump time {jt[-1]!r} not < T={f.T!r}"))
    for k, s in enumerate(f.signs, 1):
        if s not in (-1, 1):
            issues.append((3, f"jump {k} has sign {s}, |jump| must equal 1/N"))
    for k, g in enumerate(f.gaps, 1):
        if g > 0 and not _gap_is_member(k, N, g):
            issues.append((4, f"gap {k} = {g!r} not in U_{k}^({N})"))
    if min(f.levels) < 0:
        issues.append((5, "path takes negative values"))
    return issues


def _profile(p) -> Profile:
    return p if isinstance(p, Profile) else p.profile()


def sup_norm(p) -> float:
    return _profile(p).sup_abs()


def sup_norm_distance(a, b) -> float:
    """Exact sup over [0, T] of |a_t - b_t| for piecewise-affine paths."""
    pa, pb = _profile(a), _profile(b)
    if abs(pa.horizon - pb.horizon) > 1e-12:
        raise DomainError(f"horizons differ: {pa.horizon} vs {pb.horizon}")
    grid = np.union1d(pa.times, pb.times)
    grid = grid[grid <= pa.horizon]
    lo, hi = grid[:-1], grid[1:]
    d_right = np.abs(pa.right_at(lo) - pb.right_at(lo))
    d_left = np.abs(pa.left_at(hi) - pb.left_at(hi))
    return float(max(abs(pa.at0 - pb.at0), abs(pa.atT - pb.atT), d_right.max(), d_left.max()))


def running_max(S: SampledPath, t: float) -> float:
    if not 0.0 <= t <= S.horizon:
        raise DomainError(f"t={t} outside [0, {S.horizon}]")
    mask = S.times <= t
    return float(max(S.values[mask].max(), S.value(t)))


# --------------------------------------------------------------------------- generation


@dataclass(frozen=True)
class PathGeneratorConfig:
    model: str = "geometric-brownian"
    volatility: float = 0.2
    step_count: int = 64
    seed: int = 0
    horizon: float = 1.0
    knots: tuple = field(default=())  # (t, value) pairs for piecewise-linear-custom

    MODELS = ("geometric-brownian", "arithmetic-brownian-reflected", "piecewise-linear-custom")

    def validate(self):
        if self.model not in self.MODELS:
            raise ConfigError(f"unknown path model {self.model!r}; expected one of {self.MODELS}")
        if self.volatility < 0:
            raise ConfigError("volatility must be >= 0")
        if self.step_count < 2:
            raise ConfigError("step_count must be >= 2")
        if self.horizon <= 0:
            raise ConfigError("horizon must be > 0")
        if self.model == "piecewise-linear-custom" and len(self.knots) < 2:
            raise ConfigError("piecewise-linear-custom needs at least two knots")


def make_rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """PCG64 generator; ``stream`` selects an independent spawned substream."""
    ss = np.random.SeedSequence(seed)
    if stream is not None:
        ss = ss.spawn(stream + 1)[stream]
    return np.random.Generator(np.random.PCG64(ss))


def generate_paths(cfg: PathGeneratorConfig, count: int) -> list[SampledPath]:
    cfg.validate()
    if cfg.model == "piecewise-linear-custom":
        t, v = zip(*cfg.knots)
        return [SampledPath(np.array(t), np.array(v)) for _ in range(count)]
    rng = make_rng(cfg.seed)
    n = cfg.step_count
    times = np.linspace(0.0, cfg.horizon, n + 1)
    dt = cfg.horizon / n
    dW = rng.standard_normal((count, n)) * math.sqrt(dt)
    W = np.concatenate([np.zeros((count, 1)), np.cumsum(dW, axis=1)], axis=1)
    sig = cfg.volatility
    if cfg.model == "geometric-brownian":
        vals = np.exp(sig * W - 0.5 * sig * sig * times)
    else:
        vals = 1.0 + sig * W
        # reflect at the positivity floor
        vals = np.where(vals < POSITIVITY_FLOOR, 2 * POSITIVITY_FLOOR - vals, vals)
        vals = np.maximum(vals, POSITIVITY_FLOOR)
    vals[:, 0] = 1.0
    return [SampledPath(times, row) for row in vals]


# --------------------------------------------------------------------------- CSV I/O


def write_path_csv(path: SampledPath, dest) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in zip(path.times, path.values):
            w.writerow([repr(float(t)), repr(float(v))])


def read_paths_csv(src) -> list[SampledPath]:
    """Read ``t,value`` rows; an optional leading ``path`` column groups several paths."""
    with open(src, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{src}: empty path file")
    header = [h.strip() for h in rows[0]]
    groups: dict[str, list] = {}
    if header == ["t", "value"]:
        groups["0"] = [(float(r[0]), float(r[1])) for r in rows[1:] if r]
    elif header == ["path", "t", "value"]:
        for r in rows[1:]:
            if r:
                groups.setdefault(r[0], []).append((float(r[1]), float(r[2])))
    else:
        raise ConfigError(f"{src}: expected header 't,value' or 'path,t,value', got {header}")
    out = []
    for pts in groups.values():
        t, v = zip(*pts)
        out.append(SampledPath(np.array(t), np.array(v)))
    return out


def write_paths_csv(paths: Sequence[SampledPath], dest) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "t", "value"])
        for i, p in enumerate(paths):
            for t, v in zip(p.times, p.values):
                w.writerow([i, repr(float(t)), repr(float(v))])


def write_grid_csv(paths: Iterable[GridPath], dest) -> None:
    """Blocks of ``N,T,initial`` followed by ``jump_time,sign`` rows."""
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        for f in paths:
            w.writerow(["N", "T", "initial"])
            w.writerow([f.N, repr(float(f.T)), repr(float(f.initial))])
            w.writerow(["jump_time", "sign"])
            for t, s in zip(f.jump_times, f.signs):
                w.writerow([repr(float(t)), s])


def read_grid_csv(src) -> list[GridPath]:
    with open(src, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    out, i = [], 0
    while i < len(rows):
        if [c.strip() for c in rows[i]] != ["N", "T", "initial"]:
            raise ConfigError(f"{src}: expected 'N,T,initial' header at row {i + 1}")
        N, T, init = int(rows[i + 1][0]), float(rows[i + 1][1]), float(rows[i + 1][2])
        i += 3  # header, values, jump header
        jt, sg = [], []
        while i < len(rows) and rows[i][0].strip() != "N":
            jt.append(float(rows[i][0]))
            sg.append(int(rows[i][1]))
            i += 1
        out.append(GridPath.from_jump_times(N, T, init, jt, sg))
    return out


__all__ = [
    "DomainError", "ConfigError", "Profile", "SampledPath", "StepPath", "GridPath",
    "PathGeneratorConfig", "validate_grid_path", "sup_norm", "sup_norm_distance",
    "running_max", "generate_paths", "make_rng", "RNG_ALGORITHM",
]
