"""Brownian realization of a tree martingale measure.

Jump gaps are selected by comparing independent Brownian increments over a
decreasing gap alphabet with thresholds, and jump signs by comparing a second
increment with a Gaussian quantile. The resulting gap/sign vectors have the
law of the tree measure with its initial +-1/N move removed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .marginals import Marginal, prokhorov_distance
from .mot import PathTree, TreeMeasure
from .paths import RNG_ALGORITHM, DomainError, make_rng


def gaussian_quantile(u):
    """Standard normal quantile with u = 0 -> -inf and u = 1 -> +inf."""
    a = np.asarray(u, dtype=float)
    if np.any(~((a >= 0) & (a <= 1))):
        raise DomainError("quantile argument must lie in [0, 1]")
    out = ndtri(a)
    return float(out) if out.ndim == 0 else out


def _gap_fraction(k: int, N: int, code: tuple) -> Fraction:
    fam, i = code
    d = (2 ** k) * N
    return Fraction(i, d) if fam == "A" else Fraction(1, i * d)


@dataclass
class ConditionalTables:
    """Conditional gap survival and up-jump probabilities per history.

    ``alphabet`` is decreasing with ``alphabet[0] = T`` standing for "no
    further jump". A history is a tuple of (alphabet index, sign) pairs.
    ``psi[h][l]`` = Q(gap >= alphabet[l] | h), ``phi[(h, l)]`` = Q(up | h, gap l).
    """

    N: int
    m: int
    T: float
    alphabet: np.ndarray
    psi: dict
    phi: dict
    law: dict                       # full history -> mass (root move removed)


@dataclass
class ThresholdTables:
    tables: ConditionalTables
    theta: dict                     # history -> array over alphabet
    gamma: dict                     # (history, l) -> threshold for the sign increment


def root_free_law(Q: TreeMeasure) -> tuple[dict, np.ndarray]:
    """Law of the jump sequence with the initial move dropped, keyed by alphabet indices."""
    tree = Q.tree
    fr = {}
    for nd in tree.nodes:
        if nd.code is not None:
            fr[(nd.depth, nd.code)] = _gap_fraction(nd.depth, tree.N, nd.code)
    values = sorted(set(fr.values()), reverse=True)
    alphabet = np.array([tree.T] + [float(v) for v in values])
    index = {v: l + 1 for l, v in enumerate(values)}
    law: dict = {}
    for i, nd in enumerate(tree.nodes):
        q = float(Q.masses[i])
        if q <= 0:
            continue
        key = tuple((index[fr[(tree.nodes[j].depth, tree.nodes[j].code)]], tree.nodes[j].sign)
                    for j in tree.history(i)[1:])
        law[key] = law.get(key, 0.0) + q
    return law, alphabet


def extract_conditionals(Q: TreeMeasure, m: int | None = None) -> ConditionalTables:
    tree: PathTree = Q.tree
    m = tree.m if m is None else m
    law, alphabet = root_free_law(Q)
    L = alphabet.size
    # mass of each prefix, and of each (prefix, next gap) / (prefix, next gap, up)
    pre: dict = {}
    nxt: dict = {}
    up: dict = {}
    for key, q in law.items():
        for k in range(len(key) + 1):
            h = key[:k]
            pre[h] = pre.get(h, 0.0) + q
            if k < len(key):
                l, s = key[k]
                nxt[(h, l)] = nxt.get((h, l), 0.0) + q
                if s > 0:
                    up[(h, l)] = up.get((h, l), 0.0) + q
    psi, phi = {}, {}
    for h, tot in pre.items():
        if len(h) >= m:
            continue
        p_at = np.zeros(L)
        for l in range(1, L):
            p_at[l] = nxt.get((h, l), 0.0)
        p_at[0] = tot - p_at[1:].sum()          # no further jump
        # survival: Q(gap >= t_l) = mass at indices <= l
        psi[h] = np.clip(np.cumsum(p_at) / tot, 0.0, 1.0) if tot > 0 else np.zeros(L)
        psi[h][-1] = 1.0 if tot > 0 else 0.0
        for l in range(1, L):
            w = nxt.get((h, l), 0.0)
            phi[(h, l)] = up.get((h, l), 0.0) / w if w > 0 else 0.0
    return ConditionalTables(tree.N, m, tree.T, alphabet, psi, phi, law)


def compute_thresholds(tables: ConditionalTables) -> ThresholdTables:
    """Theta at alphabet index l >= 1 matches the ratio psi[l-1]/psi[l] (0/0 = 0)
    with increment variance t_l - t_{l+1}; index 0 always accepts."""
    alpha = tables.alphabet
    theta, gamma = {}, {}
    for h, ps in tables.psi.items():
        th = np.empty(alpha.size)
        th[0] = -math.inf
        for l in range(1, alpha.size):
            ratio = ps[l - 1] / ps[l] if ps[l] > 0 else 0.0
            var = alpha[l] - (alpha[l + 1] if l + 1 < alpha.size else 0.0)
            th[l] = math.sqrt(var) * gaussian_quantile(min(max(ratio, 0.0), 1.0))
        theta[h] = th
    for (h, l), ph in tables.phi.items():
        gamma[(h, l)] = math.sqrt(alpha[l]) * gaussian_quantile(min(max(ph, 0.0), 1.0))
    return ThresholdTables(tables, theta, gamma)


def perturb_tables(tables: ConditionalTables, shift: float = 0.2, history=None, gap=None) -> ConditionalTables:
    """Copy with one up-probability shifted; defaults to the most charged cell."""
    if history is None or gap is None:
        best = None
        for (h, l), ph in tables.phi.items():
            w = tables.psi[h][l] - tables.psi[h][l - 1]
            mass = w * sum(q for k, q in tables.law.items() if k[:len(h)] == h)
            if best is None or mass > best[0]:
                best = (mass, h, l)
        _, history, gap = best
    phi = dict(tables.phi)
    ph = phi[(history, gap)]
    phi[(history, gap)] = ph + shift if ph + shift <= 1 else ph - shift
    return replace(tables, phi=phi)


@dataclass
class LiftSamples:
    keys: list                       # per sample: tuple of (alphabet index, sign)
    sigmas: np.ndarray               # (n, m) stopping times, T after the last jump
    Y: np.ndarray                    # (n, m) signs in {-1, 0, 1}
    N: int
    seed: int
    tail_flagged: int = 0
    rng: str = RNG_ALGORITHM


def simulate_lift(th: ThresholdTables, n_samples: int, seed: int) -> LiftSamples:
    """Sample (sigma, Y) by the threshold recursion.

    For each live sample at step i, one Gaussian increment per alphabet index
    l >= 1 with variance t_l - t_{l+1} is drawn; the gap is t_l for the finest
    index whose increment exceeds Theta_l (index 0 = stop always exceeds).
    The sign is up iff an independent N(0, gap) increment is below Gamma.
    """
    tab = th.tables
    alpha = tab.alphabet
    L = alpha.size
    sd = np.sqrt(alpha - np.append(alpha[1:], 0.0))
    rng = make_rng(seed)
    n, m = n_samples, tab.m
    sig = np.full((n, m), tab.T)
    Y = np.zeros((n, m), dtype=int)
    keys = [()] * n
    groups = {(): np.arange(n)}
    elapsed = np.zeros(n)
    tail = 0
    for i in range(m):
        new_groups: dict = {}
        for h, idx in groups.items():
            if h not in th.theta:
                continue
            inc = rng.standard_normal((idx.size, L)) * sd
            exceed = inc > th.theta[h]
            exceed[:, 0] = True
            # finest exceeding index
            pick = L - 1 - np.argmax(exceed[:, ::-1], axis=1)
            z = rng.standard_normal(idx.size)
            for l in np.unique(pick):
                sel = idx[pick == l]
                if l == 0:
                    continue
                if th.tables.psi[h][l] - th.tables.psi[h][l - 1] <= 0:
                    tail += sel.size
                g = th.gamma.get((h, int(l)), -math.inf)
                upmask = z[pick == l] * math.sqrt(alpha[l]) < g
                elapsed[sel] += alpha[l]
                sig[sel, i] = elapsed[sel]
                for s, part in ((1, sel[upmask]), (-1, sel[~upmask])):
                    if part.size == 0:
                        continue
                    Y[part, i] = s
                    hk = h + ((int(l), s),)
                    new_groups[hk] = np.concatenate([new_groups[hk], part]) if hk in new_groups else part
        groups = new_groups
        for h, idx in groups.items():
            for j in idx:
                keys[j] = h
    # samples whose path stopped keep sigma = T afterwards
    return LiftSamples(keys, sig, Y, tab.N, seed, tail)


def sample_tree(Q: TreeMeasure, n_samples: int, seed: int) -> list:
    """Direct i.i.d. draws of root-free jump sequences from the tree measure."""
    law, _ = root_free_law(Q)
    ks = list(law)
    p = np.array([law[k] for k in ks])
    rng = make_rng(seed)
    draw = rng.choice(len(ks), size=n_samples, p=p / p.sum())
    return [ks[d] for d in draw]


@dataclass
class ChiSquareReport:
    statistic: float
    dof: int
    p_value: float
    cells: int
    pooled_cells: int
    outside_support: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def chi_square_gof(keys: list, law: dict, min_expected: float = 5.0) -> ChiSquareReport:
    """Pearson goodness of fit of sampled keys against ``law``; small cells pooled."""
    n = len(keys)
    counts: dict = {}
    for k in keys:
        counts[k] = counts.get(k, 0) + 1
    outside = sum(c for k, c in counts.items() if k not in law)
    cells = sorted(law, key=lambda k: (-law[k], k))
    obs = np.array([counts.get(k, 0) for k in cells], dtype=float)
    exp = np.array([law[k] for k in cells]) * n / sum(law.values())
    big = exp >= min_expected
    o, e = list(obs[big]), list(exp[big])
    pooled = int((~big).sum())
    if pooled:
        o.append(obs[~big].sum() + outside)
        e.append(exp[~big].sum())
    elif outside:
        # mass outside the support: put it in its own cell with a tiny expectation
        o.append(float(outside))
        e.append(1e-12)
    o, e = np.array(o), np.array(e)
    if o.size < 2:
        return ChiSquareReport(0.0, 0, 1.0, int(o.size), pooled, outside)
    e = e * o.sum() / e.sum()
    stat, pv = stats.chisquare(o, e)
    return ChiSquareReport(float(stat), int(o.size - 1), float(pv), int(o.size), pooled, outside)


def z_telescoping_error(samples: LiftSamples) -> float:
    """max |1 + (1/N) cumsum(Y) - (N + cumsum(Y))/N| over samples and steps."""
    N = samples.N
    cs = np.cumsum(samples.Y, axis=1)
    z_float = 1.0 + np.cumsum(samples.Y / N, axis=1)
    z_exact = (N + cs) / N
    return float(np.max(np.abs(z_float - z_exact))) if cs.size else 0.0


def dkw_band(n: int, atoms: int, alpha: float = 1e-3) -> float:
    """Bound on the Prokhorov distance of an n-sample empirical law on ``atoms`` points.

    DKW gives sup|F_n - F| <= eps with probability 1 - alpha; total variation,
    which dominates the Prokhorov distance, is at most atoms * eps.
    """
    eps = math.sqrt(math.log(2.0 / alpha) / (2.0 * n))
    return min(1.0, atoms * eps)


def verify_identity(samples: LiftSamples, Q: TreeMeasure, alpha: float = 1e-3) -> dict:
    if len(samples.keys) < 10_000:
        raise DomainError("verification needs at least 10^4 samples")
    law, _ = root_free_law(Q)
    gof = chi_square_gof(samples.keys, law)
    N = samples.N
    # terminal law of Z at the last stopping time vs the tree's root-free terminal law
    zt = 1.0 + samples.Y.sum(axis=1) / N
    xs, cnt = np.unique(zt, return_counts=True)
    emp = Marginal.atomic(xs, cnt / cnt.sum(), validate=False)
    term: dict = {}
    for k, q in law.items():
        x = 1.0 + sum(s for _, s in k) / N
        term[x] = term.get(x, 0.0) + q
    ref = Marginal.atomic(list(term), list(term.values()), validate=False)
    d = prokhorov_distance(emp, ref)
    band = dkw_band(len(samples.keys), len(term), alpha)
    return {
        "chi_square": gof.as_dict(),
        "z_telescoping_max_error": z_telescoping_error(samples),
        "prokhorov_terminal": d,
        "prokhorov_band": band,
        "prokhorov_within_band": d <= band,
        "band_rule": "min(1, atoms * sqrt(ln(2/alpha) / (2 n))), DKW plus total variation",
        "band_alpha": alpha,
        "samples": len(samples.keys),
        "tail_flagged": samples.tail_flagged,
        "seed": samples.seed,
        "rng": samples.rng,
    }
