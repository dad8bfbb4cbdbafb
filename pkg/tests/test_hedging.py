import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robusthedge.discretize import crossing_times, embed_F
from robusthedge.hedging import (CrossingPrefix, OutOfTreeError, SemiStaticPortfolio, alpha_gamma_terms,
                                 alpha_hedge, alpha_inequality_margins, alpha_static, check_superreplication,
                                 lift_tree_hedge, portfolio_trace, portfolio_value, realize_leaf, zero_portfolio)
from robusthedge.marginals import Marginal, project_marginal
from robusthedge.mot import build_tree, certificate_values, dual_lp
from robusthedge.paths import DomainError, PathGeneratorConfig, SampledPath, generate_paths, sup_norm
from robusthedge.payoffs import AsianAverage, LookbackMax, VanillaCall

RISING = SampledPath([0.0, 1.0], [1.0, 2.0])
WAVY = SampledPath([0.0, 0.3, 0.6, 1.0], [1.0, 1.7, 0.8, 1.3])
NU2 = project_marginal(Marginal.atomic([0.5, 1.5], [0.5, 0.5]), 2)


def g_sq(x):
    return x * x


@st.composite
def random_paths(draw):
    n = draw(st.integers(2, 10))
    steps = draw(st.lists(st.floats(-0.5, 0.5), min_size=n, max_size=n))
    vals = np.maximum(1.0 + np.concatenate([[0.0], np.cumsum(steps)]), 0.05)
    vals[0] = 1.0
    return SampledPath(np.linspace(0, 1, n + 1), vals)


# ---- portfolio value

def test_static_only():
    pi = SemiStaticPortfolio(4, g_sq)
    assert portfolio_value(pi, WAVY) == pytest.approx(1.69)
    assert portfolio_value(pi, WAVY, 0.5) == 0.0


def test_unit_position_telescopes():
    pi = SemiStaticPortfolio(4, g_sq, lambda pr: 1.0)
    assert portfolio_value(pi, WAVY) == pytest.approx(1.69 + 0.3)


def test_position_equal_to_index():
    pi = SemiStaticPortfolio(4, g_sq, lambda pr: float(pr.k))
    assert portfolio_value(pi, RISING) == pytest.approx(4.0 + 1.5)


def test_intermediate_time():
    pi = SemiStaticPortfolio(4, g_sq, lambda pr: 1.0)
    assert portfolio_value(pi, RISING, 0.6) == pytest.approx(0.6)
    with pytest.raises(DomainError):
        portfolio_value(pi, RISING, 1.5)


def test_rules_see_only_the_prefix():
    seen = []

    def rule(pr: CrossingPrefix):
        seen.append((pr.k, len(pr.taus), len(pr.values)))
        return 0.0

    portfolio_value(SemiStaticPortfolio(4, g_sq, rule), WAVY)
    assert all(n == k + 1 and m == k + 1 for k, n, m in seen)


@settings(max_examples=60, deadline=None)
@given(random_paths(), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
def test_value_is_additive(S, a, b, t):
    p1 = SemiStaticPortfolio(3, lambda x: a * x, lambda pr: a * pr.values[-1])
    p2 = SemiStaticPortfolio(3, lambda x: b + x, lambda pr: b * pr.k)
    assert portfolio_value(p1 + p2, S, t) == pytest.approx(
        portfolio_value(p1, S, t) + portfolio_value(p2, S, t), abs=1e-12)


def test_positions_change_only_at_crossings():
    pi = SemiStaticPortfolio(4, g_sq, lambda pr: pr.values[-1])
    tr = portfolio_trace(pi, WAVY)
    assert len(tr["positions"]) == len(tr["taus"]) - 1
    dec = crossing_times(WAVY, 4)
    # value between crossings is affine in S with the held position as slope
    k = 1
    a, b = dec.taus[k], dec.taus[k + 1]
    t1, t2 = a + 0.3 * (b - a), a + 0.7 * (b - a)
    dz = portfolio_value(pi, WAVY, t2) - portfolio_value(pi, WAVY, t1)
    assert dz == pytest.approx(tr["positions"][k] * (WAVY.value(t2) - WAVY.value(t1)))


# ---- alpha hedge

def test_alpha_static_value():
    assert alpha_static(4, 2.0, 2.0)(1.0) == pytest.approx(2.0)


def test_alpha_first_position():
    pr = CrossingPrefix(4, 0, (0.0,), (1.0,))
    first, second = alpha_gamma_terms(pr, 2.0, 2.0)
    assert first == pytest.approx(-2.0)
    # with K = 2, S_0 = 1 already reaches K - 1, so the second term is active too
    assert second == pytest.approx(-4.0)
    first, second = alpha_gamma_terms(CrossingPrefix(8, 0, (0.0,), (1.0,)), 4.0, 2.0)
    assert (first, second) == (pytest.approx(-1.0), 0.0)


def test_alpha_domain():
    for args in [(4, 2.0, 1.0), (4, 1.0, 2.0), (2, 2.0, 2.0)]:
        with pytest.raises(DomainError):
            alpha_hedge(*args)


@pytest.mark.parametrize("K,N", [(2, 8), (2, 32), (4, 8), (4, 32)])
def test_alpha_pathwise_inequality(K, N):
    for S in generate_paths(PathGeneratorConfig(volatility=0.5, seed=K * 100 + N), 300):
        assert alpha_inequality_margins(N, K, 2.0, S).min() >= -1e-12


# ---- super-replication checks

def test_terminal_claim_exact_replication():
    G = VanillaCall(1.0)
    pi = SemiStaticPortfolio(4, lambda x: max(x - 1.0, 0.0))
    rep = check_superreplication(pi, G, generate_paths(PathGeneratorConfig(seed=1), 20))
    assert rep.ok and rep.min_margin == 0.0


def test_underfunded_portfolio_flagged():
    G = VanillaCall(1.0)
    pi = SemiStaticPortfolio(4, lambda x: max(x - 1.0, 0.0) - 0.01)
    rep = check_superreplication(pi, G, generate_paths(PathGeneratorConfig(seed=1), 5))
    assert not rep.ok and rep.violations[0]["kind"] == "superreplication"


def test_admissibility_floor():
    pi = SemiStaticPortfolio(4, lambda x: 100.0, lambda pr: -100.0, M=1.0, p=2.0)
    rep = check_superreplication(pi, VanillaCall(1.0), [RISING])
    assert any(v["kind"] == "admissibility" for v in rep.violations)


# ---- lifting tree certificates

def test_zero_tree_rule_lifts_to_zero():
    tree = build_tree(2, 2, 2)
    pi = lift_tree_hedge({}, {}, tree)
    assert pi.positions(WAVY) == [0.0] * crossing_times(WAVY, 2).H


def test_out_of_tree_error():
    tree = build_tree(2, 1, 1)
    S = SampledPath(np.linspace(0, 1, 9), [1, 1.6, 0.9, 1.6, 0.9, 1.6, 0.9, 1.6, 0.9])
    pi = lift_tree_hedge({}, {}, tree)
    with pytest.raises(OutOfTreeError) as exc:
        pi.positions(S)
    assert exc.value.history.n_jumps > 1


def test_realized_leaf_embeds_back():
    tree = build_tree(2, 2, 2)
    for i in range(tree.size):
        f = tree.grid_path(i)
        if min(f.levels) <= 0:
            continue
        for lam in (1.0, 0.4):
            assert tree.locate(embed_F(realize_leaf(f, lam), 2)) == i


@pytest.mark.parametrize("G", [LookbackMax(), AsianAverage(), VanillaCall(1.0)])
@pytest.mark.parametrize("mode", ["exact", "band"])
def test_lifted_certificate_replays_tree_values(G, mode):
    tree = build_tree(2, 2, 2)
    d = dual_lp(tree, G, NU2, mode, 1.0)
    pi = lift_tree_hedge(d.h, d.gamma, tree, d.cash)
    cv = certificate_values(tree, d)
    for i in range(tree.size):
        f = tree.grid_path(i)
        if min(f.levels) <= 0:
            continue
        assert portfolio_value(pi, realize_leaf(f)) == pytest.approx(cv[i], abs=1e-12)


@pytest.mark.parametrize("G", [LookbackMax(), AsianAverage(), VanillaCall(1.0)])
def test_lifted_certificate_superreplicates_shifted_claim(G):
    N = 2
    tree = build_tree(N, 2, 3)
    d = dual_lp(tree, G, NU2, "band", 1.0)
    pi = lift_tree_hedge(d.h, d.gamma, tree, d.cash)
    paths = [S for S in generate_paths(PathGeneratorConfig(volatility=0.5, seed=8), 500)
             if tree.locate(embed_F(S, N)) is not None]
    assert len(paths) > 300
    for S in paths:
        assert portfolio_value(pi, S) >= G(S) - 5 * G.lipschitz * sup_norm(S) / N - 1e-12


def test_zero_portfolio():
    assert portfolio_value(zero_portfolio(3), WAVY) == 0.0
