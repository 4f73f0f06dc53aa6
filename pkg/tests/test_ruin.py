import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from conftest import models
from ruinlab.model import Pmf, make_model, model_summary, per_event_claim_law, per_period_claim_law, random_model
from ruinlab.ruin import (
    NetProfitError,
    adjustment_coefficient,
    beekman_survival,
    compound_geometric_pmf,
    deficit_laws,
    deficit_recursion,
    finite_horizon_ruin,
    geometric_representation,
    global_max_pgf,
    global_max_series,
    ladder_height_law,
    lundberg_function,
    martingale_residual,
    mean_ruin_time_dp,
    per_step_pgf,
    representation_as_printed,
    ruin_time_pmf,
    survival_at_zero,
    thinning_equivalence,
    thinning_probability,
)


def unit_claims():
    # a shock always pays k3 + k4 >= 2, so "every claim equals 1" needs p0 = 0
    return make_model(0.0, 0.3, 0.2, {1: 1.0}, {1: 1.0}, [(1, 1, 1.0)])


def deficit_oracle(model, horizon=3000, top=400):
    """Reserve-law propagation that records where the absorbed mass lands (u = 0)."""
    claim = per_period_claim_law(model).weights
    dist = np.zeros(top)
    dist[0] = 1.0
    hits = np.zeros(len(claim) + 1)
    for _ in range(horizon):
        nxt = np.zeros(top + 1)
        for c, q in enumerate(claim):
            # level r moves to r + 1 - c
            lo = c - 1
            if lo > 0:
                hits[1 : lo + 1] += q * dist[:lo][::-1]
            src = dist[max(lo, 0) :]
            nxt[max(0, 1 - c) : max(0, 1 - c) + len(src)] += q * src
        dist = nxt[:top]
    return hits


def naive_compound_geometric(theta, summand, n_max, terms=400):
    out = np.zeros(n_max + 1)
    power = np.zeros(n_max + 1)
    power[0] = 1.0
    f = summand.dense(0, n_max)
    for n in range(terms):
        out += (1 - theta) * theta**n * power
        power = np.convolve(power, f)[: n_max + 1]
    return out


def test_tm1_max_pgf(model):
    assert global_max_pgf(model, 0.5) == pytest.approx(0.75, abs=1e-15)


def test_tm1_geometric_law(model):
    u = np.arange(30)
    expected = 0.6 * 0.4**u
    np.testing.assert_allclose(global_max_series(model, 29), expected, atol=1e-15)
    for variant in "AB":
        np.testing.assert_allclose(geometric_representation(model, variant).pmf(29), expected, atol=1e-15)
    assert survival_at_zero(model) == pytest.approx(0.6, abs=1e-15)
    assert ladder_height_law(model).weights.tolist() == pytest.approx([1.0])


def test_tm1_printed_normalisations(model):
    printed = representation_as_printed(model)
    assert printed["variant_A_summand_total"] == pytest.approx(2.0)
    assert printed["variant_B_count_mass_at_zero"] == pytest.approx(0.4)
    assert geometric_representation(model, "A").summand.total() == pytest.approx(1.0, abs=1e-15)


def test_tm1_survival_curve(model):
    c = beekman_survival(model, 10)
    np.testing.assert_allclose(c.psi[:3], [0.4, 0.16, 0.064], atol=1e-12)
    assert c.delta[0] == pytest.approx(survival_at_zero(model), abs=1e-15)
    assert list(c.rows())[2]["psi"] == pytest.approx(0.064, abs=1e-12)


def test_tm1_dp(model):
    for u, expected in enumerate([0.4, 0.16, 0.064, 0.0256]):
        assert finite_horizon_ruin(model, u, 2000) == pytest.approx(expected, abs=1e-12)
    # ruin in the first period needs a claim of 2: type-1 with Y=2 (0.1) or a shock (0.1)
    assert finite_horizon_ruin(model, 0, 1) == pytest.approx(0.2, abs=1e-15)
    assert finite_horizon_ruin(model, 0, 2) > 0.2


def test_tm1_lundberg(model):
    adj = adjustment_coefficient(model)
    assert adj.z_star == pytest.approx(2.5, abs=1e-10)
    assert martingale_residual(model, adj.z_star) < 1e-12
    c = beekman_survival(model, 50, eps=1e-300)
    assert np.all(c.psi <= adj.z_star ** -np.arange(51.0))
    np.testing.assert_allclose(c.psi, 0.4 ** (np.arange(51) + 1), rtol=1e-12)


def test_unit_claims_never_ruin():
    m = unit_claims()
    assert adjustment_coefficient(m) is None
    c = beekman_survival(m, 20)
    assert np.all(c.psi == 0.0)
    assert finite_horizon_ruin(m, 0, 200) == 0.0
    assert not deficit_laws(m).ruin_possible
    assert mean_ruin_time_dp(m) is None


def test_net_profit_errors():
    heavy = make_model(0.3, 0.3, 0.3, {3: 1.0}, {3: 1.0}, [(2, 2, 1.0)])
    for fn in (survival_at_zero, adjustment_coefficient, lambda m: beekman_survival(m, 3), deficit_laws):
        with pytest.raises(NetProfitError):
            fn(heavy)
    with pytest.raises(ValueError):
        beekman_survival(unit_claims(), 3, eps=0.0)


def test_ruin_time_pmf_sums(model):
    pmf = ruin_time_pmf(model, 2, 400)
    assert pmf.sum() == pytest.approx(finite_horizon_ruin(model, 2, 400))
    assert pmf[0] == 0.0  # a claim of 2 cannot ruin reserve 2 in one period


def test_tm1_deficit(model):
    rep = deficit_laws(model)
    assert rep.lambda_conditional.weights.tolist() == pytest.approx([1.0], abs=1e-14)
    assert rep.lambda_unconditional.weights.tolist() == pytest.approx([0.4], abs=1e-14)
    assert rep.lambda_unconditional.total() == pytest.approx(rep.psi0, abs=1e-10)
    assert rep.mean_deficit == pytest.approx(1.0, abs=1e-12)
    assert rep.mean_deficit_closed_form == pytest.approx(1.0, abs=1e-12)
    assert rep.mean_ruin_time == pytest.approx(10 / 3, abs=1e-8)
    assert rep.pgf_max_abs_diff < 1e-9
    printed = rep.printed
    assert printed["denominator_conditional_lambda1"] == pytest.approx(-0.3, abs=1e-14)
    assert printed["vanishing_denominator_unconditional"]
    assert printed["mean_deficit_conditional_lambda1"] == pytest.approx(1.0, abs=1e-12)
    # as written the ruin-time expression gives a negative value
    assert printed["mean_ruin_time_conditional_lambda1"] == pytest.approx(-10 / 3, abs=1e-12)
    d = rep.to_dict()
    assert "reconciled" in d and "paper_printed" in d


def test_tm1_recursion_second_step(model):
    from ruinlab.model import per_period_step_law

    step = per_period_step_law(model)
    lam = deficit_recursion(step.prob(0), step, model.p, 0.4, 3)
    assert lam[0] == pytest.approx(0.4)
    assert abs(lam[1]) < 1e-12
    assert abs(lam[2]) < 1e-12


def test_deficit_against_dp():
    rng = np.random.default_rng(11)
    for _ in range(4):
        m = random_model(rng, max_claim=3, net_profit=True, require_mu_above_one=True)
        rep = deficit_laws(m, with_ruin_time=False)
        hits = deficit_oracle(m)
        un = rep.lambda_unconditional
        np.testing.assert_allclose(hits[1 : un.max_value + 1], un.weights, atol=1e-9)
        assert hits[un.max_value + 1 :].sum() < 1e-12


def test_mean_ruin_time_matches_ruin_time_pmf(model):
    pmf = ruin_time_pmf(model, 1, 3000)
    mean, _, converged = mean_ruin_time_dp(model, 1)
    assert converged
    assert mean == pytest.approx(float(np.arange(1, 3001) @ pmf) / pmf.sum(), rel=1e-9)


def test_thinning_reference_triple():
    rep = thinning_equivalence(Pmf.point_mass(1), 0.5, 1.5, 40)
    assert rep.thinning_prob == pytest.approx(1 / 3)
    assert rep.max_abs_diff < 1e-10
    np.testing.assert_allclose(rep.pmf_left, 0.5**np.arange(1, 42), atol=1e-15)
    assert rep.printed_max_abs_diff > 0.1
    with pytest.raises(ValueError):
        thinning_equivalence(Pmf.point_mass(1), 0.5, 2.5, 10)
    with pytest.raises(ValueError):
        thinning_equivalence(Pmf(0, np.array([0.5, 0.5])), 0.5, 1.5, 10)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(0.01, 1.0), min_size=1, max_size=4),
    st.floats(0.05, 0.9),
    st.floats(0.01, 0.99),
)
def test_thinning_property(ws, pG, frac):
    x = Pmf(1, np.array(ws) / sum(ws))
    c = 1 + frac * (1 / pG - 1)
    if not 1 < c < 1 / pG:
        return
    rep = thinning_equivalence(x, pG, c, 30)
    assert 0 <= thinning_probability(pG, c) <= 1
    assert rep.max_abs_diff < 1e-10
    # generating function oracle: (1 - pG) / (1 - pG E z^X)
    z = 0.6
    closed = (1 - pG) / (1 - pG * x.pgf(z))
    assert float(rep.pmf_left @ z ** np.arange(31)) == pytest.approx(closed, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(models(net_profit=True))
def test_representations_agree(m):
    series = global_max_series(m, 40)
    a = geometric_representation(m, "A")
    np.testing.assert_allclose(a.pmf(40), series, atol=1e-8)
    np.testing.assert_allclose(a.pmf(40), naive_compound_geometric(a.theta, a.summand, 40, terms=3000), atol=1e-8)
    if model_summary(m).mu > 1:
        np.testing.assert_allclose(geometric_representation(m, "B").pmf(40), series, atol=1e-8)
    for z in (0.0, 0.3, 0.8):
        assert a.pgf(z) == pytest.approx(global_max_pgf(m, z), abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(models(net_profit=True, require_mu_above_one=True))
def test_lundberg_property(m):
    adj = adjustment_coefficient(m)
    if m.max_claim <= 1:
        assert adj is None
        return
    g = lambda z: lundberg_function(m, z) / (z - 1)
    hi = 2.0
    while g(hi) <= 0:
        hi *= 2
    oracle = brentq(g, 1 + 1e-12, hi, xtol=1e-15, rtol=1e-15)
    assert adj.z_star == pytest.approx(oracle, rel=1e-10)
    assert abs(per_step_pgf(m, adj.z_star) - adj.z_star) < 1e-10 * adj.z_star
    c = beekman_survival(m, 30, eps=1e-300)
    assert np.all(c.psi <= adj.z_star ** -np.arange(31.0) * (1 + 1e-9) + 1e-15)


@settings(max_examples=15, deadline=None)
@given(models(net_profit=True, require_mu_above_one=True, max_claim=3))
def test_beekman_vs_dp(m):
    c = beekman_survival(m, 4, eps=1e-13)
    dp = np.array([finite_horizon_ruin(m, u, 3000) for u in range(5)])
    # finite horizon can only undercount
    assert np.all(dp <= c.psi + 1e-9)
    assert np.all(np.diff(c.psi) <= 0)
    # near-critical models need far longer horizons for the DP to converge
    assume(1 - m.p * model_summary(m).mu >= 0.1)
    np.testing.assert_allclose(dp, c.psi, atol=1e-6)


@settings(max_examples=15, deadline=None)
@given(models(net_profit=True, require_mu_above_one=True, max_claim=4))
def test_deficit_consistency(m):
    rep = deficit_laws(m, with_ruin_time=False)
    assert rep.lambda_unconditional.total() == pytest.approx(rep.psi0, abs=1e-10)
    np.testing.assert_allclose(rep.lambda_conditional.weights * rep.psi0, rep.lambda_unconditional.weights, atol=1e-10)
    assert rep.mean_deficit == pytest.approx(rep.mean_deficit_closed_form, abs=1e-9)
    assert rep.pgf_max_abs_diff < 1e-9
    assert rep.lambda_conditional.weights.tolist() == pytest.approx(ladder_height_law(m).weights.tolist(), abs=1e-12)
    if rep.hypothesis_holds:
        assert rep.recursion_max_abs_diff < 1e-10


def test_compound_geometric_panjer_vs_naive():
    summand = Pmf(0, np.array([0.2, 0.5, 0.3]))
    np.testing.assert_allclose(
        compound_geometric_pmf(0.6, summand, 25), naive_compound_geometric(0.6, summand, 25), atol=1e-12
    )


def test_per_event_law_used_by_ladder(model):
    y = per_event_claim_law(model)
    assert ladder_height_law(model).total() == pytest.approx(1.0)
    assert y.mean() == pytest.approx(1.4)
