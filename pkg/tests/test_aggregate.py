import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import models
from ruinlab.aggregate import (
    bivariate_claim_pmf,
    claims_joint_transform,
    claims_moments,
    is_product_shock_law,
    marginal_claim_pmf,
    per_period_joint_table,
    table2d_moments,
    total_claim_pgf,
    total_claim_pmf,
    total_claim_transform,
)
from ruinlab.model import make_model


def test_tm1_total_claim_two_periods(model):
    np.testing.assert_allclose(total_claim_pmf(model, 2).weights, [0.25, 0.3, 0.29, 0.12, 0.04], atol=1e-15)


def test_tm1_moments(model):
    m = claims_moments(model, 10)
    assert m.meanS1 == pytest.approx(4.0, abs=1e-13)
    assert m.meanS2 == pytest.approx(3.0, abs=1e-13)
    assert m.meanS == pytest.approx(7.0, abs=1e-13)
    assert m.cov == pytest.approx(-0.2, abs=1e-13)


def test_transform_at_zero_and_t0(model):
    assert claims_joint_transform(model, 5, 0.0, 0.0) == pytest.approx(1.0)
    assert claims_joint_transform(model, 0, 1.0, 2.0) == 1.0
    with pytest.raises(ValueError):
        claims_joint_transform(model, 1, -1.0, 0.0)


def test_pgf_matches_pmf(model):
    pmf = total_claim_pmf(model, 6)
    for z in (0.1, 0.5, 0.9, 1.0):
        assert total_claim_pgf(model, 6, z) == pytest.approx(pmf.pgf(z), abs=1e-14)


def test_joint_table_one_period(model):
    tab = per_period_joint_table(model)
    assert tab.sum() == pytest.approx(1.0)
    assert tab[1, 1] == pytest.approx(0.1)
    assert tab[2, 0] == pytest.approx(0.1)


def test_product_detection(model):
    assert is_product_shock_law(model)
    dep = make_model(0.1, 0.2, 0.2, {1: 1.0}, {1: 1.0}, [(1, 2, 0.5), (2, 1, 0.5)])
    assert not is_product_shock_law(dep)


@settings(max_examples=30, deadline=None)
@given(models(), st.integers(0, 8))
def test_bivariate_table_consistency(m, t):
    tab = bivariate_claim_pmf(m, t)
    assert tab.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(tab.sum(axis=1), marginal_claim_pmf(m, t, 1).dense(0, tab.shape[0] - 1), atol=1e-12)
    np.testing.assert_allclose(tab.sum(axis=0), marginal_claim_pmf(m, t, 2).dense(0, tab.shape[1] - 1), atol=1e-12)
    # anti-diagonal sums give the law of S = S1 + S2
    n1, n2 = tab.shape
    diag = np.zeros(n1 + n2 - 1)
    for a in range(n1):
        diag[a : a + n2] += tab[a]
    total = total_claim_pmf(m, t)
    np.testing.assert_allclose(diag[: total.max_value + 1], total.dense(0, total.max_value), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(models(), st.integers(1, 12))
def test_moments_match_convolution(m, t):
    exact = table2d_moments(bivariate_claim_pmf(m, t))
    closed = claims_moments(m, t)
    for f, v in exact.items():
        assert getattr(closed, f) == pytest.approx(v, abs=1e-9 * max(1.0, abs(v)))
    total = total_claim_pmf(m, t)
    assert closed.meanS == pytest.approx(total.mean(), abs=1e-9)
    assert closed.varS == pytest.approx(total.var(), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(models(), st.integers(1, 10), st.floats(0.01, 3.0))
def test_transform_matches_table(m, t, s):
    tab = bivariate_claim_pmf(m, t)
    a = np.exp(-s * np.arange(tab.shape[0]))
    b = np.exp(-0.5 * s * np.arange(tab.shape[1]))
    assert float(a @ tab @ b) == pytest.approx(claims_joint_transform(m, t, s, 0.5 * s), rel=1e-10)
    assert total_claim_transform(m, t, s) == pytest.approx(total_claim_pmf(m, t).laplace(s), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(models())
def test_cor_t_invariant(m):
    cors = [claims_moments(m, t).cor for t in range(1, 21)]
    assert max(cors) - min(cors) < 1e-12
    assert all(-1 - 1e-12 <= c <= 1 + 1e-12 and not math.isnan(c) for c in cors)
