import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import models
from ruinlab.counting import (
    HorizonCapError,
    cluster_total,
    cluster_variance_as_printed,
    conditional_closed_form,
    conditional_printed_range_mass,
    counts_conditional,
    counts_joint_pgf,
    counts_joint_pmf,
    counts_moments,
    counts_regression,
    enumerate_counts_law,
    table_moments,
)
from ruinlab.model import make_model


def test_tm1_one_period(model):
    np.testing.assert_allclose(counts_joint_pmf(model, 1).table, [[0.5, 0.2], [0.2, 0.1]], atol=1e-15)


def test_tm1_two_periods(model):
    # (1,1) arises from one shock (2 * 0.1 * 0.5) or one type-1 and one type-2 event (2 * 0.2 * 0.2)
    assert counts_joint_pmf(model, 2).table[1, 1] == pytest.approx(0.18, abs=1e-15)


def test_horizon_zero(model):
    assert counts_joint_pmf(model, 0).table.tolist() == [[1.0]]
    m = counts_moments(model, 0)
    assert m.cor == 0.0 and m.cov == 0.0


def test_horizon_cap(model):
    with pytest.raises(HorizonCapError):
        counts_joint_pmf(model, 65)


def test_conditional_tm1(model):
    c = counts_conditional(model, 1, coord=1, value=0)
    np.testing.assert_allclose(c.weights, [5 / 7, 2 / 7], atol=1e-15)


def test_regression_tm1(model):
    # E[M2(10) | M1(10) = 3] = 3 * 1/3 + 7 * 2/7
    assert counts_regression(model, 10, 1, 3) == pytest.approx(3.0, abs=1e-14)
    assert counts_regression(model, 10, 1, 0) == pytest.approx(20 / 7, abs=1e-14)


def test_moments_tm1(model):
    m = counts_moments(model, 1)
    assert m.cov == pytest.approx(0.1 - 0.09, abs=1e-15)
    assert m.cor == pytest.approx(1 / 21, abs=1e-15)


def test_independent_special_case():
    m = make_model(0.25, 0.25, 0.25, {1: 1.0}, {1: 1.0}, [(1, 1, 1.0)])
    for t in range(1, 11):
        assert counts_moments(m, t).cov == 0.0


def test_cluster_total_tm1(model):
    c = cluster_total(model, 10)
    assert c.mean == pytest.approx(6.0, abs=1e-13)
    assert c.var == pytest.approx(4.4, abs=1e-13)
    assert c.pmf.mean() == pytest.approx(6.0, abs=1e-12)
    assert c.pmf.var() == pytest.approx(4.4, abs=1e-11)
    # the printed expression squares the mean once too often and goes negative
    assert cluster_variance_as_printed(model, 10) == pytest.approx(-28.0, abs=1e-12)


def test_conditional_closed_form_quoted_range_loses_mass(model):
    # over the full range 0..t the expression is a proper law ...
    full = sum(conditional_closed_form(model, 5, 1, k, 2) for k in range(6))
    assert full == pytest.approx(1.0, abs=1e-12)
    # ... but the quoted range m_r <= t - m_s drops the shock-shared outcomes
    assert conditional_printed_range_mass(model, 5, 1, 2) < 1.0 - 1e-3


@settings(max_examples=30, deadline=None)
@given(models(), st.integers(1, 8), st.integers(0, 8), st.sampled_from([1, 2]))
def test_conditional_closed_form_matches_division(m, t, m_s, r):
    m_s = min(m_s, t)
    s = 3 - r
    if counts_joint_pmf(m, t).marginal(s)[m_s] < 1e-300:
        return
    exact = counts_conditional(m, t, s, m_s)
    closed = [conditional_closed_form(m, t, r, k, m_s) for k in range(t + 1)]
    np.testing.assert_allclose(closed, exact.dense(0, t), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(models(), st.integers(0, 8))
def test_joint_matches_enumeration(m, t):
    assert np.max(np.abs(counts_joint_pmf(m, t).table - enumerate_counts_law(m.shock, t))) < 1e-12


@settings(max_examples=30, deadline=None)
@given(models(), st.integers(1, 12))
def test_joint_table_properties(m, t):
    law = counts_joint_pmf(m, t)
    assert law.table.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(law.table >= 0)
    # marginal of M1 is Binomial(t, p0 + p1)
    from scipy.stats import binom

    a = m.shock.p0 + m.shock.p1
    np.testing.assert_allclose(law.marginal(1), binom.pmf(np.arange(t + 1), t, a), atol=1e-12)
    z1, z2 = 0.3, 0.7
    k = np.arange(t + 1)
    pgf = float(z1**k @ law.table @ z2**k)
    assert pgf == pytest.approx(counts_joint_pgf(m, t, z1, z2), abs=1e-12)
    assert law.total_law().sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(models(), st.integers(1, 12))
def test_moments_match_table(m, t):
    exact = table_moments(counts_joint_pmf(m, t))
    closed = counts_moments(m, t)
    for f in ("mean1", "mean2", "var1", "var2", "cross", "cov", "cor"):
        assert getattr(closed, f) == pytest.approx(getattr(exact, f), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(models(), st.integers(1, 10), st.integers(0, 10), st.sampled_from([1, 2]))
def test_regression_matches_conditional(m, t, i, r):
    i = min(i, t)
    law = counts_joint_pmf(m, t)
    if law.marginal(r)[i] < 1e-300:
        return
    cond = counts_conditional(m, t, r, i)
    assert cond.mean() == pytest.approx(counts_regression(m, t, r, i), abs=1e-9)
    assert cond.total() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(models(), st.integers(1, 20))
def test_cluster_total_moments(m, t):
    c = cluster_total(m, t)
    assert c.pmf.total() == pytest.approx(1.0, abs=1e-12)
    assert c.pmf.mean() == pytest.approx(c.mean, abs=1e-9)
    assert c.pmf.var() == pytest.approx(c.var, abs=1e-9)
    np.testing.assert_allclose(c.pmf.weights, counts_joint_pmf(m, t).total_law(), atol=1e-12)


def test_cor_t_invariant(model):
    cors = [counts_moments(model, t).cor for t in range(1, 21)]
    assert max(cors) - min(cors) < 1e-12
    assert not math.isnan(cors[0])
