import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from folddiff import covariance_from_if, infer, maxT_critical, simultaneous_intervals, wald_intervals

Z975 = norm.ppf(0.975)


def test_covariance_two_pass_oracle():
    rng = np.random.default_rng(0)
    IF = rng.normal(size=(100, 5))
    expected = np.zeros((5, 5))
    for j in range(5):
        for k in range(5):
            total = 0.0
            for i in range(100):
                total += IF[i, j] * IF[i, k]
            expected[j, k] = total / 100
    np.testing.assert_allclose(covariance_from_if(IF), expected, rtol=1e-12, atol=1e-14)


def test_covariance_zero_column_and_diagonal():
    IF = np.zeros((4, 3))
    IF[0, 0], IF[1, 1], IF[2, 0] = 2.0, 3.0, 1.0
    S = covariance_from_if(IF)
    np.testing.assert_array_equal(S, np.diag([5 / 4, 9 / 4, 0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_covariance_psd(seed):
    rng = np.random.default_rng(seed)
    IF = rng.normal(size=(int(rng.integers(2, 50)), int(rng.integers(1, 8))))
    S = covariance_from_if(IF)
    assert np.allclose(S, S.T)
    assert np.linalg.eigvalsh(S).min() >= -1e-10


def test_wald_example():
    ci, p = wald_intervals([0.5], [[0.01 * 100]], 100, 0.05)
    np.testing.assert_allclose(ci[0], [0.5 - Z975 * 0.1, 0.5 + Z975 * 0.1], atol=1e-15)
    assert np.round(ci[0], 3).tolist() == [0.304, 0.696]
    assert abs(p[0] - 2 * norm.sf(5)) <= 1e-20 and 5.6e-7 < p[0] < 5.8e-7
    assert abs(Z975 - 1.959964) < 1e-6


def test_wald_degenerate_and_undefined():
    ci, p = wald_intervals([0.3, 0.0, np.nan], np.diag([0.0, 0.0, 1.0]), 10)
    np.testing.assert_array_equal(ci[0], [0.3, 0.3])
    np.testing.assert_array_equal(ci[1], [0.0, 0.0])
    assert p[0] == 0.0 and p[1] == 1.0
    assert np.isnan(p[2]) and np.all(np.isnan(ci[2]))
    with pytest.raises(ValueError):
        wald_intervals([0.0], [[1.0]], 10, alpha=1.5)


def test_maxT_univariate():
    rng = np.random.default_rng(1)
    crit = maxT_critical(rng.normal(size=(200, 1)), B=100_000, seed=3)
    assert crit == Z975  # fewer than two columns: marginal quantile


def test_maxT_identity_and_comonotone():
    rng = np.random.default_rng(2)
    # exactly orthogonal columns give an identity correlation matrix
    Q, _ = np.linalg.qr(rng.normal(size=(500, 10)))
    c_ind = maxT_critical(Q, B=100_000, seed=4)
    closed = norm.ppf((1 + 0.95 ** (1 / 10)) / 2)
    assert abs(c_ind - closed) <= 0.03
    bonf = norm.ppf(1 - 0.05 / 20)
    assert c_ind <= bonf + 0.03
    x = rng.normal(size=(300, 1))
    c_same = maxT_critical(np.hstack([x, 2 * x, 0.5 * x]), B=100_000, seed=4)
    assert abs(c_same - Z975) <= 0.02


def test_maxT_properties():
    rng = np.random.default_rng(3)
    IF = rng.normal(size=(100, 6)) @ rng.normal(size=(6, 6))
    a = maxT_critical(IF, B=5000, seed=9)
    assert a == maxT_critical(IF, B=5000, seed=9)
    assert maxT_critical(IF, B=5000, alpha=0.01, seed=9) >= a
    assert Z975 <= a <= norm.ppf(1 - 0.05 / 12) + 0.05
    bad = IF.copy()
    bad[0, 0] = np.inf
    with pytest.raises(ValueError):
        maxT_critical(bad)


def test_simultaneous_intervals():
    psi, se = np.array([0.1, -0.4]), np.array([0.2, 0.05])
    np.testing.assert_array_equal(
        simultaneous_intervals(psi, se, Z975), np.column_stack([psi - Z975 * se, psi + Z975 * se])
    )
    narrow, wide = simultaneous_intervals(psi, se, 2.0), simultaneous_intervals(psi, se, 2.5)
    assert np.all(wide[:, 0] <= narrow[:, 0]) and np.all(wide[:, 1] >= narrow[:, 1])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_infer_nesting(seed):
    rng = np.random.default_rng(seed)
    J = int(rng.integers(1, 7))
    IF = rng.normal(size=(40, J)) @ rng.normal(size=(J, J))
    psi = rng.normal(size=J)
    if J > 1:
        psi[0] = np.nan
    res = infer(psi, IF, B=2000, seed=seed % 1000)
    ok = np.isfinite(psi)
    assert res.crit_simultaneous >= res.crit_marginal
    assert np.all(res.ci_simultaneous[ok, 0] <= res.ci_marginal[ok, 0])
    assert np.all(res.ci_simultaneous[ok, 1] >= res.ci_marginal[ok, 1])
    assert np.all(np.isnan(res.se[~ok]))
