import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsebackstep.mathkit import (
    FourierBasis,
    FseRbfEstimator,
    SwitchRegion,
    fse_basis,
    fse_eval,
    grid_centers,
    lemma2_tanh_gap,
    lemma3_margins,
    lemma3_power_sum_check,
    lemma4_check,
    lemma4_coefficients,
    lemma4_margin,
    psi,
    psi_gap_bound,
    rbf_eval,
    rbf_grad_p,
    residual_bound,
    settling_time_bound,
    sig_pow,
    smooth_switch,
    switch_indicator,
)
from fsebackstep.verify import benchmark_estimator, finite_difference_grad_p

SQ2 = math.sqrt(2.0)
finite = dict(allow_nan=False, allow_infinity=False)


def single_node(center=(0.0, 0.0, 0.0), width=2.0, state_dim=2):
    return FseRbfEstimator(np.array([center]), np.array([width]), FourierBasis(1, 1.0), state_dim, 1)


# -- Fourier regressor ---------------------------------------------------------


@pytest.mark.parametrize(
    "t, m, expected",
    [
        (0.0, 3, [1.0, 0.0, SQ2]),
        (math.pi / 2, 3, [1.0, SQ2, 0.0]),
        (math.pi / 4, 5, [1.0, 1.0, 1.0, SQ2, 0.0]),
    ],
)
def test_fse_basis_values(t, m, expected):
    np.testing.assert_allclose(fse_basis(t, FourierBasis(m, 2 * math.pi)), expected, atol=1e-15)


@pytest.mark.parametrize("m", [0, 2, -1, 4])
def test_fourier_basis_rejects_even_or_nonpositive_m(m):
    with pytest.raises(ValueError):
        FourierBasis(m, 1.0)


def test_fourier_basis_rejects_nonpositive_period():
    with pytest.raises(ValueError):
        FourierBasis(3, 0.0)


@given(st.floats(-50, 50, **finite), st.sampled_from([1, 3, 7, 11]), st.floats(0.1, 10, **finite))
def test_fse_basis_shape_and_bounds(t, m, T):
    rho = fse_basis(t, FourierBasis(m, T))
    assert rho.shape == (m,)
    assert rho[0] == 1.0
    assert np.all(np.abs(rho) <= SQ2 + 1e-15)


def test_fse_basis_periodic_over_ten_periods():
    basis = FourierBasis(7, math.pi)
    ts = np.linspace(0.0, 10 * math.pi, 2001)
    worst = max(np.max(np.abs(fse_basis(t, basis) - fse_basis(t + math.pi, basis))) for t in ts)
    assert worst < 1e-9


def test_fse_eval_zero_and_constant_pick():
    rho = fse_basis(0.7, FourierBasis(5, 2.0))
    np.testing.assert_array_equal(fse_eval(np.zeros((5, 2)), rho), [0.0, 0.0])
    l_hat = np.zeros((5, 1))
    l_hat[0, 0] = 1.0
    assert fse_eval(l_hat, rho)[0] == 1.0


def test_fse_eval_matches_double_loop():
    rng = np.random.default_rng(3)
    l_hat = rng.standard_normal((7, 3))
    rho = fse_basis(1.3, FourierBasis(7, math.pi))
    expected = [sum(l_hat[r, j] * rho[r] for r in range(7)) for j in range(3)]
    np.testing.assert_allclose(fse_eval(l_hat, rho), expected, rtol=1e-14)


def test_fse_eval_dimension_mismatch():
    with pytest.raises(ValueError):
        fse_eval(np.zeros((5, 1)), np.ones(3))


# -- Gaussian layer --------------------------------------------------------------


def test_rbf_at_center_is_one():
    est = benchmark_estimator()
    for j in (0, 17, 215):
        c = est.centers[j]
        assert rbf_eval(est, c[:2], c[2:])[j] == 1.0


def test_rbf_single_node_value():
    # ||x|| = 2 with width 2 gives exp(-1)
    h = rbf_eval(single_node(), [0.0, 0.0], [2.0])
    assert h[0] == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert h[0] == pytest.approx(0.367879, abs=5e-7)


def test_rbf_far_tail():
    est = single_node()
    assert rbf_eval(est, [20.0, 0.0], [0.0])[0] < 1e-10


@given(st.lists(st.floats(-5, 5, **finite), min_size=3, max_size=3))
@settings(max_examples=200)
def test_rbf_outputs_in_unit_interval(x):
    h = rbf_eval(benchmark_estimator(), x[:2], x[2:])
    assert np.all(h > 0.0) and np.all(h <= 1.0)


def test_rbf_grad_single_node_hand_value():
    g = rbf_grad_p(single_node(), [0.0, 0.0], [1.0])
    assert g.shape == (1, 1)
    assert g[0, 0] == pytest.approx(-0.5 * math.exp(-0.25), rel=1e-15)


def test_rbf_grad_zero_at_center():
    est = benchmark_estimator()
    c = est.centers[100]
    assert np.all(rbf_grad_p(est, c[:2], c[2:])[100] == 0.0)


def test_rbf_grad_matches_finite_differences():
    est = benchmark_estimator()
    rng = np.random.default_rng(11)
    lo, hi = est.centers.min(axis=0), est.centers.max(axis=0)
    for _ in range(200):
        x = rng.uniform(lo, hi)
        a = rbf_grad_p(est, x[:2], x[2:])
        fd = finite_difference_grad_p(est, x[:2], x[2:])
        assert np.linalg.norm(a - fd) / np.linalg.norm(a) < 1e-6


def test_rbf_grad_multi_parameter_finite_differences():
    rng = np.random.default_rng(5)
    centers = rng.uniform(-1, 1, (12, 3))
    est = FseRbfEstimator(centers, rng.uniform(0.5, 2.0, 12), FourierBasis(3, 1.0), 1, 2)
    x = rng.uniform(-1, 1, 3)
    a = rbf_grad_p(est, x[:1], x[1:])
    assert a.shape == (12, 2)
    fd = finite_difference_grad_p(est, x[:1], x[1:])
    assert np.linalg.norm(a - fd) / np.linalg.norm(a) < 1e-6


def test_estimator_validation():
    with pytest.raises(ValueError):
        FseRbfEstimator(np.zeros((2, 3)), np.array([1.0, 0.0]), FourierBasis(1, 1.0), 2, 1)
    with pytest.raises(ValueError):
        FseRbfEstimator(np.zeros((2, 4)), np.ones(2), FourierBasis(1, 1.0), 2, 1)
    with pytest.raises(ValueError):
        rbf_eval(single_node(), [0.0], [0.0])


def test_grid_centers():
    c = grid_centers([(-1.5, 1.5), (-1.5, 1.5), (-3.0, 3.0)], 6)
    assert c.shape == (216, 3)
    np.testing.assert_allclose(sorted(set(c[:, 2])), np.linspace(-3, 3, 6))
    np.testing.assert_array_equal(grid_centers([(0.0, 1.0)], 2)[:, 0], [0.0, 1.0])
    np.testing.assert_array_equal(grid_centers([(0.0, 1.0)], 3)[:, 0], [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        grid_centers([(1.0, 0.0)], 3)


# -- signed power, switch, shaping ------------------------------------------------


def test_sig_pow_examples():
    assert sig_pow(0.0, 0.6) == 0.0
    assert sig_pow(-8.0, 1.0 / 3.0) == pytest.approx(-2.0, rel=1e-15)
    assert sig_pow(4.0, 0.5) == 2.0
    np.testing.assert_allclose(sig_pow(np.array([-4.0, 0.0, 9.0]), 0.5), [-2.0, 0.0, 3.0])


@given(st.floats(-1e3, 1e3, **finite), st.floats(-1e3, 1e3, **finite), st.floats(0.05, 1.0, **finite))
def test_sig_pow_odd_monotone_sign(x, y, m):
    assert sig_pow(-x, m) == -sig_pow(x, m)
    assert sig_pow(x, m) * x >= 0
    if x <= y:
        assert sig_pow(x, m) <= sig_pow(y, m)


def test_smooth_switch_examples():
    reg = SwitchRegion(1.0, 2.0, 2)
    assert smooth_switch(0.5, reg) == 1.0
    assert smooth_switch(2.5, reg) == 0.0
    assert smooth_switch(math.sqrt(2.5), reg) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("c1, c2", [(1.0, 1.0), (2.0, 1.0), (0.0, 1.0), (-1.0, 1.0)])
def test_switch_region_validation(c1, c2):
    with pytest.raises(ValueError):
        SwitchRegion(c1, c2)


@given(st.floats(-5, 5, **finite), st.integers(1, 4))
def test_smooth_switch_even_and_bounded(x, n):
    reg = SwitchRegion(1.5, 2.25, n)
    v = smooth_switch(x, reg)
    assert 0.0 <= v <= 1.0
    assert smooth_switch(-x, reg) == v


@pytest.mark.parametrize("n", [2, 3, 4])
def test_smooth_switch_flat_at_edges(n):
    # k-th one-sided differences into the ramp vanish for k = 1..n-1
    reg = SwitchRegion(1.0, 2.0, n)
    h = 1e-4
    for edge in (1.0, 2.0, -1.0, -2.0):
        into_ramp = (1.0 if abs(edge) == 1.0 else -1.0) * math.copysign(1.0, edge)
        f = [smooth_switch(edge + j * into_ramp * h, reg) for j in range(n)]
        for k in range(1, n):
            diff = sum((-1) ** (k - j) * math.comb(k, j) * f[j] for j in range(k + 1)) / h**k
            assert abs(diff) < 1e-4, (edge, k, diff)


def test_smooth_switch_derivative_continuous_order2():
    # a jump in the first derivative would show up as a kink in central differences
    reg = SwitchRegion(1.0, 2.0, 2)
    h = 1e-4
    for edge in (1.0, 2.0):
        left = (smooth_switch(edge, reg) - smooth_switch(edge - h, reg)) / h
        right = (smooth_switch(edge + h, reg) - smooth_switch(edge, reg)) / h
        assert abs(left - right) < 1e-4


def test_switch_indicator():
    r = SwitchRegion(1.0, 2.0, 2)
    assert switch_indicator([0.1, -0.2], [0.5], [r, r], [r]) == 1.0
    assert switch_indicator([0.1, 3.0], [0.5], [r, r], [r]) == 0.0
    mid = math.sqrt(2.5)
    assert switch_indicator([mid, 0.0], [mid], [r, r], [r]) == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(ValueError):
        switch_indicator([0.0], [0.0], [r, r], [r])


def test_psi_examples():
    assert psi(0.0, 0.6, 0.01, 0.01) == 0.0
    assert psi(1.0, 0.6, 0.01, 0.01) == pytest.approx(1.0, abs=5e-6)


@given(st.floats(-100, 100, **finite), st.sampled_from([0.6, 5 / 7, 7 / 9]),
       st.floats(1e-3, 1.0, **finite), st.floats(1e-3, 1.0, **finite))
def test_psi_odd_and_gap_bound(sigma, m_c, tau, eps):
    p = psi(sigma, m_c, tau, eps)
    assert math.isfinite(p)
    assert psi(-sigma, m_c, tau, eps) == -p
    assert sigma * p >= abs(sigma) ** (1 + m_c) - psi_gap_bound(tau, eps) - 1e-12


# -- inequality oracles ------------------------------------------------------------


def test_tanh_gap_examples():
    assert lemma2_tanh_gap(0.0, 1.0) == 0.0
    assert lemma2_tanh_gap(100.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert lemma2_tanh_gap(-100.0, 1.0) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(-1e3, 1e3, **finite), st.floats(1e-3, 1e2, **finite))
def test_tanh_gap_bounds(sigma, kappa):
    gap = lemma2_tanh_gap(sigma, kappa)
    assert -1e-12 <= gap <= 0.2785 * kappa + 1e-12


def test_tanh_gap_maximum_is_near_constant():
    # max of x(1 - tanh x) over x > 0 sits just below the 0.2785 constant
    x = np.linspace(0.0, 5.0, 200001)
    peak = float(np.max(lemma2_tanh_gap(x, 1.0)))
    assert 0.2784 < peak <= 0.2785


def test_power_sum_examples():
    assert lemma3_power_sum_check([3.0, -1.0, 2.0], 1.0)
    assert lemma3_power_sum_check([1.0, 1.0], 0.5)
    lo, hi = lemma3_margins(np.array([[1.0, 1.0]]), 0.5)
    # sqrt(2) <= 2 <= sqrt(2) * sqrt(2)
    assert lo[0] == pytest.approx(2.0 - SQ2)
    assert hi[0] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        lemma3_power_sum_check([], 0.5)


@given(st.lists(st.floats(-100, 100, **finite), min_size=1, max_size=8), st.floats(0.01, 1.0, **finite))
def test_power_sum_property(z, beta):
    assert lemma3_power_sum_check(z, beta)


def test_power_sum_scalar_matches_vectorised():
    rng = np.random.default_rng(2)
    z = rng.standard_normal((50, 4))
    beta = rng.uniform(0.1, 1.0, 50)
    lo, hi = lemma3_margins(z, beta)
    for row, b, a, c in zip(z, beta, lo, hi):
        assert lemma3_power_sum_check(row, b) == bool(a >= -1e-12 and c >= -1e-12)


def test_odd_power_coefficients_hand_values():
    b1, b2 = lemma4_coefficients(0.6)
    expected_b1 = (2 ** -0.4 - 2 ** (-0.4 * 1.6)) / 1.6
    expected_b2 = (2.2 / 1.6 + 2 ** (-(0.4**2) * 1.6) / 1.6 - 2 ** -0.4) / 1.6
    assert b1 == pytest.approx(expected_b1, rel=1e-14)
    assert b2 == pytest.approx(expected_b2, rel=1e-14)
    # 30-digit reference values
    assert b1 == pytest.approx(0.0725908340460918388, rel=1e-14)
    assert b2 == pytest.approx(0.7128254821484797216, rel=1e-14)


@pytest.mark.parametrize("m1, m2", [(5, 3), (7, 5), (9, 7)])
def test_odd_power_examples(m1, m2):
    for chi in (-3.0, 0.0, 0.4, 2.0):
        assert lemma4_check(0.0, chi, m1, m2)
    for v in (-2.0, 0.3, 5.0):
        assert lemma4_check(v, v, m1, m2)


@given(st.floats(-20, 20, **finite), st.floats(-20, 20, **finite), st.sampled_from([(5, 3), (7, 5), (9, 7)]))
def test_odd_power_property(chi_t, chi, ms):
    assert lemma4_check(chi_t, chi, *ms)
    assert lemma4_margin(chi_t, chi, *ms) >= -1e-9


@pytest.mark.parametrize("m1, m2", [(4, 3), (5, 5), (5, 6), (3, 0)])
def test_odd_power_rejects_bad_ratio(m1, m2):
    with pytest.raises(ValueError):
        lemma4_check(1.0, 1.0, m1, m2)


# -- calculators -----------------------------------------------------------------


def test_settling_time_bound_values():
    assert settling_time_bound(1, 1, 0.8, 0.5, 0.0) == 0.0
    assert settling_time_bound(1, 1, 0.8, 0.5, 1.0) == pytest.approx(5 * math.log(3), abs=1e-9)
    first = 10 * math.log(1.5)
    assert first < 5 * math.log(3)


@given(st.floats(0, 100, **finite), st.floats(0, 100, **finite))
def test_settling_time_monotone_in_v0(a, b):
    lo, hi = sorted((a, b))
    assert settling_time_bound(2, 0.5, 0.6, 0.3, lo) <= settling_time_bound(2, 0.5, 0.6, 0.3, hi)


def test_residual_bound_values():
    assert residual_bound(1, 1, 0, 0.5, 0.5) == 0.0
    assert residual_bound(1, 1, 1, 0.5, 0.5) == pytest.approx(2.0, abs=1e-12)


def test_residual_bound_linear_in_first_branch():
    # small v3 makes the power branch the smaller one, large v3 the linear branch
    base = residual_bound(1, 1, 4, 0.5, 0.5)
    assert base == pytest.approx(8.0)
    assert residual_bound(1, 1, 8, 0.5, 0.5) == pytest.approx(2 * base)


@pytest.mark.parametrize("args", [(0, 1, 0.5, 0.5, 1), (1, 1, 1.0, 0.5, 1), (1, 1, 0.5, 0.0, 1), (1, 1, 0.5, 0.5, -1)])
def test_settling_time_bound_rejects_bad_input(args):
    with pytest.raises(ValueError):
        settling_time_bound(*args)
