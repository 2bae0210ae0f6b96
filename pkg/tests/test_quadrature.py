#!/usr/bin/python3
"""
Tests for the lattice rule and the ordered-region integrals.

These tests validate that:
- The lattice rule integrates constants exactly and products accurately.
- Estimates are reproducible for a fixed seed.
- Consecutive ratios reduce to the closed forms.
- Equal scales reproduce the Beta law of the orthogonal design.
- Nested integrals match simplex volumes and a dense quadrature.
- The Beta shortcut matches a uniform order-statistic simulation.
- Shifted estimates are unbiased across seeds.
- Invalid orderings, non-finite integrands and partly empty ratios are
  reported.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from quadrature import (
    DegenerateRatioError,
    F_abc,
    LatticeRule,
    OrderingError,
    QuadratureError,
    gaussian_spacing_closed_form,
    gaussian_tail_ratio,
    korobov_generator,
    korobov_vector,
    lattice_integrate,
    nested_I,
    ortho_pvalue_shortcut,
    ortho_pvalue_tails,
    student_spacing_cdf,
    student_spacing_closed_form,
    student_tail_ratio,
    _ratio_from_shifts,
    tilde_F_abc,
)


def _upper(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def test_korobov_vector_powers_mod_n() -> None:
    """Ensure z = (1, g, g^2, ...) mod n."""
    assert korobov_vector(7, 3, 4) == (1, 3, 2, 6)


def test_korobov_generator_is_cached_and_coprime() -> None:
    """Ensure the chosen multiplier is stable and coprime with n."""
    g = korobov_generator(1021, 4)
    assert g == korobov_generator(1021, 4)
    assert math.gcd(g, 1021) == 1
    assert 2 <= g <= 1021 // 2
    assert korobov_generator(1021, 1) == 1


def test_lattice_rule_rejects_non_coprime_generator() -> None:
    """Ensure generator entries sharing a factor with n are rejected."""
    with pytest.raises(ValueError, match="coprime"):
        LatticeRule(dim=2, n_points=10, generating_vector=(1, 4))


def test_constant_integrand_is_exact() -> None:
    """Ensure a constant integrates to itself with zero spread."""
    rule = LatticeRule.korobov(3, n_points=1021, n_shifts=8, seed=1)
    est = lattice_integrate(lambda x: np.full(x.shape[0], 2.5), rule)
    assert est.value == pytest.approx(2.5)
    assert est.std_error == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("dim", [3, 5, 8])
def test_product_integrand_within_error_bars(dim: int) -> None:
    """Ensure prod x_j integrates to 2^-d within 3 standard errors."""
    rule = LatticeRule.korobov(dim, n_points=4093, n_shifts=16, seed=7)
    est = lattice_integrate(lambda x: np.prod(x, axis=1), rule)
    assert abs(est.value - 2.0**-dim) <= 3.0 * est.std_error + 1e-6


def test_estimates_reproducible_for_seed() -> None:
    """Ensure the same seed gives identical shift values."""
    f = lambda x: np.exp(-np.sum(x, axis=1))
    a = lattice_integrate(f, LatticeRule.korobov(2, n_points=1021, seed=3))
    b = lattice_integrate(f, LatticeRule.korobov(2, n_points=1021, seed=3))
    c = lattice_integrate(f, LatticeRule.korobov(2, n_points=1021, seed=4))
    assert a.shift_values == b.shift_values
    assert a.shift_values != c.shift_values


def test_non_finite_integrand_reports_point() -> None:
    """Ensure a NaN integrand raises QuadratureError with the offending point."""
    rule = LatticeRule.korobov(2, n_points=1021, n_shifts=2)
    with pytest.raises(QuadratureError, match="not finite") as info:
        lattice_integrate(lambda x: np.full(x.shape[0], np.nan), rule)
    assert info.value.point is not None
    assert info.value.point.shape == (2,)


def test_gaussian_closed_form_matches_erf_oracle() -> None:
    """Ensure (1 - Phi(3)) / (1 - Phi(2)) for (lambda_0, lambda_1, lambda_2)."""
    p = gaussian_spacing_closed_form(math.inf, 3.0, 2.0, 1.0)
    assert p == pytest.approx(_upper(3.0) / _upper(2.0), rel=1e-12)


def test_gaussian_closed_form_equal_knots_is_one() -> None:
    """Ensure an empty spacing gives p = 1."""
    assert gaussian_spacing_closed_form(3.0, 1.5, 1.5, 1.0) == 1.0
    assert gaussian_spacing_closed_form(2.0, 2.0, 2.0, 1.0) == 1.0


@pytest.mark.parametrize("a", [0, 1, 2])
def test_consecutive_qmc_ratio_matches_closed_form(a: int) -> None:
    """Ensure the QMC route reproduces the Gaussian spacing formula."""
    knots = np.array([3.1, 2.2, 1.4, 0.9])
    rho = np.array([1.0, 1.3, 0.8, 1.1])
    sigma = 0.9
    rule = LatticeRule.korobov(1, n_points=1021, n_shifts=4)
    ratio, _ = gaussian_tail_ratio(rho, sigma, knots, a, a + 1, a + 2, rule)

    lam_a = math.inf if a == 0 else knots[a - 1]
    expected = gaussian_spacing_closed_form(
        lam_a, knots[a], knots[a + 1], sigma * rho[a]
    )
    assert ratio.value == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("a", [0, 1])
def test_consecutive_student_ratio_matches_closed_form(a: int) -> None:
    """Ensure the studentized QMC route reproduces the t-spacing formula."""
    big = np.array([3.5, 2.4, 1.1])
    rho = np.array([1.0, 1.2, 0.9])
    nu = 12
    rule = LatticeRule.korobov(1, n_points=1021, n_shifts=4)
    ratio, _ = student_tail_ratio(rho, nu, big, a, a + 1, a + 2, rule)

    big_a = math.inf if a == 0 else big[a - 1]
    expected = student_spacing_closed_form(big_a, big[a], big[a + 1], rho[a], nu)
    assert ratio.value == pytest.approx(expected, abs=1e-5)


@pytest.mark.parametrize(
    "triple", [(0, 1, 3), (0, 2, 4), (1, 2, 5), (1, 3, 5), (0, 1, 5)]
)
def test_equal_scales_match_beta_law(triple: tuple[int, int, int]) -> None:
    """Ensure the QMC ratio agrees with the Beta shortcut for equal scales."""
    knots = np.array([2.7, 2.0, 1.6, 1.1, 0.7])
    rho = np.ones(5)
    rule = LatticeRule.korobov(1, n_points=4093, n_shifts=16, seed=2)
    ratio, _ = gaussian_tail_ratio(rho, 1.0, knots, *triple, rule)

    a, b, c = triple
    tails = [0.0 if k == 0 else _upper(knots[k - 1]) for k in triple]
    expected = ortho_pvalue_tails(*tails, a, b, c)
    assert abs(ratio.value - expected) <= 3.0 * ratio.std_error + 1e-3


def _order_statistic_pvalue(
    F_a: float, F_b: float, F_c: float, a: int, b: int, c: int,
    rng: np.random.Generator, draws: int,
) -> float:
    # c - a - 1 free levels uniform on (F_c, F_a); level b is the
    # (b - a)-th largest of them.
    m = c - a - 1
    levels = np.sort(rng.uniform(F_c, F_a, size=(draws, m)), axis=1)
    return float(np.mean(levels[:, m - (b - a)] >= F_b))


def test_ortho_shortcut_matches_order_statistics() -> None:
    """Ensure the shortcut equals a simulated uniform order-statistic law."""
    rng = np.random.default_rng(4)
    p = ortho_pvalue_shortcut(0.9, 0.5, 0.1, 1, 2, 5)
    oracle = _order_statistic_pvalue(0.9, 0.5, 0.1, 1, 2, 5, rng, 200_000)
    assert p == pytest.approx(stats.beta.sf(0.5, 3, 1))
    assert abs(p - oracle) < 5e-3


def test_ortho_shortcut_on_random_triples() -> None:
    """Ensure the Beta shortcut tracks the order-statistic law on 50 triples."""
    rng = np.random.default_rng(12)
    for _ in range(50):
        a = int(rng.integers(0, 4))
        b = a + int(rng.integers(1, 4))
        c = b + int(rng.integers(1, 4))
        F_b, F_c = np.sort(rng.uniform(0.05, 0.95, size=2))[::-1]
        F_a = 1.0 if a == 0 else float(rng.uniform(F_b + 0.01, 1.0))
        p = ortho_pvalue_shortcut(F_a, F_b, F_c, a, b, c)
        oracle = _order_statistic_pvalue(F_a, F_b, F_c, a, b, c, rng, 40_000)
        assert abs(p - oracle) < 0.0125, (a, b, c, F_a, F_b, F_c)


def test_ortho_shortcut_rejects_bad_order() -> None:
    """Ensure unordered inputs raise OrderingError."""
    with pytest.raises(OrderingError, match="F_a > F_b > F_c"):
        ortho_pvalue_shortcut(0.2, 0.5, 0.1, 0, 1, 2)
    with pytest.raises(OrderingError, match="a < b < c"):
        ortho_pvalue_tails(0.0, 0.1, 0.2, 2, 1, 3)


def test_student_spacing_cdf_matches_scipy() -> None:
    """Ensure T_k(x) is the Student CDF of x / rho."""
    assert student_spacing_cdf(1.5, 7, 2.0) == pytest.approx(
        stats.t.cdf(2.0 / 1.5, 7)
    )


def test_nested_I_adjacent_levels_is_one() -> None:
    """Ensure an empty chain has volume one."""
    rule = LatticeRule.korobov(1, n_points=1021)
    assert nested_I([1.0, 1.0], 1.0, 1, 2, 0.9, 0.1, rule).value == 1.0


def test_nested_I_single_level_is_cdf_width() -> None:
    """Ensure one free level with equal scales integrates to s - t."""
    rule = LatticeRule.korobov(1, n_points=1021, n_shifts=4)
    est = nested_I([1.0, 1.0, 1.0], 1.0, 1, 3, 0.9, 0.3, rule)
    assert est.value == pytest.approx(0.6, abs=1e-9)


def test_F_abc_outside_support_is_zero() -> None:
    """Ensure t above lambda_a gives an exact zero with a note."""
    rule = LatticeRule.korobov(2, n_points=1021)
    est = F_abc([1.0] * 4, 1.0, 2.0, 0.5, 3.0, 1, 2, 4, rule)
    assert est.value == 0.0
    assert est.note == "outside-support"


def test_F_abc_is_increasing_in_t() -> None:
    """Ensure the conditional distribution function grows with t."""
    rule = LatticeRule.korobov(2, n_points=1021, n_shifts=4)
    rho = [1.0, 0.9, 1.2, 1.1]
    low = F_abc(rho, 1.0, 3.0, 0.5, 1.2, 1, 2, 4, rule).value
    high = F_abc(rho, 1.0, 3.0, 0.5, 2.4, 1, 2, 4, rule).value
    assert 0.0 < low < high


def test_tilde_F_abc_support_and_monotonicity() -> None:
    """Ensure the studentized F is zero above Lambda_a and grows with t."""
    rule = LatticeRule.korobov(2, n_points=1021, n_shifts=4)
    rho = [1.0, 0.9, 1.2, 1.1]
    assert tilde_F_abc(rho, 10, 3.0, 0.5, 3.5, 1, 2, 4, rule).value == 0.0
    low = tilde_F_abc(rho, 10, 3.0, 0.5, 1.2, 1, 2, 4, rule).value
    high = tilde_F_abc(rho, 10, 3.0, 0.5, 2.4, 1, 2, 4, rule).value
    assert 0.0 < low < high
    with pytest.raises(OrderingError, match="nu"):
        tilde_F_abc(rho, 0, 3.0, 0.5, 1.2, 1, 2, 4, rule)


def test_nested_I_three_levels_equal_scales() -> None:
    """Ensure three free levels fill the ordered simplex volume (s - t)^3 / 6."""
    rule = LatticeRule.korobov(3, n_points=4093, n_shifts=16, seed=5)
    est = nested_I([1.0] * 4, 1.0, 0, 4, 0.9, 0.1, rule)
    assert est.value == pytest.approx(0.8**3 / 6.0, abs=4.0 * est.std_error + 1e-4)
    assert est.value == pytest.approx(0.08533, abs=5e-4)


def test_nested_I_two_levels_matches_dblquad() -> None:
    """Ensure unequal scales agree with a dense two-dimensional quadrature."""
    rho = [1.0, 1.4, 0.7]
    s, t = 0.95, 0.2
    upper = rho[0] * stats.norm.ppf(s)
    lower = rho[2] * stats.norm.ppf(t)
    oracle, _ = integrate.dblquad(
        lambda l2, l1: stats.norm.pdf(l1, scale=rho[0])
        * stats.norm.pdf(l2, scale=rho[1]),
        lower,
        upper,
        lambda l1: lower,
        lambda l1: l1,
        epsabs=1e-11,
    )
    rule = LatticeRule.korobov(2, n_points=4093, n_shifts=16, seed=9)
    est = nested_I(rho, 1.0, 0, 3, s, t, rule)
    assert abs(est.value - oracle) <= 4.0 * est.std_error + 1e-5


def test_tilde_F_abc_large_nu_matches_gaussian_ratio() -> None:
    """Ensure nu = 10^6 reproduces the Gaussian ratio on a non-consecutive triple."""
    knots = np.array([2.7, 2.0, 1.6, 1.1])
    rho = [1.0, 0.9, 1.2, 1.1]
    a, b, c = 1, 2, 4
    rule = LatticeRule.korobov(2, n_points=4093, n_shifts=16, seed=3)

    whole = tilde_F_abc(rho, 1e6, knots[a - 1], knots[c - 1], knots[a - 1],
                        a, b, c, rule)
    part = tilde_F_abc(rho, 1e6, knots[a - 1], knots[c - 1], knots[b - 1],
                       a, b, c, rule)
    gauss, _ = gaussian_tail_ratio(rho, 1.0, knots, a, b, c, rule)
    assert 1.0 - part.value / whole.value == pytest.approx(gauss.value, abs=3e-3)


def test_shifted_lattice_estimate_is_unbiased() -> None:
    """Ensure the single-shift estimate averages to the integral over seeds."""
    exact = (1.0 - math.exp(-1.0)) ** 2
    f = lambda x: np.exp(-np.sum(x, axis=1))
    values = np.array(
        [
            lattice_integrate(
                f, LatticeRule.korobov(2, n_points=31, n_shifts=1, seed=seed)
            ).value
            for seed in range(400)
        ]
    )
    se = values.std(ddof=1) / math.sqrt(values.size)
    assert abs(values.mean() - exact) <= 4.0 * se


def test_ratio_of_empty_region_is_one() -> None:
    """Ensure zero denominators on every shift give p = 1."""
    rule = LatticeRule.korobov(1, n_points=1021, n_shifts=3)
    ratio, den = _ratio_from_shifts([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], rule)
    assert ratio.value == 1.0
    assert ratio.note == "degenerate"
    assert den.value == 0.0


def test_ratio_with_some_zero_denominators_raises() -> None:
    """Ensure a zero denominator on only some shifts is not read as p = 1."""
    rule = LatticeRule.korobov(1, n_points=1021, n_shifts=2)
    with pytest.raises(DegenerateRatioError, match="1 of 2 shifts"):
        _ratio_from_shifts([0.1, 0.2], [0.0, 0.5], rule)
    ratio, _ = _ratio_from_shifts([0.1, 0.2], [0.4, 0.5], rule)
    assert ratio.value == pytest.approx(0.3 / 0.9)
