import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from mapchaos import levy_measures as lm
from mapchaos.errors import OrderTooHigh, ValidationError


def quad_moment(pdf, k, lo=-np.inf, hi=np.inf):
    return integrate.quad(lambda x: x**k * pdf(x), lo, hi, limit=200)[0]


LAWS = [
    (lm.Gaussian(0.3, 1.2), stats.norm(0.3, 1.2).pdf, -np.inf, np.inf),
    (lm.Uniform(-0.5, 2.0), stats.uniform(-0.5, 2.5).pdf, -0.5, 2.0),
    (lm.Exponential(1.5, 1), stats.expon(scale=1 / 1.5).pdf, 0, np.inf),
    (lm.Exponential(2.0, -1), lambda x: stats.expon(scale=0.5).pdf(-x), -np.inf, 0),
]


@pytest.mark.parametrize("law,pdf,lo,hi", LAWS)
@pytest.mark.parametrize("k", range(1, 9))
def test_moments_match_quadrature(law, pdf, lo, hi, k):
    assert law.moment(k) == pytest.approx(quad_moment(pdf, k, lo, hi), rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("law,pdf,lo,hi", LAWS)
def test_truncated_mean_matches_quadrature(law, pdf, lo, hi):
    left = integrate.quad(lambda x: x * pdf(x), lo, min(-1.0, hi))[0] if lo < -1 else 0.0
    right = integrate.quad(lambda x: x * pdf(x), max(1.0, lo), hi)[0] if hi > 1 else 0.0
    assert law.truncated_mean() == pytest.approx(left + right, rel=1e-9, abs=1e-12)


def test_two_point_enumeration():
    law = lm.TwoPoint(2.0, 0.25, -0.5, 0.75)
    for k in range(1, 7):
        assert law.moment(k) == pytest.approx(0.25 * 2.0**k + 0.75 * (-0.5) ** k)
    assert law.truncated_mean() == pytest.approx(0.5)


def test_standard_gaussian_scaled_moments():
    nu = lm.LevyMeasureSpec(2.0, lm.Gaussian(0.0, 1.0))
    t = lm.moment_table(nu, None, 4)
    assert t.scalar.tolist() == pytest.approx([2, 0, 2, 0, 6, 0, 30, 0, 210])
    assert t.big_jump_mean == pytest.approx(0.0, abs=1e-15)


def test_zero_measure_has_zero_moments():
    nu = lm.LevyMeasureSpec(0.0, lm.Uniform(1, 2))
    assert nu.is_zero
    assert all(lm.scalar_moment(nu, k) == 0.0 for k in range(1, 9))
    assert lm.joint_moment(nu, lm.Deterministic(0.5), 2, 1) == 0.0
    assert lm.big_jump_mean(nu) == 0.0


def test_order_limit():
    nu = lm.LevyMeasureSpec(1.0, lm.Gaussian())
    with pytest.raises(OrderTooHigh):
        lm.scalar_moment(nu, 9, k_max=4)
    with pytest.raises(OrderTooHigh):
        lm.moment_table(nu, None, lm.K_MAX_LIMIT + 1)


def test_joint_moment_single_jump_enumeration():
    # one jump of size 1, U = x/2: c_{k,l} = (1/2)^k
    nu = lm.LevyMeasureSpec(1.0, lm.TwoPoint(1.0, 1.0, 0.0, 0.0))
    t = lm.moment_table(nu, lm.Deterministic(0.5), 4)
    assert t.c(1, 1) == pytest.approx(0.5)
    assert t.c(2, 0) == pytest.approx(0.25)
    assert t.c(3, 2) == pytest.approx(0.125)


def test_joint_moment_affine_matches_two_dimensional_quadrature():
    law = lm.Uniform(1.0, 2.0)
    u = lm.Affine(0.7, -0.2, 0.4)
    nu = lm.LevyMeasureSpec(1.5, law)
    for k, l in [(1, 0), (2, 1), (3, 2), (4, 0), (2, 3)]:
        def integrand(z, x):
            y = 0.7 * x - 0.2 + 0.4 * z
            return y**k * x**l * stats.norm.pdf(z)

        val = integrate.dblquad(integrand, 1.0, 2.0, -10, 10)[0]
        assert lm.joint_moment(nu, u, k, l) == pytest.approx(1.5 * val, rel=1e-7)


def test_independent_triggered_law_factorizes():
    nu = lm.LevyMeasureSpec(3.0, lm.Uniform(1.0, 2.0))
    u = lm.Independent(lm.Gaussian(0.0, 2.0))
    # c_{1,1} = lambda E[U] E[J] = 0 for a centred U
    assert lm.joint_moment(nu, u, 1, 1) == 0.0
    assert lm.joint_moment(nu, u, 2, 1) == pytest.approx(3.0 * 4.0 * 1.5)


@settings(max_examples=50, deadline=None)
@given(
    lam=st.floats(0.01, 20),
    c=st.floats(0.1, 10),
    mean=st.floats(-2, 2),
    sd=st.floats(0.1, 3),
    k=st.integers(1, 8),
)
def test_moments_scale_linearly_with_intensity(lam, c, mean, sd, k):
    law = lm.Gaussian(mean, sd)
    a = lm.scalar_moment(lm.LevyMeasureSpec(lam, law), k)
    b = lm.scalar_moment(lm.LevyMeasureSpec(c * lam, law), k)
    assert b == pytest.approx(c * a, rel=1e-12, abs=1e-300)


@settings(max_examples=50, deadline=None)
@given(lo=st.floats(-3, 3), width=st.floats(0.05, 4), n=st.integers(1, 4))
def test_even_hankel_is_positive_semidefinite(lo, width, n):
    nu = lm.LevyMeasureSpec(1.0, lm.Uniform(lo, lo + width))
    h = lm.moment_table(nu, None, 4).hankel(n, shift=2)
    assert np.linalg.eigvalsh(h).min() >= -1e-10 * np.trace(h)


def test_sampling_matches_moments():
    rng = np.random.default_rng(5)
    for law in (lm.Gaussian(0.5, 2), lm.Uniform(1, 2), lm.TwoPoint(1, 0.3, -2, 0.7), lm.Exponential(2, -1)):
        x = law.sample(rng, 200_000)
        for k in (1, 2):
            se = x.__pow__(k).std() / math.sqrt(x.size)
            assert abs(np.mean(x**k) - law.moment(k)) < 4 * se


def test_issues_are_reported():
    assert lm.LevyMeasureSpec(-1.0, lm.Gaussian()).issues() == ["negative-intensity"]
    assert "uniform-empty-interval" in lm.Uniform(2, 1).issues()
    assert "twopoint-bad-probabilities" in lm.TwoPoint(1, 0.4, 2, 0.4).issues()
    assert "affine-negative-noise" in lm.Affine(1, 0, -1).issues()


def test_exponential_moment_condition():
    nu = lm.LevyMeasureSpec(1.0, lm.Exponential(2.0, 1))
    lm.check_exponential_moment(nu, 1.5)
    with pytest.raises(ValidationError):
        lm.check_exponential_moment(nu, 2.0)
    # negative jumps never violate it
    lm.check_exponential_moment(lm.LevyMeasureSpec(1.0, lm.Exponential(2.0, -1)), 10.0)


@pytest.mark.parametrize(
    "u", [lm.Deterministic(0.5), lm.Affine(1.0, 0.2, 0.3), lm.Independent(lm.Exponential(1.0, -1))]
)
def test_json_round_trip(u):
    nu = lm.LevyMeasureSpec(1.5, lm.TwoPoint(1, 0.5, -1, 0.5))
    assert lm.measure_from_dict(lm.measure_to_dict(nu)) == nu
    assert lm.triggered_from_dict(lm.triggered_to_dict(u)) == u
