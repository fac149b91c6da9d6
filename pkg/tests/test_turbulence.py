from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from fsomimo.streams import derive_rng
from fsomimo.turbulence import (
    MODERATE,
    REGIMES,
    STRONG,
    WEAK,
    ChannelMatrix,
    TurbulenceRegime,
    draw_channel,
    gamma_gamma_cdf,
    gamma_gamma_moment,
    gamma_gamma_pdf,
    intensity_upper_limit,
    sample_gamma_gamma,
    scintillation_index,
    tail_mass_bound,
)

ALL = list(REGIMES.values())


def _si_exact(alpha: str, beta: str) -> float:
    a, b = Fraction(alpha), Fraction(beta)
    return float((1 + 1 / a) * (1 + 1 / b) - 1)


@pytest.mark.parametrize(
    "regime, exact, quoted",
    [
        (STRONG, _si_exact("4.2", "1.4"), 1.122449),
        (MODERATE, _si_exact("4.0", "1.9"), 0.907895),
        (WEAK, _si_exact("11.6", "10.1"), 0.193756),
    ],
)
def test_scintillation_index(regime, exact, quoted):
    assert scintillation_index(regime) == pytest.approx(exact, rel=1e-12)
    assert scintillation_index(regime) == pytest.approx(quoted, abs=1e-5)


def test_regime_validation():
    with pytest.raises(ValueError):
        TurbulenceRegime(0.0, 1.0)
    with pytest.raises(ValueError):
        TurbulenceRegime(1.0, -2.0)


@pytest.fixture(scope="module")
def strong_draws():
    return sample_gamma_gamma(STRONG, derive_rng(11, 0), 1_000_000)


def test_sampler_unit_mean(strong_draws):
    assert 0.99 <= strong_draws.mean() <= 1.01


def test_sampler_scintillation(strong_draws):
    si = np.mean(strong_draws**2) / strong_draws.mean() ** 2 - 1
    assert si == pytest.approx(1.1224, rel=0.02)


def test_sampler_positive(strong_draws):
    assert np.all(strong_draws > 0)


def test_sampler_scalar_draw():
    v = sample_gamma_gamma(WEAK, derive_rng(1))
    assert isinstance(v, float) and v > 0


@settings(max_examples=30, deadline=None)
@given(
    alpha=st.floats(0.2, 30.0),
    beta=st.floats(0.2, 30.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_sampler_always_positive(alpha, beta, seed):
    x = sample_gamma_gamma(TurbulenceRegime(alpha, beta), derive_rng(seed), 2000)
    assert np.all(x > 0) and np.all(np.isfinite(x))


@pytest.mark.parametrize("regime", ALL, ids=lambda r: r.name)
def test_pdf_normalizes_on_0_50(regime):
    total, _ = integrate.quad(lambda i: gamma_gamma_pdf(regime, i), 0, 50, limit=400)
    assert total == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("regime", ALL, ids=lambda r: r.name)
def test_pdf_unit_mean(regime):
    m, _ = integrate.quad(lambda i: i * gamma_gamma_pdf(regime, i), 0, 50, limit=400)
    assert m == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("regime", ALL, ids=lambda r: r.name)
def test_pdf_normalizes_to_bounded_tail_limit(regime):
    i_max = intensity_upper_limit(regime, 1e-6)
    assert tail_mass_bound(regime, i_max) < 1e-6
    total, _ = integrate.quad(lambda i: gamma_gamma_pdf(regime, i), 0, i_max, limit=400)
    assert total == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("intensity", [0.05, 0.4, 1.0, 2.5, 7.0])
def test_pdf_matches_product_density_convolution(intensity):
    # Independent route: density of X*Y as int f_X(x) f_Y(I/x) / x dx.
    a, b = STRONG.alpha, STRONG.beta
    fx = stats.gamma(a, scale=1 / a).pdf
    fy = stats.gamma(b, scale=1 / b).pdf
    conv, _ = integrate.quad(lambda x: fx(x) * fy(intensity / x) / x, 0, np.inf, limit=400)
    assert gamma_gamma_pdf(STRONG, intensity) == pytest.approx(conv, rel=1e-6)


def test_pdf_domain_error():
    with pytest.raises(ValueError):
        gamma_gamma_pdf(STRONG, 0.0)
    with pytest.raises(ValueError):
        gamma_gamma_pdf(STRONG, [1.0, -1.0])


def test_pdf_large_intensity_does_not_underflow_to_nan():
    v = gamma_gamma_pdf(WEAK, 400.0)
    assert np.isfinite(v) and v >= 0


def test_moment_formula():
    assert gamma_gamma_moment(STRONG, 1) == pytest.approx(1.0)
    assert gamma_gamma_moment(STRONG, 2) == pytest.approx(1 + scintillation_index(STRONG))


def test_tail_bound_is_an_upper_bound():
    x = sample_gamma_gamma(STRONG, derive_rng(3), 400_000)
    for t in (2.0, 5.0, 10.0):
        assert np.mean(x > t) <= tail_mass_bound(STRONG, t) + 3e-3


@pytest.mark.parametrize("regime", ALL, ids=lambda r: r.name)
def test_cdf_matches_quadrature(regime):
    for i in (0.1, 0.7, 1.0, 3.0):
        q, _ = integrate.quad(lambda v: gamma_gamma_pdf(regime, v), 0, i, limit=400)
        assert gamma_gamma_cdf(regime, i) == pytest.approx(q, abs=1e-8)


@pytest.mark.parametrize("regime", ALL, ids=lambda r: r.name)
def test_sampler_pdf_kolmogorov_smirnov(regime):
    n = 1_000_000
    x = sample_gamma_gamma(regime, derive_rng(5, 1), n)
    ks = stats.kstest(x, lambda v: gamma_gamma_cdf(regime, v))
    assert ks.statistic < stats.kstwo.ppf(0.99, n)


def test_draw_channel_siso():
    ch = draw_channel(1, 1, 1, STRONG, derive_rng(0))
    assert ch.gains.shape == (1, 1, 1) and ch.gains[0, 0, 0] > 0


def test_draw_channel_2x2x2():
    ch = draw_channel(2, 2, 2, STRONG, derive_rng(0))
    assert (ch.n_users, ch.n_rx, ch.n_tx) == (2, 2, 2)
    assert ch.gains.size == 8 and np.all(ch.gains > 0)
    assert np.unique(ch.gains).size == 8


def test_draw_channel_deterministic():
    a = draw_channel(3, 2, 2, MODERATE, derive_rng(42, 7))
    b = draw_channel(3, 2, 2, MODERATE, derive_rng(42, 7))
    np.testing.assert_array_equal(a.gains, b.gains)


def test_draw_channel_batched_and_disabled():
    ch = draw_channel(2, 3, 4, None, derive_rng(0), n_slots=5)
    assert ch.gains.shape == (5, 2, 3, 4)
    assert np.all(ch.gains == 1.0)


def test_draw_channel_rejects_bad_counts():
    with pytest.raises(ValueError):
        draw_channel(0, 1, 1, STRONG, derive_rng(0))


def test_channel_matrix_rejects_nonpositive():
    with pytest.raises(ValueError):
        ChannelMatrix(np.zeros((1, 1, 1)))


def test_substreams_independent_of_consumption_order():
    first = [derive_rng(9, k).standard_normal(3) for k in range(4)]
    second = [derive_rng(9, k).standard_normal(3) for k in reversed(range(4))][::-1]
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(first[0], first[1])
