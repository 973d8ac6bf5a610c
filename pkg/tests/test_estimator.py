import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mppc_g2.detector import DetectorConfig, HbtCounts, simulate_dark_histogram, simulate_histogram
from mppc_g2.errors import UndefinedCorrelationError, UnphysicalCorrectionWarning
from mppc_g2.estimator import (
    CorrelationEstimate,
    bootstrap_std_error,
    bootstrap_subtracted_std_error,
    correct_g2_crosstalk,
    estimate_g,
    g_from_histogram,
    g_from_probabilities,
    hbt_g2,
    predict_g2_crosstalk,
)
from mppc_g2.histogram import CountHistogram, subtract_dark
from mppc_g2.sources import Coherent, DegenerateSqueezedSupermode, analytic_g

IDEAL = DetectorConfig(efficiency=1.0, dark_mean=0.0, crosstalk_p=0.0, crosstalk_mode="off")
SMALL = CountHistogram.from_mapping({1: 4, 2: 1}, trials=10)


def test_large_m_small_histogram():
    est = g_from_histogram(SMALL, 2, 400, "large_m")
    # per-pulse frequencies: one pair in ten trials, mean 6/10 counts
    assert est.g == pytest.approx(2 * (1 / 10) / (6 / 10) ** 2, rel=1e-12)
    assert est.g == pytest.approx(0.5555555555555556, rel=1e-12)
    assert est.mu == pytest.approx(0.6)
    assert est.std_error == 0.0


def test_exact_m_small_histogram():
    est = g_from_histogram(SMALL, 2, 4, "exact_m")
    assert est.g == pytest.approx(0.5555555555555556 * 4 / 3, rel=1e-12)
    assert est.g == pytest.approx(0.7407407407407407, rel=1e-12)


def test_no_pairs_gives_zero():
    assert g_from_histogram(CountHistogram.from_mapping({1: 7}, trials=9), 2, 400).g == 0.0


def test_empty_histogram_undefined():
    with pytest.raises(UndefinedCorrelationError):
        g_from_histogram(CountHistogram.from_mapping({0: 5}), 2, 400)
    with pytest.raises(UndefinedCorrelationError):
        g_from_histogram(CountHistogram(np.array([1.0, -2.0]), 10, signed=True), 2, 400)


@given(st.integers(3, 10**6))
def test_exact_to_large_m_ratio(m):
    exact = g_from_histogram(SMALL, 2, m, "exact_m").g
    large = g_from_histogram(SMALL, 2, m, "large_m").g
    assert exact == pytest.approx(large * m / (m - 1), rel=1e-12)


def test_exact_m_tends_to_large_m():
    exact = g_from_histogram(SMALL, 2, 10**6, "exact_m").g
    large = g_from_histogram(SMALL, 2, 10**6, "large_m").g
    assert abs(exact / large - 1) < 1e-5


def test_higher_order_estimator_by_hand():
    hist = CountHistogram.from_mapping({1: 5, 2: 3, 3: 2}, trials=20)
    m = 50
    mean = (5 + 6 + 6) / 20
    triples = 2 / 20
    expected = m**3 * triples / (math.comb(m, 3) * mean**3)
    assert g_from_histogram(hist, 3, m, "exact_m").g == pytest.approx(expected, rel=1e-12)
    assert g_from_histogram(hist, 3, m, "large_m").g == pytest.approx(6 * triples / mean**3, rel=1e-12)


def test_monte_carlo_closure_coherent():
    hist = simulate_histogram(Coherent(1.0), IDEAL, 10**6, seed=31)
    est = estimate_g(hist, resamples=500, seed=32)
    assert abs(est.g - 1.0) < 3 * est.std_error


def test_subtract_dark_examples():
    sig = CountHistogram.from_mapping({0: 990, 1: 8, 2: 2})
    dark = CountHistogram.from_mapping({0: 995, 1: 5})
    out = subtract_dark(sig, dark)
    assert out.signed and out.trials == 1000
    assert out.as_dict() == {0: -5.0, 1: 3.0, 2: 2.0}
    # an all-zero dark histogram leaves every k >= 1 bin, hence every moment, unchanged
    clean = subtract_dark(sig, CountHistogram.from_mapping({0: 1000}))
    np.testing.assert_array_equal(clean.counts[1:], sig.counts[1:])
    assert g_from_histogram(clean).g == g_from_histogram(sig).g


def test_subtract_dark_rescales_trials():
    sig = CountHistogram.from_mapping({0: 90, 1: 10})
    dark = CountHistogram.from_mapping({0: 196, 1: 4})
    assert subtract_dark(sig, dark).as_dict() == {0: 90 - 98.0, 1: 8.0}


@given(
    st.lists(st.integers(0, 50), min_size=1, max_size=8),
    st.lists(st.integers(0, 50), min_size=1, max_size=8),
)
def test_moments_linear_under_subtraction(sig, drk):
    sig[0] += 1
    drk[0] += 1
    a = CountHistogram(np.array(sig), sum(sig))
    b = CountHistogram(np.array(drk), sum(drk))
    diff = subtract_dark(a, b)
    for order in range(1, 4):
        fm = lambda h: sum(math.perm(k, order) * v for k, v in enumerate(h.counts))  # noqa: E731
        assert fm(diff) == pytest.approx(fm(a) - fm(b) * a.trials / b.trials, abs=1e-9)


def test_predict_examples():
    assert predict_g2_crosstalk(1.7, 0.3, 0.0) == 1.7
    assert predict_g2_crosstalk(1.0, 1.0, 0.177) == pytest.approx(1.278149811344453, rel=1e-12)


def test_correct_examples():
    assert correct_g2_crosstalk(1.3, 0.8, 0.0) == 1.3
    assert correct_g2_crosstalk(1.278149811344453, 1.0, 0.177) == pytest.approx(1.0, rel=1e-12)


@given(st.floats(0, 10), st.floats(1e-3, 10), st.floats(0, 0.499))
def test_round_trip(g0, mu, p):
    back = correct_g2_crosstalk(predict_g2_crosstalk(g0, mu, p), mu, p)
    assert back == pytest.approx(g0, rel=1e-12, abs=1e-12)


def test_over_correction_warns():
    with pytest.warns(UnphysicalCorrectionWarning):
        g0 = correct_g2_crosstalk(0.5, 0.05, 0.177)
    assert g0 < 0


def test_correcting_raw_hyperbola_endpoint():
    """Correcting the raw squeezed hyperbola (A=0.977, B=0.444) with P = 0.177.

    A lands on 1 within 0.014. B depends on how the abscissa
    is rescaled afterwards, so only its algebraic value is checked.
    """
    p = 0.177
    mu = np.linspace(0.3, 3.0, 12)
    raw = 0.977 + 0.444 / mu
    g0 = np.array([correct_g2_crosstalk(g, x, p) for g, x in zip(raw, mu)])
    # g0 is again a hyperbola, in the crosstalk-free abscissa mu / (1 + P)
    x = mu / (1 + p)
    design = np.column_stack([np.ones_like(x), 1 / x])
    a, b = np.linalg.lstsq(design, g0, rcond=None)[0]
    assert a == pytest.approx(0.977 * (1 + p) ** 2 / (1 + 2 * p), rel=1e-9)
    assert abs(a - 1.0) < 0.014
    assert b == pytest.approx((0.444 - 2 * p / (1 + p)) * (1 + p) / (1 + 2 * p), rel=1e-9)


def delta_method_se(hist, l, m):
    """First-order multinomial error of the estimator, written out independently."""
    p = hist.probabilities()
    k = np.arange(p.size)
    c = m**l / math.comb(m, l)
    mean = np.dot(k, p)
    coinc = np.dot([math.comb(int(x), l) for x in k], p)
    grad = c * (np.array([math.comb(int(x), l) for x in k]) / mean**l
                - l * coinc * k / mean ** (l + 1))
    var = (np.dot(grad**2, p) - np.dot(grad, p) ** 2) / hist.trials
    return math.sqrt(var)


def test_bootstrap_matches_delta_method():
    hist = CountHistogram.from_mapping({0: 6000, 1: 2500, 2: 1000, 3: 400, 4: 100})
    se = bootstrap_std_error(hist, 2, 400, "exact_m", resamples=10_000, seed=33)
    assert se == pytest.approx(delta_method_se(hist, 2, 400), rel=0.15)


def test_bootstrap_scaling_and_determinism():
    spec = DegenerateSqueezedSupermode(0.3)
    h1 = simulate_histogram(spec, DetectorConfig(), 200_000, seed=34)
    h2 = simulate_histogram(spec, DetectorConfig(), 400_000, seed=35)
    s1 = bootstrap_std_error(h1, resamples=2000, seed=36)
    s2 = bootstrap_std_error(h2, resamples=2000, seed=36)
    assert s1 / s2 == pytest.approx(math.sqrt(2), rel=0.2)
    assert bootstrap_std_error(h1, resamples=200, seed=1) == bootstrap_std_error(h1, resamples=200, seed=1)


def test_bootstrap_rejects_bad_input():
    with pytest.raises(UndefinedCorrelationError):
        bootstrap_std_error(CountHistogram.from_mapping({0: 100}), resamples=100)
    signed = subtract_dark(SMALL, CountHistogram.from_mapping({0: 10}))
    with pytest.raises(ValueError):
        bootstrap_std_error(signed, resamples=100)


def test_subtracted_bootstrap_is_larger():
    sig = simulate_histogram(Coherent(0.2), DetectorConfig(dark_mean=0.01), 300_000, seed=37)
    dark = simulate_dark_histogram(DetectorConfig(dark_mean=0.01), 300_000, seed=38)
    plain = bootstrap_std_error(sig, resamples=1000, seed=39)
    both = bootstrap_subtracted_std_error(sig, dark, resamples=1000, seed=39)
    assert both > 0.9 * plain


def test_hbt_examples():
    est = hbt_g2(HbtCounts(1000, 1000, 10, 10**5))
    assert est.g == pytest.approx(1.0)
    assert est.std_error > 0
    # dominated by coincidence counting: ~ g / sqrt(C)
    assert est.std_error == pytest.approx(1 / math.sqrt(10), rel=0.05)
    assert hbt_g2(HbtCounts(1000, 800, 0, 10**5)).g == 0.0
    with pytest.raises(UndefinedCorrelationError):
        hbt_g2(HbtCounts(0, 10, 0, 100))


def test_estimate_record_fields():
    est = CorrelationEstimate(2, 1.2, 0.01, 0.5, "exact_m", True, 0.177)
    assert est.to_dict() == {
        "l": 2, "g": 1.2, "std_error": 0.01, "mu": 0.5, "mode": "exact_m",
        "corrected": True, "P_used": 0.177,
    }


def test_efficiency_invariance_of_exact_distribution():
    """Binomial loss leaves g unchanged; checked on exact fired-count distributions."""
    from mppc_g2.detector import fired_count_pmf

    spec = DegenerateSqueezedSupermode(0.5)
    values = []
    for eta in (1.0, 0.5, 0.1):
        cfg = DetectorConfig(pixels=10**9, efficiency=eta, dark_mean=0.0, crosstalk_mode="off")
        values.append(g_from_probabilities(fired_count_pmf(spec, cfg), 2, 10**9, "large_m"))
    np.testing.assert_allclose(values, analytic_g(spec, 2), rtol=1e-8)
