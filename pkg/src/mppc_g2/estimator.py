"""Correlation functions from fired-pixel-count histograms.

Tallies are normalized per trial before the moment sums, so Poissonian
light gives ``g = 1``. ``exact_m`` uses the finite pixel-pair count
C(m, l); ``large_m`` replaces it with m**l / l!.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import comb

from .detector import HbtCounts
from .errors import UndefinedCorrelationError, UnphysicalCorrectionWarning
from .histogram import CountHistogram, subtract_dark

__all__ = [
    "EstimatorMode",
    "CorrelationEstimate",
    "g_from_probabilities",
    "g_from_histogram",
    "subtract_dark",
    "predict_g2_crosstalk",
    "correct_g2_crosstalk",
    "bootstrap_std_error",
    "bootstrap_subtracted_std_error",
    "estimate_g",
    "hbt_g2",
]


class EstimatorMode(str, enum.Enum):
    EXACT_M = "exact_m"
    LARGE_M = "large_m"


@dataclass
class CorrelationEstimate:
    order: int
    g: float
    std_error: float
    mu: float
    mode: str
    corrected: bool = False
    p_used: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        return {
            "l": d["order"],
            "g": d["g"],
            "std_error": d["std_error"],
            "mu": d["mu"],
            "mode": d["mode"],
            "corrected": d["corrected"],
            "P_used": d["p_used"],
        }


def _prefactor(l: int, m: int, mode: EstimatorMode) -> float:
    mode = EstimatorMode(mode)
    if mode is EstimatorMode.LARGE_M:
        return float(math.factorial(l))
    pairs = comb(m, l, exact=True)
    if pairs == 0:
        raise UndefinedCorrelationError(f"{m} pixels cannot host order-{l} coincidences")
    return m**l / pairs


def g_from_probabilities(p: np.ndarray, l: int, m: int, mode=EstimatorMode.EXACT_M) -> float:
    """g of order ``l`` from per-trial frequencies ``p[k]`` (may be signed)."""
    if l < 2:
        raise ValueError(f"correlation order must be >= 2, got {l}")
    p = np.asarray(p, dtype=float)
    k = np.arange(p.size)
    mean = float(np.dot(k, p))
    if not mean > 0:
        raise UndefinedCorrelationError(
            f"mean counts per trial is {mean!r}; histogram empty or over-subtracted"
        )
    coincidences = float(np.dot(comb(k, l), p))
    return _prefactor(l, m, mode) * coincidences / mean**l


def g_from_histogram(
    hist: CountHistogram, l: int = 2, m: int = 400, mode=EstimatorMode.EXACT_M
) -> CorrelationEstimate:
    """Point estimate of g^(l); ``std_error`` is left at zero (see ``bootstrap_std_error``)."""
    p = hist.probabilities()
    g = g_from_probabilities(p, l, m, mode)
    return CorrelationEstimate(l, g, 0.0, hist.mean_counts(), EstimatorMode(mode).value)


def _g_rows(freqs: np.ndarray, l: int, m: int, mode) -> np.ndarray:
    """Vectorized estimator over rows of per-trial frequencies; NaN where undefined."""
    k = np.arange(freqs.shape[1])
    mean = freqs @ k
    coinc = freqs @ comb(k, l)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = _prefactor(l, m, mode) * coinc / mean**l
    g[~(mean > 0)] = np.nan
    return g


def _std(values: np.ndarray) -> float:
    values = values[np.isfinite(values)]
    if values.size < 2:
        raise UndefinedCorrelationError("too few defined bootstrap replicates")
    return float(values.std(ddof=1))


def bootstrap_std_error(
    hist: CountHistogram,
    l: int = 2,
    m: int = 400,
    mode=EstimatorMode.EXACT_M,
    resamples: int = 1000,
    seed: int = 0,
) -> float:
    """Standard deviation of g over multinomial resamples of the trials."""
    if hist.signed:
        raise ValueError("cannot resample a signed histogram; use bootstrap_subtracted_std_error")
    if resamples < 100:
        raise ValueError("need at least 100 resamples")
    g_from_probabilities(hist.probabilities(), l, m, mode)  # undefined input fails here
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(hist.trials, hist.probabilities(), size=resamples)
    return _std(_g_rows(draws / hist.trials, l, m, mode))


def bootstrap_subtracted_std_error(
    signal: CountHistogram,
    dark: CountHistogram,
    l: int = 2,
    m: int = 400,
    mode=EstimatorMode.EXACT_M,
    resamples: int = 1000,
    seed: int = 0,
) -> float:
    """Bootstrap error of the dark-subtracted estimate, resampling both raw inputs."""
    if signal.signed or dark.signed:
        raise ValueError("bootstrap needs the raw signal and dark histograms")
    if resamples < 100:
        raise ValueError("need at least 100 resamples")
    g_from_probabilities(subtract_dark(signal, dark).probabilities(), l, m, mode)
    rng = np.random.default_rng(seed)
    size = max(signal.counts.size, dark.counts.size)
    sig = rng.multinomial(signal.trials, signal.probabilities(), size=resamples) / signal.trials
    drk = rng.multinomial(dark.trials, dark.probabilities(), size=resamples) / dark.trials
    freqs = np.zeros((resamples, size))
    freqs[:, : sig.shape[1]] += sig
    freqs[:, : drk.shape[1]] -= drk
    return _std(_g_rows(freqs, l, m, mode))


def estimate_g(
    signal: CountHistogram,
    dark: CountHistogram | None = None,
    *,
    l: int = 2,
    m: int = 400,
    mode=EstimatorMode.EXACT_M,
    resamples: int = 1000,
    seed: int = 0,
) -> CorrelationEstimate:
    """Point estimate with bootstrap error, optionally after dark subtraction."""
    if dark is None:
        est = g_from_histogram(signal, l, m, mode)
        est.std_error = bootstrap_std_error(signal, l, m, mode, resamples, seed)
    else:
        est = g_from_histogram(subtract_dark(signal, dark), l, m, mode)
        est.std_error = bootstrap_subtracted_std_error(signal, dark, l, m, mode, resamples, seed)
    return est


def predict_g2_crosstalk(g0: float, mu_ct: float, p: float) -> float:
    """Measured g2 for true ``g0`` under linear crosstalk ``p`` at ``mu_ct`` counts per pulse."""
    if not mu_ct > 0:
        raise ValueError(f"mu_ct must be positive, got {mu_ct!r}")
    return (1 + 2 * p) / (1 + p) ** 2 * g0 + 2 * p / ((1 + p) * mu_ct)


def correct_g2_crosstalk(g_meas: float, mu_ct: float, p: float) -> float:
    """Invert ``predict_g2_crosstalk`` for the true g2."""
    if not mu_ct > 0:
        raise ValueError(f"mu_ct must be positive, got {mu_ct!r}")
    if not p < 1:
        raise ValueError(f"crosstalk probability must be < 1, got {p!r}")
    g0 = (g_meas - 2 * p / ((1 + p) * mu_ct)) * (1 + p) ** 2 / (1 + 2 * p)
    if g0 < 0:
        warnings.warn(
            f"crosstalk correction gave g2 = {g0:.4g} < 0 (over-correction)",
            UnphysicalCorrectionWarning,
            stacklevel=2,
        )
    return g0


def correction_gain(p: float) -> float:
    """d g0 / d g_meas of the crosstalk correction, for error propagation."""
    return (1 + p) ** 2 / (1 + 2 * p)


def hbt_g2(counts: HbtCounts) -> CorrelationEstimate:
    """g2 from two-detector coincidences, ``C S / (N1 N2)``.

    The error is the multinomial delta-method error of the log estimate
    over the four click patterns of a gate. Only meaningful when the
    singles rates are far below one click per gate.
    """
    s1, s2, c, n = counts.singles_1, counts.singles_2, counts.coincidences, counts.trials
    if s1 == 0 or s2 == 0:
        raise UndefinedCorrelationError("HBT g2 undefined without singles in both arms")
    g = c * n / (s1 * s2)
    p1, p2 = s1 / n, s2 / n
    mu = (s1 + s2) / n
    if c == 0:
        # one-count scale
        return CorrelationEstimate(2, 0.0, n / (s1 * s2), mu, "hbt")
    pc = c / n
    var_log = (
        pc * (1 / pc - 1 / p1 - 1 / p2) ** 2 + (p1 - pc) / p1**2 + (p2 - pc) / p2**2 - 1
    ) / n
    return CorrelationEstimate(2, g, g * math.sqrt(max(var_log, 0.0)), mu, "hbt")
