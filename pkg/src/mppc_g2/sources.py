"""Photon-number distributions of the light states used in the experiments.

Every source is a small frozen dataclass. The module-level functions
dispatch on the source type, so the dataclasses stay plain records.

Squeezed light comes in two flavours. ``DegenerateSqueezedSupermode`` is
the multimode-detection model in which the number of detected pairs is
Poissonian; it produces ``g2 = 1 + 1/<n>``. ``SingleModeSqueezedExact`` is
the textbook single-mode squeezed vacuum.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .errors import InvalidSpecError, UndefinedCorrelationError

# Cumulative mass that truncated sums must exceed.
TAIL_MASS = 1e-12
# Moment sums weight the tail by n**l: run them this many times further out.
# All tails here decay at least geometrically, so the dropped mass is ~1e-48.
MOMENT_TAIL_FACTOR = 4


def _check_nonneg(name: str, value: float) -> None:
    if not (value >= 0 and math.isfinite(value)):
        raise InvalidSpecError(f"{name} must be a finite non-negative number, got {value!r}")


@dataclass(frozen=True)
class Coherent:
    mu: float

    def __post_init__(self):
        _check_nonneg("mu", self.mu)


@dataclass(frozen=True)
class TwinBeamSignal:
    """Signal arm of a twin beam; one signal photon per detected pair."""

    mu_pairs: float

    def __post_init__(self):
        _check_nonneg("mu_pairs", self.mu_pairs)


@dataclass(frozen=True)
class DegenerateSqueezedSupermode:
    """Poissonian number of pairs, two photons per pair."""

    mu_pairs: float

    def __post_init__(self):
        _check_nonneg("mu_pairs", self.mu_pairs)


@dataclass(frozen=True)
class SingleModeSqueezedExact:
    r: float

    def __post_init__(self):
        _check_nonneg("r", self.r)


@dataclass(frozen=True)
class Thermal:
    mu: float
    modes: int = 1

    def __post_init__(self):
        _check_nonneg("mu", self.mu)
        if isinstance(self.modes, bool) or int(self.modes) != self.modes or self.modes < 1:
            raise InvalidSpecError(f"modes must be an integer >= 1, got {self.modes!r}")


PhotonSourceSpec = Union[
    Coherent, TwinBeamSignal, DegenerateSqueezedSupermode, SingleModeSqueezedExact, Thermal
]

SOURCE_KINDS = {
    "coherent": Coherent,
    "twin_beam_signal": TwinBeamSignal,
    "degenerate_squeezed_supermode": DegenerateSqueezedSupermode,
    "single_mode_squeezed_exact": SingleModeSqueezedExact,
    "thermal": Thermal,
}
_KIND_OF = {cls: kind for kind, cls in SOURCE_KINDS.items()}


def source_to_dict(spec: PhotonSourceSpec) -> dict:
    return {"kind": _KIND_OF[type(spec)], **dataclasses.asdict(spec)}


def source_from_dict(data: dict) -> PhotonSourceSpec:
    data = dict(data)
    try:
        cls = SOURCE_KINDS[data.pop("kind")]
    except KeyError as exc:
        raise InvalidSpecError(f"unknown or missing source kind in {data!r}") from exc
    try:
        return cls(**data)
    except TypeError as exc:
        raise InvalidSpecError(str(exc)) from exc


def _tanh2(r: float) -> float:
    return math.tanh(r) ** 2


def mean_photons(spec: PhotonSourceSpec) -> float:
    if isinstance(spec, (Coherent, Thermal)):
        return float(spec.mu)
    if isinstance(spec, TwinBeamSignal):
        return float(spec.mu_pairs)
    if isinstance(spec, DegenerateSqueezedSupermode):
        return 2.0 * spec.mu_pairs
    if isinstance(spec, SingleModeSqueezedExact):
        return math.sinh(spec.r) ** 2
    raise InvalidSpecError(f"not a photon source: {spec!r}")


def with_mean(spec: PhotonSourceSpec, mean: float) -> PhotonSourceSpec:
    """Return a copy of ``spec`` whose rate parameter gives mean photon number ``mean``."""
    _check_nonneg("mean", mean)
    if isinstance(spec, Coherent):
        return Coherent(mean)
    if isinstance(spec, TwinBeamSignal):
        return TwinBeamSignal(mean)
    if isinstance(spec, DegenerateSqueezedSupermode):
        return DegenerateSqueezedSupermode(mean / 2.0)
    if isinstance(spec, SingleModeSqueezedExact):
        return SingleModeSqueezedExact(math.asinh(math.sqrt(mean)))
    if isinstance(spec, Thermal):
        return Thermal(mean, spec.modes)
    raise InvalidSpecError(f"not a photon source: {spec!r}")


def tail_bound(spec: PhotonSourceSpec) -> int:
    """Smallest photon number ``n_max`` with P(n > n_max) below ``TAIL_MASS``."""
    if isinstance(spec, (Coherent, TwinBeamSignal)):
        rate = mean_photons(spec)
        return 0 if rate == 0 else int(stats.poisson.isf(TAIL_MASS, rate))
    if isinstance(spec, DegenerateSqueezedSupermode):
        return 0 if spec.mu_pairs == 0 else 2 * int(stats.poisson.isf(TAIL_MASS, spec.mu_pairs))
    if isinstance(spec, SingleModeSqueezedExact):
        t2 = _tanh2(spec.r)
        return 0 if t2 == 0 else 2 * int(stats.nbinom.isf(TAIL_MASS, 0.5, 1.0 - t2))
    if isinstance(spec, Thermal):
        if spec.mu == 0:
            return 0
        return int(stats.nbinom.isf(TAIL_MASS, spec.modes, spec.modes / (spec.modes + spec.mu)))
    raise InvalidSpecError(f"not a photon source: {spec!r}")


def pmf_array(spec: PhotonSourceSpec, n_max: int | None = None) -> np.ndarray:
    """Probabilities of 0..n_max photons (``n_max`` defaults to the tail bound)."""
    if n_max is None:
        n_max = tail_bound(spec)
    n = np.arange(n_max + 1)
    if isinstance(spec, (Coherent, TwinBeamSignal)):
        return stats.poisson.pmf(n, mean_photons(spec))
    if isinstance(spec, DegenerateSqueezedSupermode):
        out = np.zeros(n_max + 1)
        out[::2] = stats.poisson.pmf(n[::2] // 2, spec.mu_pairs)
        return out
    if isinstance(spec, SingleModeSqueezedExact):
        out = np.zeros(n_max + 1)
        if spec.r == 0:
            out[0] = 1.0
            return out
        j = n[::2] // 2
        log_mass = (
            gammaln(2 * j + 1)
            - j * math.log(4.0)
            - 2 * gammaln(j + 1)
            + 2 * j * math.log(math.tanh(spec.r))
            - math.log(math.cosh(spec.r))
        )
        out[::2] = np.exp(log_mass)
        return out
    if isinstance(spec, Thermal):
        if spec.mu == 0:
            return (n == 0).astype(float)
        return stats.nbinom.pmf(n, spec.modes, spec.modes / (spec.modes + spec.mu))
    raise InvalidSpecError(f"not a photon source: {spec!r}")


def pmf(spec: PhotonSourceSpec, n: int) -> float:
    if n < 0:
        return 0.0
    return float(pmf_array(spec, n)[n])


def sample_photon_numbers(spec: PhotonSourceSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` independent photon numbers as an int64 array."""
    if isinstance(spec, (Coherent, TwinBeamSignal)):
        return rng.poisson(mean_photons(spec), size).astype(np.int64)
    if isinstance(spec, DegenerateSqueezedSupermode):
        return 2 * rng.poisson(spec.mu_pairs, size).astype(np.int64)
    if isinstance(spec, SingleModeSqueezedExact):
        # pair number is negative binomial with shape 1/2 and success prob 1 - tanh^2 r
        t2 = _tanh2(spec.r)
        if t2 == 0:
            return np.zeros(size, dtype=np.int64)
        return 2 * rng.negative_binomial(0.5, 1.0 - t2, size).astype(np.int64)
    if isinstance(spec, Thermal):
        if spec.mu == 0:
            return np.zeros(size, dtype=np.int64)
        p = spec.modes / (spec.modes + spec.mu)
        return rng.negative_binomial(spec.modes, p, size).astype(np.int64)
    raise InvalidSpecError(f"not a photon source: {spec!r}")


def sample_photon_number(spec: PhotonSourceSpec, rng: np.random.Generator) -> int:
    return int(sample_photon_numbers(spec, rng, 1)[0])


def falling_factorial(n: np.ndarray, order: int) -> np.ndarray:
    """n (n-1) ... (n-order+1), elementwise, as float."""
    n = np.asarray(n, dtype=float)
    out = np.ones_like(n)
    for i in range(order):
        out *= n - i
    return np.where(n >= order, out, 0.0)


def factorial_moment(spec: PhotonSourceSpec, order: int) -> float:
    """<n (n-1) ... (n-order+1)> by truncated summation of the pmf."""
    p = pmf_array(spec, MOMENT_TAIL_FACTOR * tail_bound(spec) + 50)
    return float(np.dot(falling_factorial(np.arange(p.size), order), p))


def analytic_g(spec: PhotonSourceSpec, l: int) -> float:
    """Normalized zero-delay correlation function of order ``l``."""
    if l < 2:
        raise ValueError(f"correlation order must be >= 2, got {l}")
    mean = mean_photons(spec)
    if mean <= 0:
        raise UndefinedCorrelationError("correlation function undefined at zero mean photon number")
    if isinstance(spec, (Coherent, TwinBeamSignal)):
        return 1.0
    if isinstance(spec, Thermal):
        return math.prod((spec.modes + i) / spec.modes for i in range(l))
    if isinstance(spec, DegenerateSqueezedSupermode) and l == 2:
        return 1.0 + 1.0 / mean
    if isinstance(spec, SingleModeSqueezedExact) and l == 2:
        return 3.0 + 1.0 / mean
    return factorial_moment(spec, l) / mean**l
