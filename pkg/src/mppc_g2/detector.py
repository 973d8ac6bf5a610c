"""Monte Carlo model of a gated multi-pixel photon counter.

One gate proceeds as: binomial loss, uniform pixel assignment of surviving
photons, Poissonian dark avalanches on uniform pixels (a pixel fires at
most once), then optical crosstalk. Crosstalk secondaries always land on
pixels that have not fired and never trigger further secondaries.

Two crosstalk models are available:

``event_linear``
    With probability ``k * P`` the event gains exactly one avalanche. This
    is the linear model whose histogram transform is
    ``N_k -> N_k - kP N_k + (k-1) P N_{k-1}``.
``per_avalanche``
    Every fired pixel independently spawns one secondary with
    probability ``P``.

``detect_one_pulse`` follows individual pixels literally and is meant for
tests and small runs. ``simulate_histogram`` uses an equivalent vectorized
occupancy process over blocks of trials.
"""
from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import streams
from .errors import InvalidSpecError, ModelValidityWarning
from .histogram import CountHistogram, merge
from .sources import Coherent, PhotonSourceSpec, pmf_array, sample_photon_numbers

PIXELS = 400
EFFICIENCY = 0.41
DARK_RATE_HZ = 25e3
GATE_S = 50e-9
CROSSTALK_P = 0.177


def dark_mean_per_gate(rate_hz: float = DARK_RATE_HZ, gate_s: float = GATE_S) -> float:
    return rate_hz * gate_s


class CrosstalkMode(str, enum.Enum):
    EVENT_LINEAR = "event_linear"
    PER_AVALANCHE = "per_avalanche"
    OFF = "off"


@dataclass(frozen=True)
class DetectorConfig:
    pixels: int = PIXELS
    efficiency: float = EFFICIENCY
    dark_mean: float = 1.25e-3
    crosstalk_p: float = CROSSTALK_P
    crosstalk_mode: CrosstalkMode = CrosstalkMode.EVENT_LINEAR

    def __post_init__(self):
        object.__setattr__(self, "crosstalk_mode", _as_mode(self.crosstalk_mode))
        if int(self.pixels) != self.pixels or self.pixels < 2:
            raise InvalidSpecError(f"pixels must be an integer >= 2, got {self.pixels!r}")
        if not 0 <= self.efficiency <= 1:
            raise InvalidSpecError(f"efficiency must lie in [0, 1], got {self.efficiency!r}")
        if not (self.dark_mean >= 0 and math.isfinite(self.dark_mean)):
            raise InvalidSpecError(f"dark_mean must be >= 0, got {self.dark_mean!r}")
        if not 0 <= self.crosstalk_p < 1:
            raise InvalidSpecError(f"crosstalk_p must lie in [0, 1), got {self.crosstalk_p!r}")

    @property
    def effective_crosstalk(self) -> float:
        """Mean secondaries per primary avalanche (0 when crosstalk is off)."""
        return 0.0 if self.crosstalk_mode is CrosstalkMode.OFF else self.crosstalk_p

    def to_dict(self) -> dict:
        d = asdict(self)
        d["crosstalk_mode"] = self.crosstalk_mode.value
        return d


def _as_mode(mode) -> CrosstalkMode:
    try:
        return CrosstalkMode(mode)
    except ValueError as exc:
        raise InvalidSpecError(f"unknown crosstalk mode {mode!r}") from exc


@dataclass(frozen=True)
class HbtCounts:
    singles_1: int
    singles_2: int
    coincidences: int
    trials: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if min(self.singles_1, self.singles_2, self.coincidences) < 0:
            raise ValueError("tallies must be non-negative")
        if not self.coincidences <= min(self.singles_1, self.singles_2) <= self.trials:
            raise ValueError("need coincidences <= singles <= trials")

    def __add__(self, other: "HbtCounts") -> "HbtCounts":
        return HbtCounts(
            self.singles_1 + other.singles_1,
            self.singles_2 + other.singles_2,
            self.coincidences + other.coincidences,
            self.trials + other.trials,
        )


def _linear_probability(k: int, p: float) -> float:
    prob = k * p
    if prob > 1:
        warnings.warn(
            f"event_linear crosstalk probability k*P = {prob:.3f} exceeds 1 at k={k}; saturated to 1",
            ModelValidityWarning,
            stacklevel=3,
        )
        return 1.0
    return prob


def detect_one_pulse(n_photons: int, config: DetectorConfig, rng: np.random.Generator) -> int:
    """Fired-pixel count for one gate hit by ``n_photons`` photons."""
    m = config.pixels
    survivors = rng.binomial(n_photons, config.efficiency)
    fired = set(rng.integers(m, size=survivors).tolist())
    fired.update(rng.integers(m, size=rng.poisson(config.dark_mean)).tolist())

    mode = config.crosstalk_mode
    if mode is CrosstalkMode.OFF:
        return len(fired)
    if mode is CrosstalkMode.PER_AVALANCHE:
        primaries = len(fired)
        for _ in range(primaries):
            if rng.random() < config.crosstalk_p and len(fired) < m:
                fired.add(_random_unfired(fired, m, rng))
        return len(fired)
    k = len(fired)
    if rng.random() < _linear_probability(k, config.crosstalk_p) and k < m:
        fired.add(_random_unfired(fired, m, rng))
    return len(fired)


def _random_unfired(fired: set, m: int, rng: np.random.Generator) -> int:
    free = np.setdiff1d(np.arange(m), np.fromiter(fired, dtype=np.int64, count=len(fired)))
    return int(rng.choice(free))


def _occupy(occupied: np.ndarray, throws: np.ndarray, m: int, rng: np.random.Generator) -> None:
    """Throw ``throws[i]`` avalanches uniformly onto ``m`` pixels, in place.

    A throw hits a new pixel with probability (m - occupied) / m, which is
    exactly the law of the distinct-pixel count of uniform assignment.
    """
    active = np.flatnonzero(throws)
    j = 0
    while active.size:
        hit_new = rng.random(active.size) * m < (m - occupied[active])
        occupied[active] += hit_new
        j += 1
        active = active[throws[active] > j]


def detect_pulses(
    photons: np.ndarray, config: DetectorConfig, rngs: dict[str, np.random.Generator]
) -> tuple[np.ndarray, int]:
    """Vectorized gate model.

    Returns the fired counts and the number of gates in which the
    event_linear probability ``k * P`` had to be saturated at 1.
    """
    m = config.pixels
    detected = rngs["loss"].binomial(photons, config.efficiency)
    k = np.zeros(photons.size, dtype=np.int64)
    _occupy(k, detected, m, rngs["pixels"])
    dark = rngs["dark"].poisson(config.dark_mean, photons.size)
    _occupy(k, dark, m, rngs["dark"])

    saturated = 0
    mode = config.crosstalk_mode
    if mode is CrosstalkMode.PER_AVALANCHE:
        extra = rngs["crosstalk"].binomial(k, config.crosstalk_p)
        k += np.minimum(extra, m - k)
    elif mode is CrosstalkMode.EVENT_LINEAR:
        prob = k * config.crosstalk_p
        saturated = int(np.count_nonzero(prob > 1))
        u = rngs["crosstalk"].random(photons.size)
        k += (u < np.minimum(prob, 1.0)) & (k < m)
    return k, saturated


def simulate_block(
    spec: PhotonSourceSpec, config: DetectorConfig, seed: int, block: int, size: int
) -> CountHistogram:
    """Histogram of one block of trials drawn from the block's own sub-streams."""
    rngs = streams.stage_generators(seed, block)
    photons = sample_photon_numbers(spec, rngs["source"], size)
    k, saturated = detect_pulses(photons, config, rngs)
    return CountHistogram.from_samples(k, event_linear_saturated=saturated)


def _block_task(args):
    return simulate_block(*args)


def simulate_histogram(
    spec: PhotonSourceSpec,
    config: DetectorConfig,
    trials: int,
    seed: int,
    *,
    workers: int = 1,
) -> CountHistogram:
    """Simulate ``trials`` gates; the result depends only on ``seed``, not ``workers``."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    tasks = [
        (spec, config, seed, b, size) for b, size in enumerate(streams.block_sizes(trials))
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_block_task, tasks))
    else:
        parts = [_block_task(t) for t in tasks]
    hist = merge(*parts)
    hist.metadata.setdefault("event_linear_saturated", 0)
    if hist.metadata["event_linear_saturated"]:
        warnings.warn(
            f"{hist.metadata['event_linear_saturated']} of {trials} gates had k*P > 1; "
            "event_linear probability saturated at 1",
            ModelValidityWarning,
            stacklevel=2,
        )
    return hist


def simulate_dark_histogram(
    config: DetectorConfig, trials: int, seed: int, *, workers: int = 1
) -> CountHistogram:
    """Dark-only histogram; dark avalanches still produce crosstalk."""
    return simulate_histogram(Coherent(0.0), config, trials, seed, workers=workers)


def simulate_hbt(
    spec: PhotonSourceSpec, eta_apd: float, trials: int, seed: int
) -> HbtCounts:
    """Two binary detectors behind a 50/50 splitter, coincidences per gate."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0 <= eta_apd <= 1:
        raise InvalidSpecError(f"eta_apd must lie in [0, 1], got {eta_apd!r}")
    total = None
    for b, size in enumerate(streams.block_sizes(trials)):
        rngs = streams.stage_generators(seed, b)
        n = sample_photon_numbers(spec, rngs["source"], size)
        arm1 = rngs["pixels"].binomial(n, 0.5)
        click1 = rngs["loss"].binomial(arm1, eta_apd) > 0
        click2 = rngs["loss"].binomial(n - arm1, eta_apd) > 0
        part = HbtCounts(
            int(click1.sum()), int(click2.sum()), int((click1 & click2).sum()), size
        )
        total = part if total is None else total + part
    return total


def occupancy_pmf(throws: int, m: int) -> np.ndarray:
    """Distribution of the number of distinct pixels hit by ``throws`` uniform throws."""
    dist = np.zeros(min(throws, m) + 1)
    dist[0] = 1.0
    occ = np.arange(dist.size)
    for _ in range(throws):
        new = dist * (occ / m)
        new[1:] += dist[:-1] * ((m - occ[:-1]) / m)
        dist = new
    return dist


def crosstalk_matrix(k_max: int, config: DetectorConfig) -> np.ndarray:
    """T[k, k'] = probability that ``k`` primary pixels end as ``k'`` fired pixels."""
    m = config.pixels
    size = min(2 * k_max, m) + 1
    t = np.zeros((k_max + 1, size))
    p = config.crosstalk_p
    for k in range(k_max + 1):
        if config.crosstalk_mode is CrosstalkMode.OFF or k == 0:
            t[k, k] = 1.0
        elif config.crosstalk_mode is CrosstalkMode.EVENT_LINEAR:
            q = min(k * p, 1.0) if k < m else 0.0
            t[k, k] += 1 - q
            t[k, min(k + 1, m)] += q
        else:
            extra = stats.binom.pmf(np.arange(k + 1), k, p)
            for x, w in enumerate(extra):
                t[k, min(k + x, m)] += w
    return t


def fired_count_pmf(spec: PhotonSourceSpec, config: DetectorConfig) -> np.ndarray:
    """Exact distribution of the fired-pixel count for one gate.

    Photon-number tail beyond the source's tail bound (mass < 1e-12) and the
    dark-count tail beyond mass 1e-15 are dropped.
    """
    m = config.pixels
    photons = pmf_array(spec)
    n = np.arange(photons.size)
    detected = np.zeros(photons.size)
    for n_i, w in zip(n, photons):
        if w:
            detected[: n_i + 1] += w * stats.binom.pmf(np.arange(n_i + 1), n_i, config.efficiency)
    dark_max = 0 if config.dark_mean == 0 else int(stats.poisson.isf(1e-15, config.dark_mean))
    throws = np.convolve(detected, stats.poisson.pmf(np.arange(dark_max + 1), config.dark_mean))
    primaries = np.zeros(min(throws.size - 1, m) + 1)
    for t_i, w in enumerate(throws):
        if w:
            occ = occupancy_pmf(t_i, m)
            primaries[: occ.size] += w * occ
    return primaries @ crosstalk_matrix(primaries.size - 1, config)
