"""Turning recorded pulse amplitudes into fired-pixel-count histograms."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .histogram import CountHistogram

# Thresholds sit midway between the k*A0 peaks; a tie rounds up.
THRESHOLD_RULE = "midway"


@dataclass(frozen=True)
class AmplitudeRecord:
    amplitudes: Sequence[float]
    unit_amplitude: float
    full_scale: float | None = None

    def __post_init__(self):
        if not self.unit_amplitude > 0:
            raise ConfigError(f"unit amplitude must be positive, got {self.unit_amplitude!r}")


def discretize_amplitudes(rec: AmplitudeRecord) -> CountHistogram:
    a = np.asarray(rec.amplitudes, dtype=float)
    if a.size == 0:
        raise ConfigError("amplitude record is empty")
    bad = np.flatnonzero(~(a >= 0))
    if bad.size:
        raise ConfigError(f"amplitude {a[bad[0]]!r} at index {bad[0]} is negative or not a number")
    if rec.full_scale is not None:
        over = np.flatnonzero(a > rec.full_scale)
        if over.size:
            raise ConfigError(
                f"amplitude {a[over[0]]!r} at index {over[0]} exceeds full scale {rec.full_scale}"
            )
    k = np.floor(a / rec.unit_amplitude + 0.5).astype(np.int64)
    return CountHistogram.from_samples(k, threshold_rule=THRESHOLD_RULE)


def read_amplitudes(path: str | Path) -> np.ndarray:
    """One amplitude per line under the header ``amplitude``."""
    lines = Path(path).read_text().split()
    if not lines or lines[0].strip() != "amplitude":
        raise ConfigError(f"{path}: expected header 'amplitude'")
    try:
        return np.array([float(x) for x in lines[1:]])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_amplitudes(path: str | Path, amplitudes: Sequence[float]) -> None:
    Path(path).write_text("amplitude\n" + "".join(f"{float(a)!r}\n" for a in amplitudes))


def synthesize_amplitudes(
    hist: CountHistogram, unit_amplitude: float, spread: float, rng: np.random.Generator
) -> np.ndarray:
    """Gaussian pulse heights around k*A0 for every trial of a raw histogram."""
    k = np.repeat(np.arange(hist.counts.size), hist.counts)
    rng.shuffle(k)
    a = k * unit_amplitude + rng.normal(0.0, spread, k.size)
    return np.abs(a)
