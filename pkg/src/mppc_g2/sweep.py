"""Intensity sweeps and the calibrate-then-correct pipeline.

A sweep point is addressed by its target mean photocounts per pulse. The
source's rate parameter is set so that ``eta * <n> * (1 + P)`` hits the
target; the point actually emitted carries the measured mean of the
dark-subtracted histogram.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

from . import streams
from .detector import (
    DetectorConfig,
    HbtCounts,
    simulate_dark_histogram,
    simulate_hbt,
    simulate_histogram,
)
from .errors import ConfigError, ModelValidityWarning
from .estimator import (
    EstimatorMode,
    correct_g2_crosstalk,
    correction_gain,
    estimate_g,
    hbt_g2,
)
from .fitting import CurvePoint, FitResult, Model, lm_fit
from .sources import PhotonSourceSpec, mean_photons, source_to_dict, with_mean

# Attenuation of the HBT arm. Binary APDs bias C*S/(N1*N2) by roughly the
# per-photon click probability, so the APD efficiency is capped well below 1
# and lowered further for bright sources.
HBT_DETECTED_MEAN = 0.1
HBT_MAX_EFFICIENCY = 0.05


@dataclass(frozen=True)
class RunConfig:
    source: PhotonSourceSpec
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    trials: int = 1_000_000
    seed: int = 0
    mu_grid: tuple[float, ...] = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0)
    mode: EstimatorMode = EstimatorMode.EXACT_M
    resamples: int = 500
    hbt: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mu_grid", tuple(float(x) for x in self.mu_grid))
        object.__setattr__(self, "mode", EstimatorMode(self.mode))
        if not self.mu_grid:
            raise ConfigError("mu_grid is empty")
        if any(not x > 0 for x in self.mu_grid):
            raise ConfigError("mu_grid entries must be positive")
        if any(b <= a for a, b in zip(self.mu_grid, self.mu_grid[1:])):
            raise ConfigError("mu_grid must be strictly ascending")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.resamples < 100:
            raise ConfigError("resamples must be >= 100")

    def to_dict(self) -> dict:
        return {
            "source": source_to_dict(self.source),
            "detector": self.detector.to_dict(),
            "trials": self.trials,
            "seed": self.seed,
            "mu_grid": list(self.mu_grid),
            "mode": self.mode.value,
            "resamples": self.resamples,
            "hbt": self.hbt,
        }


@dataclass
class SweepPoint:
    target: float
    source: PhotonSourceSpec
    point: CurvePoint
    hbt: CurvePoint | None = None
    hbt_counts: HbtCounts | None = None
    hbt_efficiency: float | None = None
    event_linear_saturated: int = 0


@dataclass
class Sweep:
    config: RunConfig
    points: list[SweepPoint]

    @property
    def curve(self) -> list[CurvePoint]:
        return [sp.point for sp in self.points]

    @property
    def hbt_curve(self) -> list[CurvePoint]:
        return [sp.hbt for sp in self.points if sp.hbt is not None]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "points": [
                {
                    "target_mu": sp.target,
                    "source": source_to_dict(sp.source),
                    "mu": sp.point.mu,
                    "g": sp.point.g,
                    "sigma": sp.point.sigma,
                    "event_linear_saturated": sp.event_linear_saturated,
                    **(
                        {
                            "hbt_g": sp.hbt.g,
                            "hbt_sigma": sp.hbt.sigma,
                            "hbt_efficiency": sp.hbt_efficiency,
                            "hbt_counts": vars(sp.hbt_counts),
                        }
                        if sp.hbt is not None
                        else {}
                    ),
                }
                for sp in self.points
            ],
        }


def source_for_target(
    base: PhotonSourceSpec, detector: DetectorConfig, mu_target: float
) -> PhotonSourceSpec:
    if detector.efficiency == 0:
        raise ConfigError("zero detector efficiency: no photocounts to sweep")
    return with_mean(base, mu_target / (detector.efficiency * (1 + detector.effective_crosstalk)))


def hbt_efficiency_for(spec: PhotonSourceSpec) -> float:
    """APD efficiency attenuated so the singles stay far below one click per gate."""
    mean = mean_photons(spec)
    return HBT_MAX_EFFICIENCY if mean == 0 else min(HBT_MAX_EFFICIENCY, HBT_DETECTED_MEAN / mean)


def run_point(config: RunConfig, index: int, mu_target: float) -> SweepPoint:
    det = config.detector
    spec = source_for_target(config.source, det, mu_target)
    sig_seed = streams.derive_seed(config.seed, index, 0)
    dark_seed = streams.derive_seed(config.seed, index, 1)
    boot_seed = streams.derive_seed(config.seed, index, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModelValidityWarning)
        signal = simulate_histogram(spec, det, config.trials, sig_seed, workers=config.workers)
        dark = simulate_dark_histogram(det, config.trials, dark_seed, workers=config.workers)
    est = estimate_g(
        signal,
        dark,
        l=2,
        m=det.pixels,
        mode=config.mode,
        resamples=config.resamples,
        seed=boot_seed,
    )
    sp = SweepPoint(
        target=mu_target,
        source=spec,
        point=CurvePoint(est.mu, est.g, est.std_error),
        event_linear_saturated=signal.metadata["event_linear_saturated"]
        + dark.metadata["event_linear_saturated"],
    )
    if config.hbt:
        eff = hbt_efficiency_for(spec)
        counts = simulate_hbt(spec, eff, config.trials, streams.derive_seed(config.seed, index, 3))
        h = hbt_g2(counts)
        sp.hbt_counts, sp.hbt_efficiency = counts, eff
        # abscissa: mean photocounts the MPPC would see without crosstalk
        sp.hbt = CurvePoint(det.efficiency * mean_photons(spec), h.g, h.std_error)
    return sp


def run_sweep(config: RunConfig) -> Sweep:
    sweep = Sweep(config, [run_point(config, i, mu) for i, mu in enumerate(config.mu_grid)])
    saturated = sum(sp.event_linear_saturated for sp in sweep.points)
    if saturated:
        warnings.warn(
            f"{saturated} gates in the sweep had k*P > 1 (event_linear probability saturated)",
            ModelValidityWarning,
            stacklevel=2,
        )
    return sweep


def correct_curve(points: Sequence[CurvePoint], p: float) -> list[CurvePoint]:
    """Remove linear crosstalk from each point.

    The abscissa becomes the crosstalk-free mean counts ``mu / (1 + P)``;
    the error is propagated from the point's own sigma only.
    """
    gain = correction_gain(p)
    return [
        CurvePoint(pt.mu / (1 + p), correct_g2_crosstalk(pt.g, pt.mu, p), pt.sigma * gain, True)
        for pt in points
    ]


@dataclass
class PipelineReport:
    crosstalk_fit: FitResult
    raw_fit: FitResult
    corrected_fit: FitResult
    reference: list[CurvePoint]
    raw: list[CurvePoint]
    corrected: list[CurvePoint]
    provenance: dict = field(default_factory=dict)

    @property
    def crosstalk_p(self) -> float:
        return self.crosstalk_fit.params[0]

    @property
    def unconverged(self) -> list[str]:
        fits = {"crosstalk": self.crosstalk_fit, "raw": self.raw_fit, "corrected": self.corrected_fit}
        return [name for name, f in fits.items() if not f.converged]

    def to_dict(self) -> dict:
        def pts(points):
            return [[p.mu, p.g, p.sigma, p.corrected] for p in points]

        return {
            "P": self.crosstalk_p,
            "P_std_error": self.crosstalk_fit.std_errors[0],
            "crosstalk_fit": self.crosstalk_fit.to_dict(),
            "raw_fit": self.raw_fit.to_dict(),
            "corrected_fit": self.corrected_fit.to_dict(),
            "unconverged": self.unconverged,
            "point_columns": ["mu", "g", "sigma", "corrected"],
            "reference_points": pts(self.reference),
            "raw_points": pts(self.raw),
            "corrected_points": pts(self.corrected),
            "provenance": self.provenance,
        }


def run_pipeline(
    reference: Sequence[CurvePoint],
    subject: Sequence[CurvePoint],
    provenance: dict | None = None,
) -> PipelineReport:
    """Calibrate P on a g2 = 1 reference curve, then correct and fit the subject curve."""
    ct_fit = lm_fit(Model.CROSSTALK_REF, reference)
    p = ct_fit.params[0]
    if not 0 <= p < 1 or math.isnan(p):
        raise ArithmeticError(f"calibrated crosstalk probability {p!r} outside [0, 1)")
    raw_fit = lm_fit(Model.HYPERBOLA, subject)
    corrected = correct_curve(subject, p)
    corr_fit = lm_fit(Model.HYPERBOLA, corrected)
    return PipelineReport(
        ct_fit, raw_fit, corr_fit, list(reference), list(subject), corrected, dict(provenance or {})
    )
