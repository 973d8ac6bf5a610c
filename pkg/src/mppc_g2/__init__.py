"""Photon-number-resolving multi-pixel detector simulation and g^(l) estimation."""
from .detector import (
    CrosstalkMode,
    DetectorConfig,
    HbtCounts,
    detect_one_pulse,
    fired_count_pmf,
    simulate_dark_histogram,
    simulate_hbt,
    simulate_histogram,
)
from .errors import (
    ConfigError,
    DegenerateFitError,
    InvalidSpecError,
    ModelValidityWarning,
    UndefinedCorrelationError,
    UnphysicalCorrectionWarning,
)
from .estimator import (
    CorrelationEstimate,
    EstimatorMode,
    bootstrap_std_error,
    correct_g2_crosstalk,
    estimate_g,
    g_from_histogram,
    hbt_g2,
    predict_g2_crosstalk,
)
from .fitting import CurvePoint, FitResult, Model, evaluate_model, lm_fit
from .histogram import CountHistogram, merge, subtract_dark
from .sources import (
    Coherent,
    DegenerateSqueezedSupermode,
    SingleModeSqueezedExact,
    Thermal,
    TwinBeamSignal,
    analytic_g,
    mean_photons,
    pmf,
    sample_photon_number,
)

__version__ = "0.1.0"
