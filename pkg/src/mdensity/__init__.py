"""Multimeasurement Gaussian smoothed densities (M-densities).

Noise models and universality classes, closed-form spectral analysis of
Gaussian M-densities, the GPS score parametrization, trainable and analytic
nu fields, walk-jump Langevin sampling and chain diagnostics.
"""

from .core import (
    DataSource,
    InvalidParameterError,
    MeasurementBundle,
    NoiseModel,
    bundle_mean,
    class_members,
    corrupt,
    make_noise_model,
)
from .gps import (
    GpsScore,
    NuField,
    bayes_estimate,
    bayes_estimate_channelwise,
    gps_score,
    permute_bundle,
)
from .nu_analytic import GaussianNu, GmmNu, gaussian_mmse
from .spectral import (
    GaussianPrior,
    SpectrumReport,
    condition_number,
    energy_general,
    precision_general,
    spectrum_closed_form,
)

__version__ = "0.1.0"

__all__ = [
    "DataSource",
    "GaussianNu",
    "GaussianPrior",
    "GmmNu",
    "GpsScore",
    "InvalidParameterError",
    "MeasurementBundle",
    "NoiseModel",
    "NuField",
    "SpectrumReport",
    "bayes_estimate",
    "bayes_estimate_channelwise",
    "bundle_mean",
    "class_members",
    "condition_number",
    "corrupt",
    "energy_general",
    "gaussian_mmse",
    "gps_score",
    "make_noise_model",
    "permute_bundle",
    "precision_general",
    "spectrum_closed_form",
]
