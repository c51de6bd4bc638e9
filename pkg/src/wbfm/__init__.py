"""Estimation of frequency modulations applied to stationary Gaussian signals.

Modules: :mod:`.tfcore` (DFT and Gabor transforms), :mod:`.model`
(spectra, modulation laws, synthesis), :mod:`.covariance` (Gabor slice
covariances), :mod:`.estimator` (the alternating ML estimator) and
:mod:`.cli` with its :mod:`.experiment` pipelines.
"""
from .covariance import NumericalError, SliceCovariance, noise_cov, signal_cov
from .estimator import EstimatorConfig, IterationLog, ModulationTrack, run_algorithm1
from .model import ModulationLaw, PowerSpectrum, make_modulation, make_spectrum
from .tfcore import GaborSystem, Window, gabor, make_window

__version__ = "0.1.0"

__all__ = [
    "GaborSystem",
    "Window",
    "gabor",
    "make_window",
    "PowerSpectrum",
    "ModulationLaw",
    "make_spectrum",
    "make_modulation",
    "SliceCovariance",
    "NumericalError",
    "noise_cov",
    "signal_cov",
    "EstimatorConfig",
    "IterationLog",
    "ModulationTrack",
    "run_algorithm1",
]
