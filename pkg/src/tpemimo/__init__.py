"""Truncated polynomial expansion precoding for massive MIMO with correlated channels.

Modules
-------
channel        geometric ULA covariances, circulant spectra, channel draws
asymptotics    large-system moments from a variance profile
tpe            per-user TPE weights, Horner evaluation, SINR
duality        uplink/downlink power mappings and feasibility
power_control  conventional, min-power, max-min and weighted-sum-rate policies
baselines      ConjBF, MMSE, RZF via Householder QR, pathloss-only TPE
latency        clock-cycle model of TPE and RZF hardware pipelines
experiment     seeded Monte Carlo ergodic-rate runs
"""
from ._validation import NotFittedError
from .baselines import ConjugateBeamformer, MMSEPrecoder, RZFPrecoder, ZareiPrecoder
from .channel import (
    CovarianceModel,
    ScatteringGeometry,
    SystemConfig,
    build_covariance_model,
    sample_channel,
    variance_profile,
)
from .duality import InfeasibleError, ul_to_dl
from .experiment import ExperimentSpec, builtin_scenarios, run_experiment
from .latency import LatencyParams, unit_latencies
from .tpe import TPEPrecoder, finite_sinr

__version__ = "0.1.0"

__all__ = [
    "ConjugateBeamformer",
    "CovarianceModel",
    "ExperimentSpec",
    "InfeasibleError",
    "LatencyParams",
    "MMSEPrecoder",
    "NotFittedError",
    "RZFPrecoder",
    "ScatteringGeometry",
    "SystemConfig",
    "TPEPrecoder",
    "ZareiPrecoder",
    "build_covariance_model",
    "builtin_scenarios",
    "finite_sinr",
    "run_experiment",
    "sample_channel",
    "ul_to_dl",
    "unit_latencies",
    "variance_profile",
]
