"""Noise-signature anomaly detection: wavelet-packet residuals, third-order
cumulant features, a chi-square calibrated Mahalanobis test and CUSUM alarms."""

from .detector import (
    CusumState,
    DetectorConfig,
    calibrate_cusum,
    chi2_cdf,
    chi2_inv_cdf,
    cusum_step,
    decide,
    detection_probability,
    noncentral_chi2_cdf,
)
from .hos import DEFAULT_LAGS, LagSet, bispectrum, cumulant_grid, lag_cumulants, third_cumulant
from .metrics import ScoredDataset, f1_best, latency_cdf, pr_curve, roc_curve, run_bands
from .pipeline import PipelineConfig, extract_features
from .residual import build_mask, resolve_policy, split_and_reconstruct
from .signature import NominalModel, build_signature, fit_nominal, mahalanobis_sq
from .synth import AnomalySpec, ScenarioSpec, generate, generate_fused
from .wpt import QmfPair, WptConfig, forward_wpt, get_qmf, inverse_wpt

__version__ = "0.1.0"
