from .clickstream import ClickStream, sidecar_path, split_hbt
from .correlation import (
    CoincidenceHistogram,
    EnvelopeFit,
    G2Estimator,
    G2Value,
    brute_force_pairs,
    correlate,
    fit_envelope,
    g2_zero,
    side_peak_envelope,
)

__all__ = [
    "ClickStream", "sidecar_path", "split_hbt", "CoincidenceHistogram", "EnvelopeFit",
    "G2Estimator", "G2Value", "brute_force_pairs", "correlate", "fit_envelope", "g2_zero",
    "side_peak_envelope",
]
