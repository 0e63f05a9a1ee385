"""Classical clustering baselines over raw 2D point coordinates."""

from .cfsfdp import CfsfdpParams, DensityPeaks, cfsfdp, cutoff_distance, density_peaks
from .common import (
    ClusteringResult,
    canonical_labels,
    make_result,
    pairwise_distances,
    pairwise_sq_distances,
)
from .fcm import fuzzy_cmeans
from .kmeans import kmeans
from .meanshift import mean_shift
from .spectral import (
    AffinityParams,
    connected_components,
    ncut_value,
    normalized_cut,
    rbf_affinity,
    spectral_njw,
)

__all__ = [
    "AffinityParams",
    "CfsfdpParams",
    "ClusteringResult",
    "DensityPeaks",
    "canonical_labels",
    "cfsfdp",
    "connected_components",
    "cutoff_distance",
    "density_peaks",
    "fuzzy_cmeans",
    "kmeans",
    "make_result",
    "mean_shift",
    "ncut_value",
    "normalized_cut",
    "pairwise_distances",
    "pairwise_sq_distances",
    "rbf_affinity",
    "spectral_njw",
]
