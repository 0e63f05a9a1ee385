"""clusterlab: a CNN-as-clusterer workbench with classical baselines."""

__version__ = "0.1.0"
