"""Spatial-spectral-temporal EEG emotion recognition pipeline.

Raw multichannel EEG -> band-filtered DE/PSD features -> sparse 19x19
electrode grids stacked over bands and time -> attention CNN + bidirectional
LSTM classifier, with a cross-validation harness and electrode heatmaps.
"""

__version__ = "0.1.0"

from .kernels import NUMBA_ACTIVE

__all__ = ["NUMBA_ACTIVE", "__version__"]
