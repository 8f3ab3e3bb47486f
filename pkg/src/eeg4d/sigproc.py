"""Band decomposition and windowed DE/PSD feature extraction.

A raw recording is cut into non-overlapping segments, each segment is
band-filtered with order-5 Butterworth bandpass filters (causal, zero
initial state, reset per segment), and differential-entropy / mean-square
power features are computed over 0.5 s windows of the filtered signal.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import butter, sosfilt

VARIANCE_FLOOR = 1e-10


@dataclass(frozen=True)
class BandSpec:
    name: str
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not (0 < self.low_hz < self.high_hz):
            raise ValueError(f"invalid band edges [{self.low_hz}, {self.high_hz}]")


CANONICAL_BANDS = (
    BandSpec("delta", 1.0, 4.0),
    BandSpec("theta", 4.0, 8.0),
    BandSpec("alpha", 8.0, 14.0),
    BandSpec("beta", 14.0, 31.0),
    BandSpec("gamma", 31.0, 51.0),
)


def feature_order(bands=CANONICAL_BANDS):
    """Slot names along the feature axis: all DE first, then all PSD."""
    return tuple(f"de_{b.name}" for b in bands) + tuple(
        f"psd_{b.name}" for b in bands
    )


@dataclass
class RawRecording:
    """Multichannel voltage trace with provenance."""
    channels: list
    data: np.ndarray          # [c, n_samples]
    fs: int
    label: int = 0
    subject_id: int = 0
    experiment_id: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] != len(self.channels):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{len(self.channels)} channels"
            )
        if len(set(self.channels)) != len(self.channels):
            raise ValueError("channel names must be unique")


@dataclass
class FilterCoeffs:
    """Cascade of second-order sections (scipy sos layout, a0 = 1)."""
    sections: np.ndarray      # [n_sections, 6]
    band: BandSpec

    def pole_moduli(self):
        mods = []
        for sec in self.sections:
            poles = np.roots([1.0, sec[4], sec[5]])
            mods.extend(np.abs(poles))
        return np.array(mods)


@dataclass
class FeatureTensor:
    """Per-channel windowed band features, [c x 2f x 2T]."""
    values: np.ndarray
    feature_order: tuple
    label: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature tensor contains NaN/Inf")


def design_bandpass(band, fs, order=5):
    """Order-`order` Butterworth bandpass as second-order sections."""
    if order < 1:
        raise ValueError(f"filter order must be >= 1, got {order}")
    nyq = fs / 2.0
    if not (0 < band.low_hz < band.high_hz < nyq):
        raise ValueError(
            f"band [{band.low_hz}, {band.high_hz}] Hz invalid for fs={fs} "
            f"(Nyquist {nyq})"
        )
    sos = butter(order, [band.low_hz, band.high_hz], btype="bandpass",
                 output="sos", fs=fs)
    coeffs = FilterCoeffs(sections=sos, band=band)
    if np.any(coeffs.pole_moduli() >= 1.0):
        raise ValueError(f"designed filter for {band.name} is unstable")
    return coeffs


@lru_cache(maxsize=64)
def _design_cached(band, fs, order):
    return design_bandpass(band, fs, order)


def design_filter_bank(fs, bands=CANONICAL_BANDS, order=5):
    return [design_bandpass(b, fs, order) for b in bands]


def apply_filter(coeffs, signal):
    """Causal filtering along the last axis, zero initial state."""
    signal = np.asarray(signal)
    if signal.size == 0:
        raise ValueError("cannot filter an empty signal")
    return sosfilt(coeffs.sections, signal, axis=-1)


def segment(rec, seconds=3):
    """Cut a recording into non-overlapping [c, fs*seconds] blocks.

    The trailing remainder is discarded; a recording shorter than one
    segment yields an empty list.
    """
    seg_len = int(round(rec.fs * seconds))
    n = rec.data.shape[1]
    count = n // seg_len
    return [
        np.ascontiguousarray(rec.data[:, i * seg_len:(i + 1) * seg_len])
        for i in range(count)
    ]


def compute_psd(window):
    """Mean squared amplitude of the window."""
    window = np.asarray(window)
    if window.size == 0:
        raise ValueError("empty window")
    return float(np.mean(np.square(window)))


def compute_de(window):
    """Differential entropy of a Gaussian fit: 0.5*ln(2*pi*e*var).

    Uses the biased (divisor N) variance; degenerate windows are floored
    at var = 1e-10 instead of erroring.
    """
    window = np.asarray(window)
    if window.size < 2:
        raise ValueError("differential entropy needs at least 2 samples")
    var = max(float(np.var(window)), VARIANCE_FLOOR)
    return 0.5 * np.log(2.0 * np.pi * np.e * var)


def extract_features(seg, fs, bands=CANONICAL_BANDS, window_s=0.5, label=0):
    """Windowed DE and PSD per channel per band for one segment.

    Each band filter runs once over the whole segment (zero initial state),
    then the filtered trace is split into fs*window_s sample windows.
    Output is [c, 2f, n_windows] with all DE slots before all PSD slots.
    """
    seg = np.asarray(seg, dtype=np.float64)
    c, n = seg.shape
    win = int(round(fs * window_s))
    if win < 2 or n % win != 0:
        raise ValueError(
            f"window of {window_s}s ({win} samples) must divide the "
            f"segment length {n}"
        )
    n_win = n // win
    f = len(bands)
    values = np.empty((c, 2 * f, n_win), dtype=np.float64)
    for bi, band in enumerate(bands):
        coeffs = _design_cached(band, fs, 5)
        filtered = apply_filter(coeffs, seg)          # [c, n]
        windows = filtered.reshape(c, n_win, win)
        var = np.maximum(windows.var(axis=-1), VARIANCE_FLOOR)
        values[:, bi, :] = 0.5 * np.log(2.0 * np.pi * np.e * var)
        values[:, f + bi, :] = np.mean(np.square(windows), axis=-1)
    return FeatureTensor(values=values, feature_order=feature_order(bands),
                         label=label)
