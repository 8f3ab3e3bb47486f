"""Filter-bank and feature oracles.

Filter magnitudes are checked two independent ways: direct evaluation of
the section cascade on the unit circle, and the analytic bilinear-warped
Butterworth bandpass magnitude formula. Neither goes through scipy.
"""

import numpy as np
import pytest

from eeg4d.sigproc import (CANONICAL_BANDS, BandSpec, RawRecording,
                           apply_filter, compute_de, compute_psd,
                           design_bandpass, design_filter_bank,
                           extract_features, feature_order, segment)

FS = 200


def sos_magnitude(coeffs, freq_hz, fs=FS):
    """|H| from the section polynomials evaluated on the unit circle."""
    z1 = np.exp(-1j * 2 * np.pi * freq_hz / fs)
    h = 1.0 + 0j
    for b0, b1, b2, a0, a1, a2 in coeffs.sections:
        h *= (b0 + b1 * z1 + b2 * z1 **
              2) / (a0 + a1 * z1 + a2 * z1 ** 2)
    return abs(h)


def analytic_butter_bandpass_magnitude(freq_hz, low, high, order, fs=FS):
    """Closed-form magnitude of a bilinear-transformed Butterworth bandpass."""
    w = np.tan(np.pi * freq_hz / fs)
    wl = np.tan(np.pi * low / fs)
    wh = np.tan(np.pi * high / fs)
    if w == 0:
        return 0.0
    omega = (w * w - wl * wh) / (w * (wh - wl))
    return 1.0 / np.sqrt(1.0 + omega ** (2 * order))


GAMMA = CANONICAL_BANDS[4]
ALPHA = CANONICAL_BANDS[2]


def test_gamma_passband_and_stopband():
    coeffs = design_bandpass(GAMMA, FS, 5)
    assert sos_magnitude(coeffs, 41.0) >= 10 ** (-3 / 20)
    assert sos_magnitude(coeffs, 10.0) <= 10 ** (-20 / 20)


def test_magnitude_matches_analytic_formula():
    for band in CANONICAL_BANDS:
        coeffs = design_bandpass(band, FS, 5)
        for f in np.linspace(0.5, 95.0, 40):
            got = sos_magnitude(coeffs, f)
            want = analytic_butter_bandpass_magnitude(
                f, band.low_hz, band.high_hz, 5
            )
            assert abs(got - want) < 1e-8, (band.name, f, got, want)


def test_alpha_band_ordering():
    coeffs = design_bandpass(ALPHA, FS, 5)
    mid = sos_magnitude(coeffs, 11.0)
    assert mid > sos_magnitude(coeffs, 4.0)
    assert mid > sos_magnitude(coeffs, 30.0)


def test_all_bands_stable():
    for coeffs in design_filter_bank(FS):
        assert np.all(coeffs.pole_moduli() < 1.0)


def test_design_errors():
    with pytest.raises(ValueError):
        design_bandpass(BandSpec("bad", 90.0, 110.0), FS)   # edge >= Nyquist
    with pytest.raises(ValueError):
        design_bandpass(GAMMA, FS, order=0)
    with pytest.raises(ValueError):
        BandSpec("inverted", 10.0, 4.0)


# ---------------------------------------------------------------------------
# apply_filter

def test_filter_zero_and_linearity():
    coeffs = design_bandpass(GAMMA, FS)
    assert np.all(apply_filter(coeffs, np.zeros(150)) == 0)

    r = np.random.default_rng(0)
    x, y = r.standard_normal(300), r.standard_normal(300)
    a, b = 1.7, -0.4
    lhs = apply_filter(coeffs, a * x + b * y)
    rhs = a * apply_filter(coeffs, x) + b * apply_filter(coeffs, y)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


def test_filter_empty_signal_errors():
    with pytest.raises(ValueError):
        apply_filter(design_bandpass(GAMMA, FS), np.array([]))


def test_gamma_sine_steady_state_amplitude():
    coeffs = design_bandpass(GAMMA, FS)
    t = np.arange(4 * FS) / FS
    out = apply_filter(coeffs, np.sin(2 * np.pi * 41.0 * t))
    # last 2 s = exactly 82 cycles of 41 Hz; quadrature demodulation
    tail = out[-2 * FS:]
    n = np.arange(tail.size)
    amp = 2 * abs(np.mean(tail * np.exp(-1j * 2 * np.pi * 41.0 * n / FS)))
    assert 0.7 <= amp <= 1.0
    designed = sos_magnitude(coeffs, 41.0)
    assert abs(amp - designed) / designed < 0.02


# ---------------------------------------------------------------------------
# segmentation

def _recording(n_samples, channels=3, label=2):
    data = np.random.default_rng(1).standard_normal((channels, n_samples))
    return RawRecording(channels=[f"C{i}" for i in range(channels)],
                        data=data, fs=FS, label=label)


def test_segment_arithmetic():
    segs = segment(_recording(180 * FS), seconds=3)
    assert len(segs) == 60
    assert all(s.shape == (3, 600) for s in segs)


def test_segment_floor_rule_and_short_input():
    segs = segment(_recording(700), seconds=3)
    assert len(segs) == 1 and segs[0].shape == (3, 600)
    assert segment(_recording(599), seconds=3) == []


def test_segment_concatenation_reproduces_prefix():
    rec = _recording(1999)
    segs = segment(rec, seconds=3)
    joined = np.concatenate(segs, axis=1)
    np.testing.assert_array_equal(joined, rec.data[:, :joined.shape[1]])


def test_seed_experiment_segment_count():
    # 15 clips of roughly 4 minutes: about 1128 segments per experiment
    total = sum(len(segment(_recording(226 * FS), seconds=3))
                for _ in range(15))
    assert abs(total - 1128) / 1128 < 0.05


# ---------------------------------------------------------------------------
# features

def test_psd_values():
    assert compute_psd(np.full(100, 2.0)) == pytest.approx(4.0)
    assert compute_psd(np.zeros(50)) == 0.0
    t = np.arange(400)
    sine = np.sin(2 * np.pi * 5.0 * t / FS)      # 10 whole cycles
    assert compute_psd(sine) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        compute_psd(np.array([]))


def test_psd_scaling_and_nonnegativity():
    r = np.random.default_rng(2)
    for _ in range(50):
        x = r.standard_normal(64)
        k = r.uniform(-3, 3)
        assert compute_psd(x) >= 0
        assert compute_psd(k * x) == pytest.approx(k * k * compute_psd(x),
                                                   rel=1e-9)


def test_de_gaussian_closed_form():
    x = np.random.default_rng(3).normal(0.0, 1.0, size=10000)
    assert abs(compute_de(x) - 0.5 * np.log(2 * np.pi * np.e)) < 0.05


def test_de_matches_numeric_entropy_integral():
    # quadrature of -f ln f for the fitted Gaussian must equal Eq. 3's value
    x = np.random.default_rng(4).normal(1.3, 0.8, size=4000)
    mu, var = x.mean(), x.var()
    s = np.sqrt(var)
    grid = np.linspace(mu - 10 * s, mu + 10 * s, 200001)
    pdf = np.exp(-0.5 * ((grid - mu) / s) ** 2) / np.sqrt(2 * np.pi * var)
    integrand = np.where(pdf > 0, -pdf * np.log(pdf), 0.0)
    numeric = np.trapezoid(integrand, grid)
    assert abs(compute_de(x) - numeric) < 1e-6


def test_de_exact_zero_point():
    s = np.sqrt(1.0 / (2 * np.pi * np.e))
    assert compute_de(np.array([-s, s])) == pytest.approx(0.0, abs=1e-12)


def test_de_degenerate_window_floors():
    expected = 0.5 * np.log(2 * np.pi * np.e * 1e-10)
    assert compute_de(np.full(10, 7.7)) == pytest.approx(expected)


def test_de_errors_and_invariances():
    with pytest.raises(ValueError):
        compute_de(np.array([1.0]))
    r = np.random.default_rng(5)
    for _ in range(50):
        x = r.standard_normal(100)
        c = r.uniform(-10, 10)
        assert compute_de(x + c) == pytest.approx(compute_de(x), abs=1e-9)
        k = r.uniform(0.1, 5.0) * r.choice([-1.0, 1.0])
        assert compute_de(k * x) == pytest.approx(
            compute_de(x) + np.log(abs(k)), abs=1e-6
        )


def test_extract_features_shapes_and_order():
    r = np.random.default_rng(6)
    seg = r.standard_normal((62, 600))
    feat = extract_features(seg, FS)
    assert feat.values.shape == (62, 10, 6)
    assert np.all(np.isfinite(feat.values))
    assert feat.feature_order == (
        "de_delta", "de_theta", "de_alpha", "de_beta", "de_gamma",
        "psd_delta", "psd_theta", "psd_alpha", "psd_beta", "psd_gamma",
    )
    assert feature_order() == feat.feature_order


def test_extract_features_band_separation():
    t = np.arange(600) / FS
    seg = np.tile(np.sin(2 * np.pi * 41.0 * t), (62, 1))
    feat = extract_features(seg, FS)
    gamma_psd = feat.values[:, 9, :]
    delta_psd = feat.values[:, 5, :]
    assert np.all(gamma_psd > delta_psd)


def test_extract_features_window_must_divide():
    seg = np.zeros((4, 601))
    with pytest.raises(ValueError):
        extract_features(seg, FS)
