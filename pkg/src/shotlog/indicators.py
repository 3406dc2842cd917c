"""Acoustic indicators: A-weighted fast-time-weighted level series and
1/3-octave spectrograms on a shared 125 ms grid.

The A-weighting filter is realized as a cascade of biquads obtained by
bilinear transform of the analog poles/zeros, each section prewarped so
the realized magnitude tracks the closed-form response. Band powers are
computed in the frequency domain with 4th-order band-pass weightings
(-3 dB at the band edges). All levels are dB re full scale, floored at
-120 dB so silence stays finite.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter, sosfilt

from .clip_io import AudioClip
from .errors import ConfigurationError

HOP_S = 0.125
FAST_TAU_S = 0.125
DB_FLOOR = -120.0

# Analog corner frequencies of the A-weighting transfer function and the
# exact closed-form magnitude (two high-pass pole pairs would be f1; the
# full response has a double pole at f1 and f4 and single poles f2, f3).
_F1 = 20.598997
_F2 = 107.65265
_F3 = 737.86223
_F4 = 12194.217

# 27 nominal third-octave bands, 20 Hz .. 8 kHz, base-10 ratio.
BAND_INDICES = np.arange(-17, 10)
BAND_CENTERS_HZ = 1000.0 * 10.0 ** (BAND_INDICES / 10.0)
_BAND_EDGE_RATIO = 10.0 ** (1.0 / 20.0)
_RELATIVE_BANDWIDTH = _BAND_EDGE_RATIO - 1.0 / _BAND_EDGE_RATIO
_BAND_FILTER_ORDER = 4


@dataclass
class LevelSeries:
    """A-weighted, fast-time-weighted levels sampled every 125 ms."""

    values_db: np.ndarray
    hop_s: float = HOP_S
    weighting: str = "A"
    time_weighting: str = "Fast"
    calibration_offset_db: float = 0.0

    def __post_init__(self):
        self.values_db = np.asarray(self.values_db, dtype=np.float64)
        if not np.all(np.isfinite(self.values_db)):
            raise ValueError("level values must be finite")
        if self.hop_s != HOP_S:
            raise ValueError(f"hop_s must be {HOP_S}, got {self.hop_s}")

    def __len__(self):
        return len(self.values_db)


@dataclass
class Spectrogram:
    """Per-frame 1/3-octave band powers in dB, 27 bands, 125 ms hop."""

    frames: np.ndarray
    hop_s: float = HOP_S
    band_centers_hz: np.ndarray = field(default_factory=lambda: BAND_CENTERS_HZ.copy())

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.band_centers_hz = np.asarray(self.band_centers_hz, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != len(self.band_centers_hz):
            raise ValueError("frames must be [n_frames x n_bands]")
        if len(self.band_centers_hz) != 27:
            raise ValueError("expected exactly 27 bands")
        if np.any(np.diff(self.band_centers_hz) <= 0):
            raise ValueError("band centers must be strictly increasing")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("spectrogram cells must be finite")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def _closed_form_a_response(frequency_hz):
    f2 = np.square(np.asarray(frequency_hz, dtype=np.float64))
    num = (_F4**2) * f2 * f2
    den = (
        (f2 + _F1**2)
        * np.sqrt((f2 + _F2**2) * (f2 + _F3**2))
        * (f2 + _F4**2)
    )
    return num / den


_A_REF_1KHZ = _closed_form_a_response(1000.0)


def a_weighting_gain_db(frequency_hz):
    """Closed-form A-weighting magnitude in dB, exactly 0 dB at 1 kHz.

    Accepts a scalar or an array of frequencies; frequencies must be > 0.
    """
    freq = np.asarray(frequency_hz, dtype=np.float64)
    if np.any(freq <= 0):
        raise ValueError("frequency must be positive")
    gain = 20.0 * np.log10(_closed_form_a_response(freq) / _A_REF_1KHZ)
    return float(gain) if np.isscalar(frequency_hz) else gain


def _bilinear_section(num_s, den_s, fs: float, warp_hz: float | None) -> np.ndarray:
    """Bilinear transform of one analog section into an sos row.

    ``warp_hz`` prewarps the substitution so the analog response at that
    frequency is preserved exactly; sections whose corner cannot be
    represented below Nyquist fall back to the plain transform.
    """
    if warp_hz is not None and warp_hz < 0.95 * fs / 2.0:
        w = 2.0 * np.pi * warp_hz
        k = w / np.tan(w / (2.0 * fs))
    else:
        k = 2.0 * fs
    n = len(den_s) - 1
    num_s = [0.0] * (n + 1 - len(num_s)) + list(num_s)
    bz = np.zeros(n + 1)
    az = np.zeros(n + 1)
    for i in range(n + 1):
        poly = np.poly1d([1.0, -1.0]) ** i * np.poly1d([1.0, 1.0]) ** (n - i)
        coeffs = np.pad(poly.coeffs, (n + 1 - len(poly.coeffs), 0))
        bz += num_s[n - i] * (k**i) * coeffs
        az += den_s[n - i] * (k**i) * coeffs
    bz, az = bz / az[0], az / az[0]
    row = np.zeros(6)
    row[: n + 1] = bz
    row[3] = 1.0
    row[4 : 4 + n] = az[1:]
    return row


def a_weighting_sos(sample_rate_hz: int) -> np.ndarray:
    """Digital A-weighting filter as second-order sections.

    The 12.2 kHz pole pair is prewarped near the top of the measurement
    band (capped below Nyquist) to keep the realized magnitude within the
    closed-form response across 31.5 Hz - 8 kHz; the cascade is then
    normalized to unity gain at 1 kHz.
    """
    fs = float(sample_rate_hz)
    w1, w2, w3, w4 = (2.0 * np.pi * f for f in (_F1, _F2, _F3, _F4))
    warp_top = min(7000.0, 0.375 * fs)
    sos = np.vstack(
        [
            _bilinear_section([1.0, 0.0, 0.0], [1.0, 2 * w1, w1 * w1], fs, _F1),
            _bilinear_section([1.0, 0.0], [1.0, w2], fs, _F2),
            _bilinear_section([1.0, 0.0], [1.0, w3], fs, _F3),
            _bilinear_section([w4 * w4], [1.0, 2 * w4, w4 * w4], fs, warp_top),
        ]
    )
    z = np.exp(2j * np.pi * 1000.0 / fs)
    gain_1k = 1.0
    for b0, b1, b2, a0, a1, a2 in sos:
        gain_1k *= abs((b0 + b1 / z + b2 / z**2) / (a0 + a1 / z + a2 / z**2))
    sos[0, :3] /= gain_1k
    return sos


def a_weight_samples(clip: AudioClip) -> np.ndarray:
    """Run the clip through the digital A-weighting cascade."""
    return sosfilt(a_weighting_sos(clip.sample_rate_hz), clip.samples)


def fast_time_average(power: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    """Exponential time average of an instantaneous-power signal, tau = 125 ms."""
    alpha = np.exp(-1.0 / (sample_rate_hz * FAST_TAU_S))
    return lfilter([1.0 - alpha], [1.0, -alpha], power)


def level_series(clip: AudioClip) -> LevelSeries:
    """A-weighted fast level series of a clip, one value per 125 ms.

    The value at index i is the integrator state at the end of the frame
    [i*0.125, (i+1)*0.125) s; dB values are floored at -120.
    """
    if len(clip.samples) == 0:
        raise ValueError("cannot compute levels of an empty clip")
    weighted = a_weight_samples(clip)
    averaged = fast_time_average(np.square(weighted), clip.sample_rate_hz)
    hop = int(round(clip.sample_rate_hz * HOP_S))
    n_frames = len(clip.samples) // hop
    idx = np.arange(1, n_frames + 1) * hop - 1
    values = 10.0 * np.log10(np.maximum(averaged[idx], 10.0 ** (DB_FLOOR / 10.0)))
    return LevelSeries(values_db=values)


def band_weight_matrix(frequencies_hz: np.ndarray, centers_hz=None) -> np.ndarray:
    """Squared magnitude of each band filter on a frequency grid.

    4th-order band-pass prototype per band: |H|^2 = 1/(1 + W^8) where W is
    the detuning normalized so the -3 dB points land on the band edges.
    """
    if centers_hz is None:
        centers_hz = BAND_CENTERS_HZ
    f = np.asarray(frequencies_hz, dtype=np.float64)[:, None]
    fc = np.asarray(centers_hz, dtype=np.float64)[None, :]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        detune = np.where(f > 0, (f / fc - fc / f) / _RELATIVE_BANDWIDTH, np.inf)
        weights = 1.0 / (1.0 + detune ** (2 * _BAND_FILTER_ORDER))
    weights[np.asarray(frequencies_hz) == 0, :] = 0.0
    return weights


def third_octave_spectrogram(clip: AudioClip) -> Spectrogram:
    """27-band 1/3-octave log-power frames, 125 ms non-overlapping frames.

    Band powers are mean-square signal power inside each band (dB re full
    scale, floored at -120). The top band is truncated at Nyquist, so the
    sample rate must reach at least twice the top band center.
    """
    if len(clip.samples) == 0:
        raise ValueError("cannot compute a spectrogram of an empty clip")
    if clip.sample_rate_hz < 2.0 * BAND_CENTERS_HZ[-1]:
        raise ConfigurationError(
            f"sample rate {clip.sample_rate_hz} too low for the "
            f"{BAND_CENTERS_HZ[-1]:.0f} Hz band"
        )
    frame_len = int(round(clip.sample_rate_hz * HOP_S))
    n_frames = len(clip.samples) // frame_len
    frames = clip.samples[: n_frames * frame_len].reshape(n_frames, frame_len)
    spectrum = np.fft.rfft(frames, axis=1)
    # Per-bin contribution to the frame mean square (one-sided spectrum).
    energy = np.abs(spectrum) ** 2 / frame_len**2
    energy[:, 1:-1] *= 2.0
    if frame_len % 2 != 0:
        energy[:, -1] *= 2.0
    weights = band_weight_matrix(np.fft.rfftfreq(frame_len, 1.0 / clip.sample_rate_hz))
    band_power = energy @ weights
    frames_db = 10.0 * np.log10(np.maximum(band_power, 10.0 ** (DB_FLOOR / 10.0)))
    return Spectrogram(frames=frames_db)


def laf_max(series: LevelSeries) -> float:
    """Maximum of the level series plus its calibration offset."""
    if len(series) == 0:
        raise ValueError("empty level series")
    return float(np.max(series.values_db) + series.calibration_offset_db)


def level_series_to_csv(series: LevelSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "laf_db"])
        for i, value in enumerate(series.values_db):
            writer.writerow([f"{(i + 1) * series.hop_s:.3f}", f"{value:.4f}"])


def spectrogram_to_csv(spec: Spectrogram, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s"] + [f"{c:.1f}" for c in spec.band_centers_hz])
        for i in range(spec.n_frames):
            row = [f"{(i + 1) * spec.hop_s:.3f}"]
            row += [f"{v:.4f}" for v in spec.frames[i]]
            writer.writerow(row)
