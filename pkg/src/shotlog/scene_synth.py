"""Labeled soundscape synthesis.

Events arrive as a homogeneous Poisson process over the scene, each
placed on a background at a target in-span SNR (mean-square power ratio
of event vs background over the event's extent, unweighted samples).
Overlapping events sum linearly; one global normalization keeps the peak
inside full scale and is recorded. Synthesis is bit-deterministic given
the scene seed.

When no recorded event material is available, proxy pools fabricate
impulses (decaying broadband bursts for gunshots, longer low-frequency
bursts for explosions) over pink-noise backgrounds with slow level
drift, so the whole pipeline runs at desk scale. The proxies are
substitutes, not reproductions of any recording.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clip_io import AudioClip, EventAnnotation
from .errors import ConfigurationError

DEFAULT_GUNSHOT_RATE_PER_HOUR = 1587.0
DEFAULT_EXPLOSION_RATE_PER_HOUR = 98.0  # 0.98/h scaled 100x for enough positives
DEFAULT_SNR_RANGE_DB = (0.0, 20.0)
DEFAULT_DURATION_S = 20.0


@dataclass
class SceneSpec:
    seed: int
    background_pool: list[AudioClip]
    gunshot_pool: list[AudioClip] = field(default_factory=list)
    explosion_pool: list[AudioClip] = field(default_factory=list)
    duration_s: float = DEFAULT_DURATION_S
    gunshot_rate_per_hour: float = DEFAULT_GUNSHOT_RATE_PER_HOUR
    explosion_rate_per_hour: float = DEFAULT_EXPLOSION_RATE_PER_HOUR
    snr_db_range: tuple[float, float] = DEFAULT_SNR_RANGE_DB

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.gunshot_rate_per_hour < 0 or self.explosion_rate_per_hour < 0:
            raise ValueError("event rates must be nonnegative")
        lo, hi = self.snr_db_range
        if lo > hi:
            raise ValueError("snr_db_range must satisfy lo <= hi")
        if not self.background_pool:
            raise ValueError("background pool is empty")
        if self.gunshot_rate_per_hour > 0 and not self.gunshot_pool:
            raise ValueError("gunshot rate is positive but the pool is empty")
        if self.explosion_rate_per_hour > 0 and not self.explosion_pool:
            raise ValueError("explosion rate is positive but the pool is empty")


@dataclass
class Placement:
    label: str
    clip_index: int
    start_s: float
    gain_db: float
    target_snr_db: float
    realized_snr_db: float
    truncated: bool


@dataclass
class SceneInstance:
    mixture: AudioClip
    annotations: list[EventAnnotation]
    placements: list[Placement]
    normalization_factor: float = 1.0


def sample_event_times(rate_per_hour: float, duration_s: float, rng) -> np.ndarray:
    """Onsets of a homogeneous Poisson process, sorted ascending.

    The count is Poisson(rate * duration / 3600) and onsets are i.i.d.
    uniform on [0, duration).
    """
    if rate_per_hour < 0:
        raise ValueError("rate must be nonnegative")
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    count = int(rng.poisson(rate_per_hour * duration_s / 3600.0))
    return np.sort(rng.uniform(0.0, duration_s, count))


def compute_event_gain(
    event: AudioClip, background: AudioClip, start_s: float, target_snr_db: float
) -> float:
    """Gain (dB) that sets the event/background in-span power ratio to the target.

    Powers are mean squares over the event's span within the background,
    truncated at the background end.
    """
    if event.sample_rate_hz != background.sample_rate_hz:
        raise ConfigurationError("event and background sample rates differ")
    fs = background.sample_rate_hz
    start = int(start_s * fs)
    if start < 0 or start >= len(background.samples):
        raise ValueError("event start lies outside the background")
    span = min(len(event.samples), len(background.samples) - start)
    event_power = float(np.mean(event.samples[:span] ** 2))
    if event_power <= 0.0:
        raise ValueError("event span has zero power")
    background_power = float(np.mean(background.samples[start : start + span] ** 2))
    if background_power <= 0.0:
        raise ValueError("background span has zero power")
    return target_snr_db + 10.0 * math.log10(background_power / event_power)


def synthesize(spec: SceneSpec) -> SceneInstance:
    """Generate one labeled scene; bit-deterministic for a given spec."""
    rng = np.random.default_rng(spec.seed)
    rates = {clip.sample_rate_hz for pool in
             (spec.background_pool, spec.gunshot_pool, spec.explosion_pool) for clip in pool}
    if len(rates) > 1:
        raise ConfigurationError(f"pools mix sample rates {sorted(rates)}")
    fs = spec.background_pool[0].sample_rate_hz
    n_samples = int(round(spec.duration_s * fs))

    bg_index = int(rng.integers(len(spec.background_pool)))
    bg_clip = spec.background_pool[bg_index]
    if len(bg_clip.samples) < n_samples:
        raise ConfigurationError(
            f"background clip of {bg_clip.duration_s:.2f} s is shorter than the scene"
        )
    max_offset = len(bg_clip.samples) - n_samples
    bg_offset = int(rng.integers(max_offset + 1)) if max_offset > 0 else 0
    background = bg_clip.samples[bg_offset : bg_offset + n_samples].copy()
    background_clip = AudioClip(background, fs)

    events = [
        ("gunshot", t)
        for t in sample_event_times(spec.gunshot_rate_per_hour, spec.duration_s, rng)
    ]
    events += [
        ("explosion", t)
        for t in sample_event_times(spec.explosion_rate_per_hour, spec.duration_s, rng)
    ]
    events.sort(key=lambda e: e[1])

    mixture = background.copy()
    placements = []
    annotations = []
    lo, hi = spec.snr_db_range
    for label, start_s in events:
        pool = spec.gunshot_pool if label == "gunshot" else spec.explosion_pool
        clip_index = int(rng.integers(len(pool)))
        event_clip = pool[clip_index]
        target_snr = float(rng.uniform(lo, hi))
        start = int(start_s * fs)
        span = min(len(event_clip.samples), n_samples - start)
        gain_db = compute_event_gain(event_clip, background_clip, start_s, target_snr)
        gain = 10.0 ** (gain_db / 20.0)
        segment = gain * event_clip.samples[:span]
        mixture[start : start + span] += segment
        realized = 10.0 * math.log10(
            float(np.mean(segment**2)) / float(np.mean(background[start : start + span] ** 2))
        )
        truncated = span < len(event_clip.samples)
        placements.append(
            Placement(
                label=label,
                clip_index=clip_index,
                start_s=start / fs,
                gain_db=gain_db,
                target_snr_db=target_snr,
                realized_snr_db=realized,
                truncated=truncated,
            )
        )
        annotations.append(
            EventAnnotation(
                onset_s=start / fs,
                offset_s=min((start + len(event_clip.samples)) / fs, spec.duration_s),
                label=label,
            )
        )

    peak = float(np.max(np.abs(mixture))) if len(mixture) else 0.0
    factor = 1.0 / peak if peak > 1.0 else 1.0
    if factor != 1.0:
        mixture *= factor
    annotations.sort(key=lambda a: a.onset_s)
    return SceneInstance(
        mixture=AudioClip(mixture, fs),
        annotations=annotations,
        placements=placements,
        normalization_factor=factor,
    )


# --- desk-scale proxy material -------------------------------------------


def pink_noise(rng, n_samples: int) -> np.ndarray:
    """Pink (1/f power) noise, unit RMS."""
    white = rng.standard_normal(n_samples)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n_samples)
    shaping = np.ones_like(freqs)
    shaping[1:] = 1.0 / np.sqrt(freqs[1:])
    shaping[0] = 0.0
    shaped = np.fft.irfft(spectrum * shaping, n=n_samples)
    return shaped / np.sqrt(np.mean(shaped**2))


def make_gunshot_proxy(rng, sample_rate_hz: int, duration_s=0.4, decay_s=0.06) -> AudioClip:
    """Broadband noise burst with a 60 ms exponential decay, peak 1."""
    n = int(duration_s * sample_rate_hz)
    t = np.arange(n) / sample_rate_hz
    burst = rng.standard_normal(n) * np.exp(-t / decay_s)
    return AudioClip(burst / np.max(np.abs(burst)), sample_rate_hz)


def make_explosion_proxy(rng, sample_rate_hz: int, duration_s=1.5, decay_s=0.3) -> AudioClip:
    """Low-frequency-weighted burst with a 300 ms decay, peak 1."""
    n = int(duration_s * sample_rate_hz)
    t = np.arange(n) / sample_rate_hz
    noise = rng.standard_normal(n)
    spectrum = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate_hz)
    emphasis = 1.0 / (1.0 + (freqs / 250.0) ** 2)  # low-frequency emphasis
    low = np.fft.irfft(spectrum * emphasis, n=n)
    burst = low * np.exp(-t / decay_s)
    return AudioClip(burst / np.max(np.abs(burst)), sample_rate_hz)


def make_background_proxy(
    rng,
    sample_rate_hz: int,
    duration_s: float,
    rms=0.02,
    drift_db=3.0,
    confusable_rate_per_hour=900.0,
) -> AudioClip:
    """Ambience stand-in: pink noise with slow level drift plus occasional
    impulsive non-event sounds (construction knocks, reversing beepers,
    door slams). The confusables jump in level like real interference but
    stay narrowband, unlike the broadband target events."""
    n = int(duration_s * sample_rate_hz)
    base = pink_noise(rng, n)
    n_knots = max(int(duration_s) + 2, 4)
    knots = rng.normal(0.0, drift_db, n_knots)
    envelope_db = np.interp(np.linspace(0, n_knots - 1, n), np.arange(n_knots), knots)
    samples = rms * base * 10.0 ** (envelope_db / 20.0)
    for onset_s in sample_event_times(confusable_rate_per_hour, duration_s, rng):
        f0 = float(rng.uniform(400.0, 2500.0))
        length_s = float(rng.uniform(0.08, 0.25))
        snr_db = float(rng.uniform(6.0, 16.0))
        start = int(onset_s * sample_rate_hz)
        span = min(int(length_s * sample_rate_hz), n - start)
        if span <= 1:
            continue
        t = np.arange(span) / sample_rate_hz
        phase = float(rng.uniform(0.0, 2 * np.pi))
        tone = np.sin(2 * np.pi * f0 * t + phase) * np.exp(-t / (length_s / 3.0))
        span_power = float(np.mean(samples[start : start + span] ** 2))
        tone *= np.sqrt(span_power * 10.0 ** (snr_db / 10.0) / np.mean(tone**2))
        samples[start : start + span] += tone
    return AudioClip(np.clip(samples, -1.0, 1.0), sample_rate_hz)


def build_proxy_pools(
    seed: int,
    sample_rate_hz: int,
    n_backgrounds=8,
    n_gunshots=8,
    n_explosions=4,
    background_duration_s=DEFAULT_DURATION_S,
):
    """Fabricate (background, gunshot, explosion) pools for desk-scale runs."""
    rng = np.random.default_rng(seed)
    backgrounds = [
        make_background_proxy(rng, sample_rate_hz, background_duration_s)
        for _ in range(n_backgrounds)
    ]
    gunshots = [make_gunshot_proxy(rng, sample_rate_hz) for _ in range(n_gunshots)]
    explosions = [make_explosion_proxy(rng, sample_rate_hz) for _ in range(n_explosions)]
    return backgrounds, gunshots, explosions
