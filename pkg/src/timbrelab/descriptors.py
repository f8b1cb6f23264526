"""STFT-based acoustic descriptors.

Frames: 2048-sample Hann window, 512-sample hop, magnitude spectrum,
incomplete tail dropped. Per-frame descriptors are aggregated by the
mean across frames; frames that are degenerate for a given descriptor
(digital silence, zero spectral spread, no harmonic peaks) are excluded
from that descriptor's mean instead of contributing sentinels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigurationError
from .synth import AudioBuffer, F0_HZ

WINDOW_SIZE = 2048
HOP_SIZE = 512
ROLLOFF_FRACTION = 0.85
PEAK_THRESHOLD = 0.005       # spectral-complexity peaks, relative to frame max
HARMONIC_TOLERANCE = 0.20    # harmonic search half-band, fraction of h*f0
ODD_EVEN_CAP = 1e10
ATTACK_FLOOR_S = 1e-3
ATTACK_LOW, ATTACK_HIGH = 0.2, 0.9

#: Canonical descriptor names, Table-order first, then pre-filter candidates.
DESCRIPTOR_NAMES = [
    "spectral_complexity",
    "spectral_flux",
    "log_attack_time",
    "tristimulus_3",
    "spectral_decrease",
    "tristimulus_2",
    "spectral_kurtosis",
    "odd_even_ratio",
    "spectral_centroid",
    "spectral_rolloff",
]


@dataclass
class Spectrogram:
    magnitudes: np.ndarray   # (n_frames, n_bins)
    bin_freqs: np.ndarray    # Hz per bin
    frame_times: np.ndarray  # window-center times, seconds
    window_size: int = WINDOW_SIZE
    hop: int = HOP_SIZE


@dataclass
class DescriptorVector:
    spectral_complexity: float
    spectral_flux: float
    log_attack_time: float
    tristimulus_3: float
    spectral_decrease: float
    tristimulus_2: float
    spectral_kurtosis: float
    odd_even_ratio: float
    spectral_centroid: float
    spectral_rolloff: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def stft(buffer: AudioBuffer, window_size: int = WINDOW_SIZE, hop: int = HOP_SIZE) -> Spectrogram:
    x = buffer.samples
    if len(x) < window_size:
        raise ConfigurationError(
            f"buffer of {len(x)} samples is shorter than one {window_size}-sample window")
    n_frames = (len(x) - window_size) // hop + 1
    window = np.hanning(window_size)
    starts = np.arange(n_frames) * hop
    frames = np.stack([x[s:s + window_size] * window for s in starts])
    mags = np.abs(np.fft.rfft(frames, axis=1))
    bin_freqs = np.fft.rfftfreq(window_size, d=1.0 / buffer.sample_rate)
    times = (starts + window_size / 2) / buffer.sample_rate
    return Spectrogram(mags, bin_freqs, times, window_size, hop)


def spectral_centroid(frame: np.ndarray, bin_freqs: np.ndarray) -> float:
    total = frame.sum()
    if total == 0:
        return 0.0
    return float((bin_freqs * frame).sum() / total)


def spectral_rolloff(frame: np.ndarray, bin_freqs: np.ndarray,
                     fraction: float = ROLLOFF_FRACTION) -> float:
    energy = frame.astype(np.float64) ** 2
    total = energy.sum()
    if total == 0:
        return 0.0
    k = int(np.searchsorted(np.cumsum(energy), fraction * total))
    return float(bin_freqs[min(k, len(bin_freqs) - 1)])


def spectral_flux(spec: Spectrogram) -> np.ndarray:
    """Frame-to-frame Euclidean distance of L2-normalized spectra; flux[0] = 0."""
    mags = spec.magnitudes
    if mags.shape[0] < 2:
        raise ConfigurationError("spectral flux needs at least 2 frames")
    norms = np.linalg.norm(mags, axis=1, keepdims=True)
    unit = np.divide(mags, norms, out=np.zeros_like(mags), where=norms > 0)
    flux = np.zeros(mags.shape[0])
    flux[1:] = np.linalg.norm(np.diff(unit, axis=0), axis=1)
    return flux


def spectral_kurtosis(frame: np.ndarray, bin_freqs: np.ndarray) -> float:
    """4th standardized moment of the magnitude distribution over frequency.

    Returns 0 for a degenerate frame (silent or single-bin); such frames
    are excluded from the mean aggregate.
    """
    total = frame.sum()
    if total == 0:
        return 0.0
    p = frame / total
    mu = (p * bin_freqs).sum()
    centered = bin_freqs - mu
    var = (p * centered ** 2).sum()
    if var == 0:
        return 0.0
    return float((p * centered ** 4).sum() / var ** 2)


def spectral_decrease(frame: np.ndarray) -> float:
    """Low-vs-high slope statistic over the bins above DC."""
    m = frame[1:]  # m_1 is the first bin above DC
    if len(m) < 2:
        return 0.0
    rest = m[1:]
    total = rest.sum()
    if total == 0:
        return 0.0
    k = np.arange(2, len(m) + 1)
    return float(((rest - m[0]) / (k - 1)).sum() / total)


def spectral_complexity(frame: np.ndarray, rel_threshold: float = PEAK_THRESHOLD) -> int:
    """Count of raw-bin local maxima at least rel_threshold * frame max."""
    peak = frame.max() if len(frame) else 0.0
    if peak == 0:
        return 0
    interior = frame[1:-1]
    is_max = (interior > frame[:-2]) & (interior > frame[2:])
    return int((is_max & (interior >= rel_threshold * peak)).sum())


def _interpolated_peak(frame: np.ndarray, k: int) -> tuple[float, float]:
    """Quadratic log-magnitude interpolation around bin k -> (amplitude, bin)."""
    if k <= 0 or k >= len(frame) - 1 or frame[k] <= 0:
        return float(frame[k]), float(k)
    a, b, c = frame[k - 1], frame[k], frame[k + 1]
    if a <= 0 or c <= 0:
        return float(b), float(k)
    la, lb, lc = math.log(a), math.log(b), math.log(c)
    denom = la - 2.0 * lb + lc
    if denom >= -1e-30:
        return float(b), float(k)
    delta = 0.5 * (la - lc) / denom
    delta = max(-0.5, min(0.5, delta))
    return math.exp(lb - 0.25 * (la - lc) * delta), k + delta


def harmonic_amplitudes(frame: np.ndarray, bin_freqs: np.ndarray,
                        f0: float = F0_HZ) -> np.ndarray:
    """Amplitude of the strongest spectral peak near each harmonic of f0.

    The search band is +-20% of h*f0, capped at f0/2 so bands never
    overlap; a harmonic with no local maximum in its band gets 0.
    """
    if f0 <= 0:
        raise ConfigurationError("f0 must be positive")
    nyquist = bin_freqs[-1]
    n_harmonics = int(nyquist // f0)
    left = frame[:-2]
    mid = frame[1:-1]
    right = frame[2:]
    is_peak = np.zeros(len(frame), dtype=bool)
    is_peak[1:-1] = ((mid > left) & (mid >= right)) | ((mid >= left) & (mid > right))
    amps = np.zeros(n_harmonics)
    for h in range(1, n_harmonics + 1):
        half_band = min(HARMONIC_TOLERANCE * h * f0, f0 / 2)
        in_band = (bin_freqs >= h * f0 - half_band) & (bin_freqs <= h * f0 + half_band)
        candidates = np.flatnonzero(in_band & is_peak)
        if len(candidates) == 0:
            continue
        best = candidates[np.argmax(frame[candidates])]
        amps[h - 1], _ = _interpolated_peak(frame, int(best))
    return amps


def tristimulus(amps: np.ndarray) -> tuple[float, float]:
    """Energy shares of harmonics 2-4 (T2) and 5+ (T3)."""
    total = amps.sum()
    if total == 0:
        return 0.0, 0.0
    t2 = amps[1:4].sum() / total
    t3 = amps[4:].sum() / total
    return float(t2), float(t3)


def odd_even_ratio(amps: np.ndarray, mode: str = "energy") -> float:
    """Odd-harmonic over even-harmonic energy (or amplitude) ratio."""
    values = amps ** 2 if mode == "energy" else amps
    odd = values[0::2].sum()
    even = values[1::2].sum()
    if even == 0:
        return 1.0 if odd == 0 else ODD_EVEN_CAP
    return float(min(odd / even, ODD_EVEN_CAP))


def rms_envelope(buffer: AudioBuffer, window_size: int = WINDOW_SIZE,
                 hop: int = HOP_SIZE) -> tuple[np.ndarray, np.ndarray]:
    x = buffer.samples
    if len(x) < window_size:
        raise ConfigurationError("buffer shorter than one analysis window")
    n_frames = (len(x) - window_size) // hop + 1
    starts = np.arange(n_frames) * hop
    values = np.array([math.sqrt(np.mean(x[s:s + window_size] ** 2)) for s in starts])
    times = (starts + window_size / 2) / buffer.sample_rate
    return times, values


def _first_upward_crossing(times, values, threshold, from_time):
    """Earliest t >= from_time with env(t) >= threshold, linear between frames."""
    env_at = lambda t: float(np.interp(t, times, values))
    if from_time is not None and env_at(from_time) >= threshold:
        return from_time
    for i in range(len(values) - 1):
        if times[i + 1] < from_time:
            continue
        v0, v1 = values[i], values[i + 1]
        if v1 >= threshold > v0:
            t = times[i] + (threshold - v0) / (v1 - v0) * (times[i + 1] - times[i])
            if t >= from_time:
                return t
    return None


def log_attack_time(buffer: AudioBuffer) -> float:
    """log10 of the time the RMS envelope takes to rise from 20% to 90% of max."""
    times, env = rms_envelope(buffer)
    peak = env.max()
    if peak == 0:
        raise ConfigurationError("log attack time is undefined for silence")
    t_start = _first_upward_crossing(times, env, ATTACK_LOW * peak, times[0])
    t_stop = _first_upward_crossing(times, env, ATTACK_HIGH * peak, t_start)
    return math.log10(max(t_stop - t_start, ATTACK_FLOOR_S))


def extract(buffer: AudioBuffer, f0: float = F0_HZ, *,
            flux_normalized: bool = True, odd_even_mode: str = "energy") -> DescriptorVector:
    """All descriptors for one stimulus, per-frame values averaged over frames."""
    spec = stft(buffer)
    mags = spec.magnitudes
    freqs = spec.bin_freqs
    n_frames = mags.shape[0]
    live = mags.sum(axis=1) > 0

    if flux_normalized:
        flux = spectral_flux(spec)
    else:
        flux = np.zeros(n_frames)
        flux[1:] = np.linalg.norm(np.diff(mags, axis=0), axis=1)

    centroid = np.array([spectral_centroid(m, freqs) for m in mags])
    rolloff = np.array([spectral_rolloff(m, freqs) for m in mags])
    decrease = np.array([spectral_decrease(m) for m in mags])
    complexity = np.array([spectral_complexity(m) for m in mags], dtype=float)
    kurtosis = np.array([spectral_kurtosis(m, freqs) for m in mags])
    kurtosis_ok = live.copy()
    for i in np.flatnonzero(live):
        p = mags[i] / mags[i].sum()
        mu = (p * freqs).sum()
        kurtosis_ok[i] = (p * (freqs - mu) ** 2).sum() > 0

    t2 = np.zeros(n_frames)
    t3 = np.zeros(n_frames)
    oer = np.zeros(n_frames)
    harmonic_ok = np.zeros(n_frames, dtype=bool)
    for i in range(n_frames):
        amps = harmonic_amplitudes(mags[i], freqs, f0)
        if amps.sum() > 0:
            harmonic_ok[i] = True
            t2[i], t3[i] = tristimulus(amps)
            oer[i] = odd_even_ratio(amps, odd_even_mode)

    def masked_mean(values, mask):
        return float(values[mask].mean()) if mask.any() else 0.0

    return DescriptorVector(
        spectral_complexity=masked_mean(complexity, live),
        spectral_flux=float(flux.mean()),
        log_attack_time=log_attack_time(buffer),
        tristimulus_3=masked_mean(t3, harmonic_ok),
        spectral_decrease=masked_mean(decrease, live),
        tristimulus_2=masked_mean(t2, harmonic_ok),
        spectral_kurtosis=masked_mean(kurtosis, kurtosis_ok),
        odd_even_ratio=masked_mean(oer, harmonic_ok),
        spectral_centroid=masked_mean(centroid, live),
        spectral_rolloff=masked_mean(rolloff, live),
    )
