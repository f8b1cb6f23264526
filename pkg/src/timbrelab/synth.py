"""Offline subtractive synthesizer.

Signal chain: bandlimited oscillator (optional phase modulation) ->
resonant state-variable lowpass with envelope-driven cutoff -> ADSR
master gain -> A-weighted RMS loudness normalization.

All operations are pure functions of their inputs; rendering the same
patch twice produces bit-identical buffers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

SAMPLE_RATE = 44100
F0_HZ = 440.0
DURATION_MS = 1000
TARGET_LEVEL_DB = -20.0  # A-weighted RMS normalization target, dBFS
MIN_CUTOFF_HZ = 20.0     # filter floor, keeps the SVF well-conditioned


@dataclass(frozen=True)
class AdsrEnvelope:
    """Linear attack-decay-sustain-release envelope, all times in seconds."""

    attack_s: float
    decay_s: float
    sustain_level: float
    release_s: float

    def validate(self, duration_s: float) -> None:
        for name in ("attack_s", "decay_s", "release_s"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.sustain_level <= 1.0:
            raise ConfigurationError(f"sustain_level must be in [0,1], got {self.sustain_level}")
        total = self.attack_s + self.decay_s + self.release_s
        if total > duration_s + 1e-12:
            raise ConfigurationError(
                f"envelope segments ({total:.4f}s) exceed note duration ({duration_s:.4f}s)")


@dataclass(frozen=True)
class FmSettings:
    """Harmonic phase modulation: modulator at ratio_k * f0, index in radians."""

    ratio_k: int
    index_i: float

    def validate(self) -> None:
        if not isinstance(self.ratio_k, int) or self.ratio_k < 1:
            raise ConfigurationError(f"fm ratio_k must be a positive integer, got {self.ratio_k!r}")
        if self.index_i < 0:
            raise ConfigurationError(f"fm index_i must be >= 0, got {self.index_i}")


@dataclass(frozen=True)
class FilterSettings:
    cutoff_floor_hz: float
    cutoff_peak_hz: float
    resonance_q: float
    cutoff_env: AdsrEnvelope

    def validate(self, sample_rate: int, duration_s: float) -> None:
        if not 0.0 <= self.cutoff_floor_hz <= self.cutoff_peak_hz <= sample_rate / 2:
            raise ConfigurationError(
                f"need 0 <= cutoff_floor ({self.cutoff_floor_hz}) <= cutoff_peak "
                f"({self.cutoff_peak_hz}) <= Nyquist ({sample_rate / 2})")
        if self.resonance_q <= 0:
            raise ConfigurationError(f"resonance_q must be > 0, got {self.resonance_q}")
        self.cutoff_env.validate(duration_s)


@dataclass(frozen=True)
class Patch:
    """Full parameterization of one stimulus."""

    id: str
    oscillator: str  # "sawtooth" or "pulse"
    filter: FilterSettings
    gain_env: AdsrEnvelope
    pulse_duty: float = 0.5          # used by the pulse oscillator only
    f0_hz: float = F0_HZ
    fm: FmSettings | None = None
    duration_ms: int = DURATION_MS

    @property
    def duration_s(self) -> float:
        return self.duration_ms / 1000.0

    def validate(self, sample_rate: int = SAMPLE_RATE) -> None:
        if self.oscillator not in ("sawtooth", "pulse"):
            raise ConfigurationError(f"unknown oscillator {self.oscillator!r}")
        if self.oscillator == "pulse" and not 0.0 < self.pulse_duty < 1.0:
            raise ConfigurationError(f"pulse duty must be in (0,1), got {self.pulse_duty}")
        if self.f0_hz != F0_HZ:
            raise ConfigurationError(f"f0 is fixed at {F0_HZ} Hz, got {self.f0_hz}")
        if self.duration_ms != DURATION_MS:
            raise ConfigurationError(f"duration is fixed at {DURATION_MS} ms, got {self.duration_ms}")
        if self.fm is not None:
            self.fm.validate()
        self.filter.validate(sample_rate, self.duration_s)
        self.gain_env.validate(self.duration_s)


@dataclass
class AudioBuffer:
    """Mono sampled signal."""

    sample_rate: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.samples)


def adsr_curve(env: AdsrEnvelope, times: np.ndarray, duration_s: float) -> np.ndarray:
    """Evaluate the envelope at an array of times in [0, duration]."""
    env.validate(duration_s)
    t = np.asarray(times, dtype=np.float64)
    if t.size and (t.min() < -1e-12 or t.max() > duration_s + 1e-12):
        raise ConfigurationError("envelope evaluated outside [0, duration]")
    a, d, s, r = env.attack_s, env.decay_s, env.sustain_level, env.release_s
    out = np.full(t.shape, s, dtype=np.float64)
    release_start = duration_s - r
    if r > 0:
        m = t >= release_start
        out[m] = s * (duration_s - t[m]) / r
    else:
        out[t >= duration_s] = 0.0
    if d > 0:
        # zero attack is covered here too: the ramp starts at 1.0 at t = 0
        m = (t >= a) & (t <= a + d) & (t <= release_start)
        out[m] = 1.0 + (s - 1.0) * (t[m] - a) / d
    if a > 0:
        m = t <= a
        out[m] = t[m] / a
    return out


def adsr_value(env: AdsrEnvelope, t: float, duration_s: float) -> float:
    """Envelope level in [0,1] at time t."""
    return float(adsr_curve(env, np.array([t]), duration_s)[0])


def _oscillator_phase(patch: Patch, n_samples: int, sample_rate: int) -> tuple[np.ndarray, int]:
    """Instantaneous phase and the alias-free harmonic count.

    Phase modulation spreads harmonic h into sidebands at h*f0 +- m*k*f0
    with Bessel weights J_m(h*I); a harmonic is kept only if its Carson
    bandwidth plus the Bessel transition tail (where the weights decay
    through -60 dB) stays below Nyquist.
    """
    t = np.arange(n_samples, dtype=np.float64) / sample_rate
    phi = 2.0 * math.pi * patch.f0_hz * t
    nyquist = sample_rate / 2
    if patch.fm is not None and patch.fm.index_i > 0:
        k, index = patch.fm.ratio_k, patch.fm.index_i
        phi = phi + index * np.sin(2.0 * math.pi * k * patch.f0_hz * t)

        def extent(h: int) -> float:
            beta = h * index
            margin = 2 + math.ceil(3.0 * beta ** (1.0 / 3.0))
            return h * patch.f0_hz + (beta + margin) * k * patch.f0_hz

        n_harmonics = 0
        while extent(n_harmonics + 1) <= nyquist:
            n_harmonics += 1
    else:
        n_harmonics = int(math.floor(nyquist / patch.f0_hz))
    if n_harmonics < 1:
        raise ConfigurationError("modulation pushes the fundamental above Nyquist")
    return phi, n_harmonics


def alias_free_harmonics(patch: Patch, sample_rate: int = SAMPLE_RATE) -> int:
    """Number of harmonics the oscillator keeps at this sample rate."""
    _, n_harmonics = _oscillator_phase(patch, 0, sample_rate)
    return n_harmonics


def render_source(patch: Patch, sample_rate: int = SAMPLE_RATE,
                  harmonic_cap: int | None = None) -> AudioBuffer:
    """Bandlimited oscillator render (no filter, no gain, no normalization).

    The waveform is an additive Fourier-series evaluation at the modulated
    phase: saw uses sin(h*phi)/h, pulse of duty d uses sin(pi*h*d)*cos(h*phi)/h
    with the per-render DC removed. harmonic_cap further truncates the
    series (oversampled anti-aliasing comparisons render the same series
    at a higher rate).
    """
    patch.validate(sample_rate)
    n = round(sample_rate * patch.duration_s)
    phi, n_harmonics = _oscillator_phase(patch, n, sample_rate)
    if harmonic_cap is not None:
        n_harmonics = min(n_harmonics, harmonic_cap)
    x = np.zeros(n, dtype=np.float64)
    if patch.oscillator == "sawtooth":
        for h in range(1, n_harmonics + 1):
            x += np.sin(h * phi) / h
        x *= 2.0 / math.pi
    else:
        d = patch.pulse_duty
        for h in range(1, n_harmonics + 1):
            x += math.sin(math.pi * h * d) * np.cos(h * phi) / h
        x *= 4.0 / math.pi
        x -= x.mean()
    return AudioBuffer(sample_rate, x)


def svf_lowpass(buffer: AudioBuffer, cutoff_series: np.ndarray, q: float) -> AudioBuffer:
    """Chamberlin state-variable lowpass with per-sample cutoff.

    Coefficients are recomputed every sample from cutoff_series. Cutoffs
    are clamped to sample_rate/6, above which the topology loses stability.
    Unity gain at DC.
    """
    cutoff = np.asarray(cutoff_series, dtype=np.float64)
    if cutoff.shape != buffer.samples.shape:
        raise ConfigurationError("cutoff_series must have one value per sample")
    if q <= 0:
        raise ConfigurationError(f"q must be > 0, got {q}")
    sr = buffer.sample_rate
    if cutoff.size and (cutoff.min() <= 0 or cutoff.max() >= sr / 2):
        raise ConfigurationError("cutoff values must lie in (0, Nyquist)")
    f_series = 2.0 * np.sin(math.pi * np.minimum(cutoff, sr / 6.0) / sr)
    damp = 1.0 / q
    out = np.empty_like(buffer.samples)
    low = 0.0
    band = 0.0
    xs = buffer.samples.tolist()
    fs = f_series.tolist()
    for i, (x, f) in enumerate(zip(xs, fs)):
        low += f * band
        high = x - low - damp * band
        band += f * high
        out[i] = low
    return AudioBuffer(sr, out)


def a_weighting_db(f):
    """Standard A-weighting gain in dB at frequency f (Hz); 0 dB at 1 kHz."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0):
        raise ConfigurationError("A-weighting is defined for f > 0 only")
    f2 = f * f
    ra = (12194.0 ** 2 * f2 * f2) / (
        (f2 + 20.6 ** 2)
        * np.sqrt((f2 + 107.7 ** 2) * (f2 + 737.9 ** 2))
        * (f2 + 12194.0 ** 2)
    )
    out = 20.0 * np.log10(ra) + 2.00
    return float(out) if out.ndim == 0 else out


def a_weighted_rms(buffer: AudioBuffer) -> float:
    """A-weighted RMS level (linear) of the whole buffer, via Parseval.

    The magnitude spectrum of the full buffer is scaled per bin by the
    linear A-weighting gain; the DC bin gets zero weight (the curve falls
    to -inf as f -> 0).
    """
    x = buffer.samples
    n = len(x)
    if n == 0:
        raise ConfigurationError("empty buffer")
    spectrum = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(n, d=1.0 / buffer.sample_rate)
    weights = np.zeros_like(freqs)
    positive = freqs > 0
    weights[positive] = 10.0 ** (a_weighting_db(freqs[positive]) / 20.0)
    weighted = spectrum * weights
    # Parseval for the real FFT: interior bins appear twice in the full DFT
    sq = weighted ** 2
    total = sq[0] + 2.0 * sq[1:-1].sum() + sq[-1] if n % 2 == 0 else sq[0] + 2.0 * sq[1:].sum()
    return math.sqrt(total / n ** 2)


def render_patch(patch: Patch, sample_rate: int = SAMPLE_RATE) -> AudioBuffer:
    """Render the full chain and normalize to the target A-weighted level.

    If normalization would push the peak past full scale, the gain is
    reduced to keep |sample| <= 1 (the achieved level then falls short of
    the target; callers can measure it with a_weighted_rms).
    """
    patch.validate(sample_rate)
    src = render_source(patch, sample_rate)
    n = len(src)
    t = np.arange(n, dtype=np.float64) / sample_rate
    flt = patch.filter
    cutoff = flt.cutoff_floor_hz + (flt.cutoff_peak_hz - flt.cutoff_floor_hz) * adsr_curve(
        flt.cutoff_env, t, patch.duration_s)
    cutoff = np.clip(cutoff, MIN_CUTOFF_HZ, sample_rate / 6.0)
    filtered = svf_lowpass(src, cutoff, flt.resonance_q)
    shaped = filtered.samples * adsr_curve(patch.gain_env, t, patch.duration_s)
    level = a_weighted_rms(AudioBuffer(sample_rate, shaped))
    if level == 0.0:
        raise ConfigurationError(f"patch {patch.id!r} renders to silence")
    scale = 10.0 ** (TARGET_LEVEL_DB / 20.0) / level
    peak = np.abs(shaped).max()
    if peak * scale > 1.0:
        scale = 1.0 / peak
    return AudioBuffer(sample_rate, shaped * scale)
