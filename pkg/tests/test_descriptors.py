import math

import numpy as np
import pytest

from timbrelab.descriptors import (DESCRIPTOR_NAMES, HOP_SIZE, WINDOW_SIZE,
                                   extract, harmonic_amplitudes, log_attack_time,
                                   odd_even_ratio, rms_envelope, spectral_centroid,
                                   spectral_complexity, spectral_decrease,
                                   spectral_flux, spectral_kurtosis,
                                   spectral_rolloff, stft, tristimulus)
from timbrelab.errors import ConfigurationError
from timbrelab.synth import (AdsrEnvelope, AudioBuffer, FilterSettings, Patch,
                             SAMPLE_RATE, render_patch, render_source)

BIN_FREQS = np.fft.rfftfreq(WINDOW_SIZE, d=1.0 / SAMPLE_RATE)
FLAT_ENV = AdsrEnvelope(0.0, 0.0, 1.0, 0.0)


def saw_patch(cutoff=6000.0, cutoff_env=FLAT_ENV, cutoff_floor=None,
              gain_env=AdsrEnvelope(0.01, 0.2, 0.8, 0.1)):
    floor = cutoff if cutoff_floor is None else cutoff_floor
    return Patch(id="t", oscillator="sawtooth",
                 filter=FilterSettings(floor, cutoff, 0.9, cutoff_env),
                 gain_env=gain_env)


# ---------------------------------------------------------------- oracles

def oracle_centroid(frame, freqs):
    num = den = 0.0
    for f, m in zip(freqs, frame):
        num += f * m
        den += m
    return num / den if den else 0.0


def oracle_rolloff(frame, freqs, fraction=0.85):
    total = sum(m * m for m in frame)
    if total == 0:
        return 0.0
    cum = 0.0
    for f, m in zip(freqs, frame):
        cum += m * m
        if cum >= fraction * total:
            return f
    return freqs[-1]


def oracle_kurtosis(frame, freqs):
    total = sum(frame)
    p = [m / total for m in frame]
    mu = sum(pi * f for pi, f in zip(p, freqs))
    var = sum(pi * (f - mu) ** 2 for pi, f in zip(p, freqs))
    m4 = sum(pi * (f - mu) ** 4 for pi, f in zip(p, freqs))
    return m4 / var ** 2


def oracle_decrease(frame):
    m = list(frame[1:])
    num = sum((m[k] - m[0]) / k for k in range(1, len(m)))
    den = sum(m[1:])
    return num / den if den else 0.0


def oracle_complexity(frame, threshold=0.005):
    peak = max(frame)
    count = 0
    for k in range(1, len(frame) - 1):
        if frame[k] > frame[k - 1] and frame[k] > frame[k + 1] and frame[k] >= threshold * peak:
            count += 1
    return count


def oracle_flux(a, b):
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    ua = [x / na if na else 0.0 for x in a]
    ub = [x / nb if nb else 0.0 for x in b]
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(ua, ub)))


def oracle_tristimulus(amps):
    total = sum(amps)
    return sum(amps[1:4]) / total, sum(amps[4:]) / total


def oracle_odd_even(amps):
    odd = sum(a * a for a in amps[0::2])
    even = sum(a * a for a in amps[1::2])
    return odd / even


# ---------------------------------------------------------------- stft

class TestStft:
    def test_one_second_buffer_has_83_frames(self, sine_440):
        spec = stft(sine_440)
        assert spec.magnitudes.shape == (83, WINDOW_SIZE // 2 + 1)

    def test_sine_peaks_at_bin_20(self, sine_440):
        spec = stft(sine_440)
        assert np.all(spec.magnitudes.argmax(axis=1) == 20)
        assert spec.bin_freqs[20] == pytest.approx(430.66, abs=0.01)

    def test_silence_is_all_zero(self):
        spec = stft(AudioBuffer(SAMPLE_RATE, np.zeros(4096)))
        assert np.all(spec.magnitudes == 0.0)

    def test_short_buffer_rejected(self):
        with pytest.raises(ConfigurationError):
            stft(AudioBuffer(SAMPLE_RATE, np.zeros(WINDOW_SIZE - 1)))


# ------------------------------------------------------- frame descriptors

class TestCentroid:
    def test_point_mass(self):
        frame = np.zeros(len(BIN_FREQS))
        frame[20] = 3.0
        assert spectral_centroid(frame, BIN_FREQS) == pytest.approx(BIN_FREQS[20])

    def test_symmetric_masses(self):
        freqs = np.array([100.0, 300.0])
        assert spectral_centroid(np.array([1.0, 1.0]), freqs) == pytest.approx(200.0)

    def test_zero_frame(self):
        assert spectral_centroid(np.zeros(8), BIN_FREQS[:8]) == 0.0

    def test_lowpass_reduces_centroid(self):
        bright = extract(render_patch(saw_patch(cutoff=6000.0)))
        dark = extract(render_patch(saw_patch(cutoff=500.0)))
        assert dark.spectral_centroid < bright.spectral_centroid


class TestRolloff:
    def test_single_bin(self):
        frame = np.zeros(32)
        frame[7] = 2.0
        assert spectral_rolloff(frame, BIN_FREQS[:32]) == BIN_FREQS[7]

    def test_two_equal_bins_need_both(self):
        freqs = np.array([100.0, 1000.0])
        assert spectral_rolloff(np.array([1.0, 1.0]), freqs) == 1000.0

    @pytest.mark.parametrize("k", [7, 20, 40, 100])
    def test_flat_spectrum(self, k):
        frame = np.ones(k)
        freqs = BIN_FREQS[:k]
        expected = freqs[math.ceil(0.85 * k) - 1]
        assert spectral_rolloff(frame, freqs) == expected


class TestFlux:
    def test_identical_frames(self):
        spec = stft(AudioBuffer(SAMPLE_RATE, np.zeros(WINDOW_SIZE + HOP_SIZE)))
        spec.magnitudes = np.tile(np.array([0.0, 2.0, 1.0, 0.5]), (3, 1))
        assert np.all(spectral_flux(spec) == 0.0)

    def test_steady_tone_has_tiny_flux(self, sine_440):
        flux = spectral_flux(stft(sine_440))
        assert flux[0] == 0.0
        assert np.all(flux[1:] < 1e-3)

    def test_orthogonal_frames(self):
        spec = stft(AudioBuffer(SAMPLE_RATE, np.zeros(WINDOW_SIZE + HOP_SIZE)))
        spec.magnitudes = np.zeros((2, 8))
        spec.magnitudes[0, 1] = 5.0
        spec.magnitudes[1, 4] = 2.0
        assert spectral_flux(spec)[1] == pytest.approx(math.sqrt(2))

    def test_sweep_has_more_flux_than_static(self):
        static = extract(render_patch(saw_patch(cutoff=6000.0)))
        sweep = extract(render_patch(saw_patch(
            cutoff=6000.0, cutoff_floor=100.0,
            cutoff_env=AdsrEnvelope(0.5, 0.2, 0.6, 0.1))))
        assert static.spectral_flux < 0.05
        assert sweep.spectral_flux > static.spectral_flux


class TestKurtosis:
    def test_two_point_masses(self):
        frame = np.zeros(64)
        frame[10] = frame[50] = 1.0
        assert spectral_kurtosis(frame, BIN_FREQS[:64]) == pytest.approx(1.0, abs=1e-9)

    def test_gaussian_bump(self):
        freqs = BIN_FREQS[:801]
        frame = np.exp(-0.5 * ((freqs - freqs[400]) / (40 * (freqs[1] - freqs[0]))) ** 2)
        value = spectral_kurtosis(frame, freqs)
        assert value == pytest.approx(3.0, abs=0.1)
        assert value == pytest.approx(oracle_kurtosis(frame.tolist(), freqs.tolist()), rel=1e-9)

    def test_uniform_band(self):
        frame = np.zeros(512)
        frame[100:150] = 1.0
        assert spectral_kurtosis(frame, BIN_FREQS[:512]) == pytest.approx(1.8, abs=0.05)

    def test_degenerate_single_bin(self):
        frame = np.zeros(16)
        frame[3] = 1.0
        assert spectral_kurtosis(frame, BIN_FREQS[:16]) == 0.0


class TestDecrease:
    def test_flat_frame(self):
        assert spectral_decrease(np.ones(100)) == pytest.approx(0.0, abs=1e-12)

    def test_mass_at_second_bin(self):
        frame = np.zeros(16)
        frame[2] = 1.0  # m_1 = 0, m_2 = 1
        assert spectral_decrease(frame) == pytest.approx(1.0)

    def test_one_over_k_profile(self):
        m = 1.0 / np.arange(1, 65)
        frame = np.concatenate([[0.0], m])  # DC then m_1..m_64
        assert spectral_decrease(frame) == pytest.approx(oracle_decrease(frame.tolist()),
                                                         rel=1e-12)


class TestComplexity:
    def test_single_sinusoid(self, sine_440):
        spec = stft(sine_440)
        assert spectral_complexity(spec.magnitudes[0]) >= 1

    def test_silence(self):
        assert spectral_complexity(np.zeros(64)) == 0

    def test_ten_harmonics_synthetic_spectrum(self):
        frame = np.zeros(1025)
        for h in range(1, 11):
            frame[h * 30] = 1.0 / h
        assert spectral_complexity(frame) == 10


class TestHarmonics:
    def test_sine_has_only_the_fundamental(self, sine_440):
        spec = stft(sine_440)
        amps = harmonic_amplitudes(spec.magnitudes[10], spec.bin_freqs)
        assert len(amps) == 50
        assert amps[0] > 0
        assert np.all(amps[1:] <= amps[0] * 10 ** (-50 / 20))

    def test_square_even_harmonics_vanish(self):
        patch = Patch(id="sq", oscillator="pulse", pulse_duty=0.5,
                      filter=FilterSettings(6000.0, 6000.0, 0.9, FLAT_ENV),
                      gain_env=AdsrEnvelope(0.01, 0.2, 0.8, 0.1))
        spec = stft(render_source(patch))
        amps = harmonic_amplitudes(spec.magnitudes[40], spec.bin_freqs)
        assert (amps[1] / amps[0]) ** 2 <= 1e-4

    def test_saw_amplitudes_follow_one_over_h(self):
        spec = stft(render_source(saw_patch()))
        amps = harmonic_amplitudes(spec.magnitudes[40], spec.bin_freqs)
        for h in range(1, 11):
            expected = amps[0] / h
            assert abs(20 * math.log10(amps[h - 1] / expected)) <= 1.0


class TestTristimulus:
    def test_equal_five_harmonics(self):
        t2, t3 = tristimulus(np.ones(5))
        assert (t2, t3) == (pytest.approx(0.6), pytest.approx(0.2))

    def test_fundamental_only(self):
        amps = np.zeros(10)
        amps[0] = 1.0
        assert tristimulus(amps) == (0.0, 0.0)

    def test_saw_series_matches_partial_sums(self):
        amps = 1.0 / np.arange(1, 51)
        t2, t3 = tristimulus(amps)
        o2, o3 = oracle_tristimulus(amps.tolist())
        assert t2 == pytest.approx(o2, rel=1e-12)
        assert t3 == pytest.approx(o3, rel=1e-12)


class TestOddEven:
    def test_two_equal_harmonics(self):
        assert odd_even_ratio(np.array([1.0, 1.0])) == 1.0

    def test_odd_only_is_capped(self):
        amps = np.array([1.0, 0.0, 1 / 3, 0.0, 1 / 5])
        assert odd_even_ratio(amps) == 1e10

    def test_one_over_h_four_harmonics(self):
        amps = 1.0 / np.arange(1, 5)
        expected = (1 + 1 / 9) / (1 / 4 + 1 / 16)
        assert odd_even_ratio(amps) == pytest.approx(expected, rel=1e-12)

    def test_amplitude_mode(self):
        amps = 1.0 / np.arange(1, 5)
        expected = (1 + 1 / 3) / (1 / 2 + 1 / 4)
        assert odd_even_ratio(amps, mode="amplitude") == pytest.approx(expected, rel=1e-12)


class TestLogAttackTime:
    def test_linear_ramp(self):
        # amplitude ramp 0 -> 1 over 0.5 s, then hold: 20%-90% spans 0.35 s
        t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
        ramp = np.minimum(t / 0.5, 1.0)
        buf = AudioBuffer(SAMPLE_RATE, ramp * np.sin(2 * np.pi * 1000 * t))
        assert log_attack_time(buf) == pytest.approx(math.log10(0.35), abs=0.02)

    def test_step_onset_hits_the_floor(self):
        t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
        buf = AudioBuffer(SAMPLE_RATE, np.sin(2 * np.pi * 1000 * t))
        assert log_attack_time(buf) == -3.0

    def test_slow_filter_attack_increases_lat(self, rendered_bank):
        assert (log_attack_time(rendered_bank["s02"])
                > log_attack_time(rendered_bank["s03"]))

    def test_silence_rejected(self):
        with pytest.raises(ConfigurationError):
            log_attack_time(AudioBuffer(SAMPLE_RATE, np.zeros(SAMPLE_RATE)))


# ---------------------------------------------------------------- extract

class TestExtract:
    def test_silence_is_an_error(self):
        with pytest.raises(ConfigurationError):
            extract(AudioBuffer(SAMPLE_RATE, np.zeros(SAMPLE_RATE)))

    def test_bank_stimulus_fields_finite(self, rendered_bank):
        vector = extract(rendered_bank["s05"])
        values = vector.as_dict()
        assert list(values) == DESCRIPTOR_NAMES
        assert all(np.isfinite(v) for v in values.values())
        assert vector.tristimulus_2 + vector.tristimulus_3 <= 1.0 + 1e-9

    def test_tristimulus_partition_of_unity(self, rendered_bank):
        spec = stft(rendered_bank["s05"])
        for frame in spec.magnitudes[:20]:
            amps = harmonic_amplitudes(frame, spec.bin_freqs)
            total = amps.sum()
            if total == 0:
                continue
            t2, t3 = tristimulus(amps)
            assert amps[0] / total + t2 + t3 == pytest.approx(1.0, abs=1e-9)

    def test_determinism(self, rendered_bank):
        a = extract(rendered_bank["s06"]).as_dict()
        b = extract(rendered_bank["s06"]).as_dict()
        assert a == b

    def test_scale_invariance(self, rendered_bank):
        buf = rendered_bank["s04"]
        base = extract(buf).as_dict()
        scaled = extract(AudioBuffer(buf.sample_rate, buf.samples * 0.25)).as_dict()
        for name in DESCRIPTOR_NAMES:
            if name == "spectral_complexity":
                continue  # integer count; threshold is relative so it matches anyway
            assert scaled[name] == pytest.approx(base[name], rel=1e-6), name
        assert scaled["spectral_complexity"] == base["spectral_complexity"]

    def test_centroid_bounded_by_full_rolloff(self, rendered_bank):
        spec = stft(rendered_bank["s03"])
        for frame in spec.magnitudes:
            if frame.sum() == 0:
                continue
            centroid = spectral_centroid(frame, spec.bin_freqs)
            top = spectral_rolloff(frame, spec.bin_freqs, fraction=1.0)
            assert 0 <= centroid <= top + 1e-9 <= spec.bin_freqs[-1] + 1e-9

    def test_lowpass_monotonicity_over_cutoff_grid(self):
        cutoffs = [6000.0, 3000.0, 1500.0, 800.0, 400.0]
        centroids = [extract(render_patch(saw_patch(cutoff=c))).spectral_centroid
                     for c in cutoffs]
        assert all(a >= b for a, b in zip(centroids, centroids[1:]))


class TestOracleEquivalence:
    def test_descriptors_match_direct_summation_on_random_spectra(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            n_bins = rng.integers(16, 200)
            frame = rng.uniform(0.0, 1.0, n_bins)
            if rng.random() < 0.3:
                frame[rng.random(n_bins) < 0.5] = 0.0
            if frame.sum() == 0 or (frame > 0).sum() < 3:
                frame[:3] = [0.5, 1.0, 0.7]
            freqs = BIN_FREQS[:n_bins]
            fl = frame.tolist()
            fq = freqs.tolist()
            assert spectral_centroid(frame, freqs) == pytest.approx(
                oracle_centroid(fl, fq), rel=1e-9)
            assert spectral_rolloff(frame, freqs) == pytest.approx(
                oracle_rolloff(fl, fq), rel=1e-9)
            assert spectral_decrease(frame) == pytest.approx(
                oracle_decrease(fl), rel=1e-9, abs=1e-12)
            assert spectral_complexity(frame) == oracle_complexity(fl)
            p = frame / frame.sum()
            mu = (p * freqs).sum()
            if (p * (freqs - mu) ** 2).sum() > 0:
                assert spectral_kurtosis(frame, freqs) == pytest.approx(
                    oracle_kurtosis(fl, fq), rel=1e-9)
            other = rng.uniform(0.0, 1.0, n_bins)
            spec_like = stft(AudioBuffer(SAMPLE_RATE, np.zeros(WINDOW_SIZE + HOP_SIZE)))
            spec_like.magnitudes = np.stack([frame, other])
            assert spectral_flux(spec_like)[1] == pytest.approx(
                oracle_flux(fl, other.tolist()), rel=1e-9)
            amps = rng.uniform(0.0, 1.0, 12)
            t2, t3 = tristimulus(amps)
            o2, o3 = oracle_tristimulus(amps.tolist())
            assert (t2, t3) == (pytest.approx(o2, rel=1e-9), pytest.approx(o3, rel=1e-9))
            assert odd_even_ratio(amps) == pytest.approx(
                oracle_odd_even(amps.tolist()), rel=1e-9)
