"""16-bit PCM RIFF/WAVE reading and writing.

Little-endian, 44.1 kHz. The analysis side is mono; the experiment
service also writes stereo screening stimuli, so the encoder accepts
(n,) or (n, 2) sample arrays. Parse failures report the byte offset.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .synth import AudioBuffer


class WavParseError(ValueError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


def encode_pcm16(samples: np.ndarray) -> np.ndarray:
    """Quantize floats in [-1, 1] to int16; +1.0 maps to 32767."""
    scaled = np.round(np.asarray(samples, dtype=np.float64) * 32767.0)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def wav_bytes(samples: np.ndarray, sample_rate: int) -> bytes:
    """Serialize a mono (n,) or stereo (n, 2) float array as a WAV file."""
    samples = np.asarray(samples)
    channels = 1 if samples.ndim == 1 else samples.shape[1]
    pcm = encode_pcm16(samples).tobytes()
    block_align = channels * 2
    fmt = struct.pack(
        "<4sIHHIIHH", b"fmt ", 16, 1, channels, sample_rate,
        sample_rate * block_align, block_align, 16)
    data = struct.pack("<4sI", b"data", len(pcm)) + pcm
    riff = struct.pack("<4sI4s", b"RIFF", 4 + len(fmt) + len(data), b"WAVE")
    return riff + fmt + data


def write_wav(buffer: AudioBuffer, path: str | Path) -> None:
    Path(path).write_bytes(wav_bytes(buffer.samples, buffer.sample_rate))


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a mono 16-bit PCM WAV back into an AudioBuffer."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise WavParseError("file too short for a RIFF header", len(raw))
    if raw[0:4] != b"RIFF":
        raise WavParseError("missing RIFF magic", 0)
    if raw[8:12] != b"WAVE":
        raise WavParseError("missing WAVE form type", 8)
    pos = 12
    fmt_fields = None
    data = None
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body_start = pos + 8
        if body_start + size > len(raw):
            raise WavParseError(f"chunk {chunk_id!r} overruns file", pos)
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavParseError("fmt chunk too short", pos)
            fmt_fields = struct.unpack_from("<HHIIHH", raw, body_start)
        elif chunk_id == b"data":
            data = raw[body_start:body_start + size]
        pos = body_start + size + (size & 1)  # chunks are word-aligned
    if fmt_fields is None:
        raise WavParseError("no fmt chunk", len(raw))
    if data is None:
        raise WavParseError("no data chunk", len(raw))
    audio_format, channels, sample_rate, _, _, bits = fmt_fields
    if audio_format != 1 or bits != 16:
        raise WavParseError(f"unsupported encoding (format {audio_format}, {bits}-bit)", 12)
    if channels != 1:
        raise WavParseError(f"expected mono, got {channels} channels", 12)
    pcm = np.frombuffer(data[: len(data) - (len(data) % 2)], dtype="<i2")
    return AudioBuffer(sample_rate, pcm.astype(np.float64) / 32767.0)
