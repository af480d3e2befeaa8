"""16-bit mono PCM WAV reading and writing."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AudioClip",
    "WavError",
    "WavFormatError",
    "WavUnsupportedError",
    "WavWriteError",
    "read_wav",
    "write_wav",
]

_PCM = 1


class WavError(Exception):
    """Base class for WAV I/O failures."""


class WavFormatError(WavError):
    """The file is not a well-formed RIFF/WAVE file."""


class WavUnsupportedError(WavError):
    """Well-formed WAV with an encoding other than 16-bit mono PCM."""


class WavWriteError(WavError, OSError):
    pass


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono audio as float64 amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"chunk {chunk_id!r} truncated")
        yield chunk_id, body
        # chunks are word aligned
        pos += 8 + size + (size & 1)


def read_wav(path) -> AudioClip:
    """Read a 16-bit mono PCM WAV file.

    Raises :class:`WavFormatError` for malformed files and
    :class:`WavUnsupportedError` for any other encoding.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{os.fspath(path)}: not a RIFF/WAVE file")

    fmt = None
    frames = None
    for chunk_id, body in _iter_chunks(data):
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise WavFormatError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            frames = body
            break
    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if frames is None:
        raise WavFormatError("missing data chunk")

    audio_format, channels, sample_rate, _, block_align, bits = fmt
    if audio_format != _PCM:
        raise WavUnsupportedError(f"audio format {audio_format} is not PCM")
    if channels != 1:
        raise WavUnsupportedError(f"{channels} channels; only mono is supported")
    if bits != 16:
        raise WavUnsupportedError(f"{bits}-bit samples; only 16-bit is supported")
    if sample_rate == 0 or block_align != 2:
        raise WavFormatError("inconsistent fmt chunk")
    if len(frames) % 2:
        raise WavFormatError("data chunk holds a partial frame")
    if not frames:
        raise WavFormatError("data chunk is empty")

    pcm = np.frombuffer(frames, dtype="<i2")
    return AudioClip(pcm.astype(np.float64) / 32768.0, sample_rate)


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as 16-bit mono PCM (round to nearest, clamped, no dither)."""
    pcm = np.clip(np.rint(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        _PCM,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise WavWriteError(f"cannot write {os.fspath(path)}: {exc}") from exc
