"""Waveform augmentations and OAR-driven batch composition.

Five methods are supported: additive background noise at a target SNR, room
impulse response (RIR) convolution, noise followed by RIR, speed modification
and pitch modification. :func:`compose_batch` turns a list of original clip
ids and the current OAR ``beta`` into a :class:`BatchPlan` naming which
augmented copies to generate.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from roar import kernels
from roar.wav_io import AudioClip, read_wav

SNR_RANGE = (0.0, 20.0)
FACTOR_RANGE = (0.9, 1.1)
PITCH_HOP = 400
PITCH_WINDOW = 1024
PITCH_TOLERANCE = 200

_RANGE_EPS = 1e-12


class AugmentError(Exception):
    pass


class DegenerateInputError(AugmentError, ValueError):
    """Silent signal or noise where a non-zero RMS is required."""


class SampleRateMismatchError(AugmentError, ValueError):
    pass


class DomainError(AugmentError, ValueError):
    """A modification factor outside its allowed range."""


class ConfigurationError(AugmentError):
    pass


class Method(str, enum.Enum):
    NOISE = "Noise"
    RIR = "Rir"
    NOISE_THEN_RIR = "NoiseThenRir"
    SPEED = "SpeedMod"
    PITCH = "PitchMod"

    @property
    def uses_noise(self) -> bool:
        return self in (Method.NOISE, Method.NOISE_THEN_RIR)

    @property
    def uses_rir(self) -> bool:
        return self in (Method.RIR, Method.NOISE_THEN_RIR)


METHODS = tuple(Method)


@dataclass(frozen=True)
class AugmentationSpec:
    method: Method
    snr_db: float | None = None
    speed_factor: float | None = None
    pitch_factor: float | None = None
    rir_id: int | None = None
    noise_id: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.snr_db is not None and not SNR_RANGE[0] <= self.snr_db <= SNR_RANGE[1]:
            raise DomainError(f"snr_db {self.snr_db} outside {SNR_RANGE}")
        for name in ("speed_factor", "pitch_factor"):
            value = getattr(self, name)
            if value is not None:
                _check_factor(value)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        d["method"] = self.method.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationSpec":
        return cls(**d)


@dataclass
class BatchPlan:
    """Originals plus the augmented copies to generate for one batch."""

    originals: list
    augmented: list = field(default_factory=list)  # (clip id, AugmentationSpec)

    def to_json(self) -> str:
        return json.dumps(
            {
                "originals": list(self.originals),
                "augmented": [[cid, spec.to_dict()] for cid, spec in self.augmented],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "BatchPlan":
        d = json.loads(text)
        return cls(
            originals=d["originals"],
            augmented=[(cid, AugmentationSpec.from_dict(s)) for cid, s in d["augmented"]],
        )


def rms(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def _check_rates(a: AudioClip, b: AudioClip):
    if a.sample_rate != b.sample_rate:
        raise SampleRateMismatchError(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")


def _check_factor(factor: float):
    lo, hi = FACTOR_RANGE
    if not (lo - _RANGE_EPS <= factor <= hi + _RANGE_EPS):
        raise DomainError(f"factor {factor} outside [{lo}, {hi}]")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def fit_noise(noise: np.ndarray, length: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Tile or crop ``noise`` to ``length`` samples.

    Longer noise is cropped at a uniformly random offset when ``rng`` is
    given, otherwise from the start.
    """
    n = len(noise)
    if n >= length:
        offset = int(rng.integers(0, n - length + 1)) if rng is not None else 0
        return noise[offset : offset + length]
    reps = -(-length // n)
    return np.tile(noise, reps)[:length]


class NoiseMix(NamedTuple):
    clip: AudioClip
    scaled_noise: np.ndarray
    gain: float
    peak_scale: float


def mix_noise(signal: AudioClip, noise: AudioClip, snr_db: float, rng=None) -> NoiseMix:
    """Like :func:`add_noise` but also returns the scaled noise component.

    ``scaled_noise`` is the noise exactly as added, before any peak
    normalisation; ``peak_scale`` is the factor applied afterwards (1.0 if
    none was needed).
    """
    _check_rates(signal, noise)
    sig_rms = rms(signal.samples)
    if sig_rms == 0.0:
        raise DegenerateInputError("signal is silent")
    fitted = fit_noise(noise.samples, len(signal.samples), rng)
    noise_rms = rms(fitted)
    if noise_rms == 0.0:
        raise DegenerateInputError("noise is silent")
    gain = sig_rms / (noise_rms * 10.0 ** (snr_db / 20.0))
    scaled = gain * fitted
    out = signal.samples + scaled
    peak = float(np.max(np.abs(out)))
    peak_scale = 1.0 / peak if peak > 1.0 else 1.0
    if peak_scale != 1.0:
        out = out * peak_scale
    return NoiseMix(AudioClip(out, signal.sample_rate), scaled, gain, peak_scale)


def add_noise(signal: AudioClip, noise: AudioClip, snr_db: float, rng=None) -> AudioClip:
    """Add ``noise`` to ``signal`` at the requested SNR in dB."""
    return mix_noise(signal, noise, snr_db, rng).clip


def apply_rir(signal: AudioClip, rir: AudioClip) -> AudioClip:
    """Convolve with a room impulse response, keep the original length and RMS."""
    _check_rates(signal, rir)
    if len(rir) == 0:
        raise DegenerateInputError("empty impulse response")
    wet = kernels.convolve_full(signal.samples, rir.samples)[: len(signal)]
    target = rms(signal.samples)
    if target == 0.0:
        return AudioClip(wet, signal.sample_rate)
    got = rms(wet)
    if got == 0.0:
        raise DegenerateInputError("impulse response annihilates the signal")
    return AudioClip(wet * (target / got), signal.sample_rate)


def noise_then_rir(signal: AudioClip, noise: AudioClip, snr_db: float, rir: AudioClip, rng=None) -> AudioClip:
    return apply_rir(add_noise(signal, noise, snr_db, rng), rir)


def speed_modify(signal: AudioClip, factor: float) -> AudioClip:
    """Resample by linear interpolation; factor > 1 is faster and shorter.

    The result has ``round(len / factor)`` samples at the same sample rate,
    so every frequency is multiplied by ``factor``.
    """
    _check_factor(factor)
    out_len = _round_half_up(len(signal) / factor)
    out = kernels.linear_resample(signal.samples, out_len, float(factor))
    return AudioClip(out, signal.sample_rate)


def hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def pitch_modify(
    signal: AudioClip,
    factor: float,
    hop: int = PITCH_HOP,
    window: int = PITCH_WINDOW,
    tolerance: int = PITCH_TOLERANCE,
) -> AudioClip:
    """Scale pitch by ``factor`` while keeping the duration.

    The signal is first resampled (changing pitch and length), then a
    waveform-similarity overlap-add time stretch brings it back to the input
    length. Frames may slide by up to ``tolerance`` samples to stay in phase
    with their predecessor; ``tolerance=0`` gives plain overlap-add.
    """
    _check_factor(factor)
    n = len(signal)
    moved = speed_modify(signal, factor).samples
    analysis_hop = hop * len(moved) / n
    out = kernels.ola_stretch(moved, n, analysis_hop, hop, hann(window), tolerance)
    return AudioClip(out, signal.sample_rate)


def synthetic_rir(sample_rate: int, rt60: float = 0.3, length: float | None = None, rng=None) -> AudioClip:
    """Exponentially decaying noise tail behind a unit direct path."""
    rng = np.random.default_rng(rng)
    n = max(1, int(round((length if length is not None else rt60) * sample_rate)))
    t = np.arange(n) / sample_rate
    # amplitude falls by 60 dB after rt60 seconds
    env = 10.0 ** (-3.0 * t / rt60)
    h = rng.standard_normal(n) * env * 0.3
    h[0] = 1.0
    return AudioClip(h / np.max(np.abs(h)), sample_rate)


def sample_spec(rng, n_rirs: int = 1, n_noises: int = 1, methods: Sequence[Method] = METHODS, method=None) -> AugmentationSpec:
    """Draw a method uniformly from ``methods`` and its parameters uniformly."""
    if method is None:
        method = methods[int(rng.integers(len(methods)))]
    method = Method(method)
    kw = {}
    if method.uses_noise:
        kw["snr_db"] = SNR_RANGE[0] + (SNR_RANGE[1] - SNR_RANGE[0]) * float(rng.random())
        kw["noise_id"] = int(rng.integers(n_noises))
    if method.uses_rir:
        if n_rirs < 1:
            raise ConfigurationError("RIR method drawn with an empty RIR bank")
        kw["rir_id"] = int(rng.integers(n_rirs))
    if method is Method.SPEED:
        kw["speed_factor"] = _uniform_factor(rng)
    elif method is Method.PITCH:
        kw["pitch_factor"] = _uniform_factor(rng)
    return AugmentationSpec(method, **kw)


def _uniform_factor(rng) -> float:
    lo, hi = FACTOR_RANGE
    return lo + (hi - lo) * float(rng.random())


def augmented_copies(beta: float, rng) -> int:
    """floor(beta) copies plus one more with probability frac(beta)."""
    whole = math.floor(beta)
    frac = beta - whole
    return whole + (1 if frac > 0.0 and rng.random() < frac else 0)


def compose_batch(
    originals: Sequence,
    beta: float,
    rng,
    n_rirs: int = 1,
    n_noises: int = 1,
    methods: Sequence[Method] = METHODS,
    per_batch_method: bool = False,
) -> BatchPlan:
    """Plan the augmented copies accompanying ``originals`` at OAR ``beta``.

    ``beta`` is the number of augmented copies per original in expectation;
    0 means no augmentation. With ``per_batch_method`` one method is drawn
    for the whole batch instead of one per copy.
    """
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    fixed = methods[int(rng.integers(len(methods)))] if per_batch_method else None
    augmented = []
    for cid in originals:
        for _ in range(augmented_copies(beta, rng)):
            augmented.append((cid, sample_spec(rng, n_rirs, n_noises, methods, method=fixed)))
    return BatchPlan(list(originals), augmented)


def clip_seed(base_seed: int, clip_id) -> int:
    """Stable per-clip seed, independent of process hash randomisation."""
    digest = hashlib.blake2b(f"{base_seed}:{clip_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _load_bank(directory) -> list[AudioClip]:
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".wav")
    return [read_wav(p) for p in paths]


class AugmentationPipeline:
    """Noise and RIR banks plus the method mix used to realise batch plans."""

    def __init__(self, noises=(), rirs=(), methods: Sequence[Method] = METHODS, per_batch_method=False):
        self.noises = list(noises)
        self.rirs = list(rirs)
        self.methods = tuple(Method(m) for m in methods)
        self.per_batch_method = per_batch_method
        if not self.methods:
            raise ConfigurationError("no augmentation methods enabled")
        if any(m.uses_rir for m in self.methods) and not self.rirs:
            raise ConfigurationError("RIR methods enabled but the RIR bank is empty")
        if any(m.uses_noise for m in self.methods) and not self.noises:
            raise ConfigurationError("noise methods enabled but the noise bank is empty")

    @classmethod
    def from_dirs(cls, noise_dir=None, rir_dir=None, **kw) -> "AugmentationPipeline":
        """Load banks from directories of WAV files, in lexicographic order."""
        noises = _load_bank(noise_dir) if noise_dir else []
        rirs = _load_bank(rir_dir) if rir_dir else []
        return cls(noises, rirs, **kw)

    def sample_spec(self, rng) -> AugmentationSpec:
        return sample_spec(rng, len(self.rirs), len(self.noises), self.methods)

    def plan(self, originals, beta, rng) -> BatchPlan:
        return compose_batch(
            originals, beta, rng, len(self.rirs), len(self.noises), self.methods, self.per_batch_method
        )

    def apply(self, clip: AudioClip, spec: AugmentationSpec, rng=None) -> AudioClip:
        m = spec.method
        if m is Method.NOISE:
            return add_noise(clip, self.noises[spec.noise_id], spec.snr_db, rng)
        if m is Method.RIR:
            return apply_rir(clip, self.rirs[spec.rir_id])
        if m is Method.NOISE_THEN_RIR:
            return noise_then_rir(clip, self.noises[spec.noise_id], spec.snr_db, self.rirs[spec.rir_id], rng)
        if m is Method.SPEED:
            return speed_modify(clip, spec.speed_factor)
        return pitch_modify(clip, spec.pitch_factor)

    def realize(self, plan: BatchPlan, clips, base_seed: int = 0) -> list[AudioClip]:
        """Originals followed by their augmented copies.

        Each augmented copy gets its own stream seeded from
        ``(base_seed, clip id, copy index)`` so the result does not depend on
        processing order.
        """
        out = [clips[cid] for cid in plan.originals]
        for k, (cid, spec) in enumerate(plan.augmented):
            rng = np.random.default_rng(clip_seed(base_seed, f"{cid}/{k}"))
            out.append(self.apply(clips[cid], spec, rng))
        return out


def write_plan(plan: BatchPlan, path) -> None:
    Path(path).write_text(plan.to_json())


def read_plan(path) -> BatchPlan:
    return BatchPlan.from_json(Path(os.fspath(path)).read_text())
