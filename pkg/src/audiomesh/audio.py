"""Audio feature ingestion: STFX files, a mel-cepstral fallback extractor,
and frame-rate alignment.

STFX layout: magic "STFX" (4 bytes), version u32, T u32, D u32,
source_rate f32, payload T*D f32 little-endian row-major. This is the
boundary through which any pretrained speech encoder feeds the engine.
"""

import struct
import wave
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import DataError, FormatError, NonFiniteError

STFX_MAGIC = b"STFX"
STFX_VERSION = 1


@dataclass(frozen=True)
class FeatureSequence:
    """Time-aligned audio features: one row per frame."""

    data: np.ndarray       # (T, D) float64
    source_rate: float     # frames per second of the original stream

    def __post_init__(self):
        d = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise DataError(f"feature matrix must be (T>=1, D>=1), got {d.shape}")
        if not np.isfinite(d).all():
            t, k = np.argwhere(~np.isfinite(d))[0]
            raise NonFiniteError(f"non-finite feature at frame {t}, dim {k}")
        d.flags.writeable = False
        object.__setattr__(self, "data", d)

    @property
    def n_frames(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    @property
    def duration(self):
        return self.n_frames / self.source_rate


def load_features(path):
    """Read an STFX file into a FeatureSequence (f32 payload upcast to f64)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != STFX_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, not an STFX file")
        header = fh.read(16)
        if len(header) != 16:
            raise FormatError(f"{path}: truncated STFX header")
        version, T, D, rate = struct.unpack("<IIIf", header)
        if version != STFX_VERSION:
            raise FormatError(f"{path}: STFX version {version} unsupported")
        payload = fh.read(4 * T * D)
        if len(payload) != 4 * T * D:
            raise FormatError(
                f"{path}: truncated payload ({len(payload)} bytes, expected {4 * T * D})"
            )
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after STFX payload")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(T, D)
    if not np.isfinite(data).all():
        t, k = np.argwhere(~np.isfinite(data))[0]
        raise NonFiniteError(f"{path}: non-finite feature at frame {t}, dim {k}")
    return FeatureSequence(data, float(rate))


def save_features(features, path):
    """Write a FeatureSequence as STFX (payload stored as f32)."""
    T, D = features.data.shape
    with open(path, "wb") as fh:
        fh.write(STFX_MAGIC)
        fh.write(struct.pack("<IIIf", STFX_VERSION, T, D, float(features.source_rate)))
        fh.write(np.ascontiguousarray(features.data, dtype="<f4").tobytes())


def load_wav(path):
    """Read a 16-bit PCM mono WAV file; returns (samples in [-1, 1), rate)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise FormatError(f"{path}: only mono WAV is supported")
        if wf.getsampwidth() != 2:
            raise FormatError(f"{path}: only 16-bit PCM WAV is supported")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def save_wav(samples, rate, path):
    """Write mono float samples in [-1, 1] as 16-bit PCM WAV."""
    pcm = np.clip(np.asarray(samples) * 32768.0, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


def mel_scale(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


def mel_inverse(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mel_filterbank(sample_rate, n_fft, n_mels):
    """Triangular mel filters over the rfft bins, shape (n_mels, n_fft//2+1)."""
    points = mel_inverse(
        np.linspace(0.0, mel_scale(sample_rate / 2.0), n_mels + 2)
    )
    bins = np.floor((n_fft + 1) * points / sample_rate).astype(int)
    bank = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(1, n_mels + 1):
        lo, mid, hi = bins[m - 1], bins[m], bins[m + 1]
        for b in range(lo, mid):
            if mid > lo:
                bank[m - 1, b] = (b - lo) / (mid - lo)
        for b in range(mid, hi):
            if hi > mid:
                bank[m - 1, b] = (hi - b) / (hi - mid)
    return bank


@dataclass(frozen=True)
class MfccConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 26
    n_ceps: int = 13
    n_fft: int = 512
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10


def frame_count(n_samples, window, hop):
    return (n_samples - window) // hop + 1


def mfcc_extract(samples, sample_rate, cfg=MfccConfig()):
    """Mel-cepstral features: 13 cepstra + 13 deltas per frame (D = 26).

    Deterministic; the feature rate is 1000/hop_ms frames per second.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.size == 0:
        raise DataError("empty or non-mono signal")
    if sample_rate < 8000:
        raise DataError(f"sample rate {sample_rate} below 8 kHz minimum")
    window = int(round(cfg.window_ms * sample_rate / 1000.0))
    hop = int(round(cfg.hop_ms * sample_rate / 1000.0))
    if samples.size < window:
        raise DataError(
            f"signal too short: {samples.size} samples < one {window}-sample window"
        )
    if cfg.n_fft < window:
        raise DataError(f"n_fft {cfg.n_fft} smaller than window {window}")

    emphasized = np.concatenate(
        [samples[:1], samples[1:] - cfg.pre_emphasis * samples[:-1]]
    )
    T = frame_count(samples.size, window, hop)
    idx = np.arange(window)[None, :] + hop * np.arange(T)[:, None]
    frames = emphasized[idx] * np.hanning(window)[None, :]

    power = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1)) ** 2 / cfg.n_fft
    bank = mel_filterbank(sample_rate, cfg.n_fft, cfg.n_mels)
    logmel = np.log(np.maximum(power @ bank.T, cfg.log_floor))
    ceps = scipy.fft.dct(logmel, type=2, axis=1, norm="ortho")[:, : cfg.n_ceps]

    # two-frame regression deltas with edge replication
    padded = np.pad(ceps, ((2, 2), (0, 0)), mode="edge")
    deltas = sum(n * (padded[2 + n : T + 2 + n] - padded[2 - n : T + 2 - n]) for n in (1, 2))
    deltas /= 2.0 * (1 + 4)

    rate = 1000.0 / cfg.hop_ms
    return FeatureSequence(np.concatenate([ceps, deltas], axis=1), rate)


def resample_features(features, target_T):
    """Per-dimension linear interpolation onto `target_T` frames over the
    normalized time axis [0, 1]; endpoints are preserved exactly."""
    if target_T < 1:
        raise DataError(f"target frame count must be >= 1, got {target_T}")
    T = features.n_frames
    if T < 2:
        raise DataError("resampling needs at least 2 source frames")
    if target_T == T:
        return features
    src = np.linspace(0.0, 1.0, T)
    dst = np.linspace(0.0, 1.0, target_T)
    out = np.empty((target_T, features.dim))
    for d in range(features.dim):
        out[:, d] = np.interp(dst, src, features.data[:, d])
    new_rate = features.source_rate * target_T / T
    return FeatureSequence(out, new_rate)
