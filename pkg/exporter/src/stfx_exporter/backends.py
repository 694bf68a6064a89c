"""Speech encoder backends.

`logmel` is self-contained and deterministic: its "revision" is a content
hash of its parameters, so golden fixtures stay stable by construction.
The pretrained backends load through `transformers` and honor the pinned
revision in MODEL_REGISTRY; they fail with a clear error when the weights
are not available locally (nothing is downloaded implicitly).
"""

import hashlib
import json
import wave
from dataclasses import dataclass

import numpy as np


class ModelUnavailableError(Exception):
    pass


@dataclass(frozen=True)
class LogMelConfig:
    sample_rate: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 20.0  # 50 Hz native rate, like the pretrained encoders
    n_mels: int = 40
    n_fft: int = 512
    log_floor: float = 1e-10

    def revision(self):
        payload = json.dumps(self.__dict__, sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class PretrainedSpec:
    repo: str
    revision: str  # commit hash or tag pinned in this registry
    dim: int
    native_rate: float = 50.0


MODEL_REGISTRY = {
    "logmel": LogMelConfig(),
    "hubert-base": PretrainedSpec("facebook/hubert-base-ls960", "main", 768),
    "wav2vec2-base": PretrainedSpec("facebook/wav2vec2-base-960h", "main", 768),
    "wavlm-base": PretrainedSpec("microsoft/wavlm-base", "main", 768),
}


def load_wav(path):
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValueError(f"{path}: only mono WAV is supported")
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM WAV is supported")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0, rate


def _mel_points(sample_rate, n_mels):
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    return from_mel(np.linspace(0.0, to_mel(sample_rate / 2.0), n_mels + 2))


def _logmel_features(samples, rate, cfg):
    if rate != cfg.sample_rate:
        raise ValueError(
            f"logmel backend expects {cfg.sample_rate} Hz input, got {rate}"
        )
    window = int(round(cfg.window_ms * rate / 1000.0))
    hop = int(round(cfg.hop_ms * rate / 1000.0))
    if samples.size < window:
        raise ValueError("signal shorter than one analysis window")
    T = (samples.size - window) // hop + 1
    idx = np.arange(window)[None, :] + hop * np.arange(T)[:, None]
    frames = samples[idx] * np.hanning(window)[None, :]
    power = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1)) ** 2 / cfg.n_fft

    points = _mel_points(rate, cfg.n_mels)
    bins = np.floor((cfg.n_fft + 1) * points / rate).astype(int)
    bank = np.zeros((cfg.n_mels, cfg.n_fft // 2 + 1))
    for m in range(1, cfg.n_mels + 1):
        lo, mid, hi = bins[m - 1], bins[m], bins[m + 1]
        for b in range(lo, mid):
            if mid > lo:
                bank[m - 1, b] = (b - lo) / (mid - lo)
        for b in range(mid, hi):
            if hi > mid:
                bank[m - 1, b] = (hi - b) / (hi - mid)

    feats = np.log(np.maximum(power @ bank.T, cfg.log_floor))
    return feats, 1000.0 / cfg.hop_ms


def _pretrained_features(samples, rate, spec):
    try:
        import torch
        from transformers import AutoFeatureExtractor, AutoModel
    except ImportError as e:
        raise ModelUnavailableError(
            f"pretrained backends need the [pretrained] extra installed: {e}"
        ) from None
    try:
        extractor = AutoFeatureExtractor.from_pretrained(
            spec.repo, revision=spec.revision, local_files_only=True
        )
        model = AutoModel.from_pretrained(
            spec.repo, revision=spec.revision, local_files_only=True
        )
    except Exception as e:
        raise ModelUnavailableError(
            f"model {spec.repo}@{spec.revision} is not available locally "
            f"(download it first or use the logmel backend): {e}"
        ) from None
    if rate != extractor.sampling_rate:
        raise ValueError(
            f"{spec.repo} expects {extractor.sampling_rate} Hz input, got {rate}"
        )
    model.eval()
    with torch.no_grad():
        inputs = extractor(samples, sampling_rate=rate, return_tensors="pt")
        hidden = model(**inputs).last_hidden_state[0].double().numpy()
    native_rate = hidden.shape[0] / (samples.size / rate)
    return hidden, native_rate


def encode_wav(wav_path, model_name):
    """Run a backend over a WAV file; returns (features (T, D), native rate,
    revision string)."""
    if model_name not in MODEL_REGISTRY:
        raise ValueError(
            f"unknown model {model_name!r}; choose from {sorted(MODEL_REGISTRY)}"
        )
    samples, rate = load_wav(wav_path)
    if samples.size == 0:
        raise ValueError(f"{wav_path}: empty signal")
    spec = MODEL_REGISTRY[model_name]
    if isinstance(spec, LogMelConfig):
        feats, native_rate = _logmel_features(samples, rate, spec)
        return feats, native_rate, spec.revision()
    feats, native_rate = _pretrained_features(samples, rate, spec)
    return feats, native_rate, spec.revision
