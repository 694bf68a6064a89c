"""Export pipeline: encode, resample to the target frame rate, write STFX."""

import numpy as np

from .backends import encode_wav, load_wav
from .stfx import write_stfx


def resample_linear(data, target_T):
    """Per-dimension linear interpolation over the normalized time axis."""
    T = data.shape[0]
    if target_T == T:
        return data
    if T < 2:
        raise ValueError("resampling needs at least 2 source frames")
    src = np.linspace(0.0, 1.0, T)
    dst = np.linspace(0.0, 1.0, target_T)
    out = np.empty((target_T, data.shape[1]))
    for d in range(data.shape[1]):
        out[:, d] = np.interp(dst, src, data[:, d])
    return out


def export(wav_path, model_name, target_fps, out_path):
    """Encode a WAV file and write STFX aligned to round(duration * fps).

    Returns a summary dict (frames, dim, revision, duration).
    """
    if target_fps <= 0:
        raise ValueError(f"target fps must be positive, got {target_fps}")
    samples, rate = load_wav(wav_path)
    duration = samples.size / rate
    feats, native_rate, revision = encode_wav(wav_path, model_name)
    target_T = max(1, int(round(duration * target_fps)))
    aligned = resample_linear(feats, target_T)
    write_stfx(aligned, float(target_fps), out_path)
    return {
        "wav": str(wav_path),
        "model": model_name,
        "revision": revision,
        "duration_s": duration,
        "native_rate_hz": native_rate,
        "frames": target_T,
        "dim": feats.shape[1],
        "out": str(out_path),
    }
