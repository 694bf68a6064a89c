#!/usr/bin/env python3
"""The audio feature path without any pretrained model: synthesize a WAV,
extract mel-cepstral features, resample them to a mesh frame rate, and
round-trip the STFX file format."""

import os
import tempfile

import numpy as np

from audiomesh.audio import (
    load_features,
    mfcc_extract,
    resample_features,
    save_features,
    save_wav,
)

sr = 16000
t = np.arange(2 * sr) / sr
# a crude two-formant "vowel" with a pitch sweep
wav = 0.4 * np.sin(2 * np.pi * (120 + 30 * t) * t)
wav += 0.2 * np.sin(2 * np.pi * 700 * t) + 0.1 * np.sin(2 * np.pi * 1200 * t)

feats = mfcc_extract(wav, sr)
print(f"extracted {feats.n_frames} frames x {feats.dim} dims at {feats.source_rate} Hz")
print(f"c0 range: [{feats.data[:, 0].min():.2f}, {feats.data[:, 0].max():.2f}]")

target = round(feats.duration * 30)  # align to a 30 fps mesh sequence
aligned = resample_features(feats, target)
print(f"aligned to {aligned.n_frames} frames at 30 fps (duration {feats.duration:.2f}s)")

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "demo.stfx")
    save_features(aligned, path)
    again = load_features(path)
    print(f"STFX round trip: {again.n_frames} x {again.dim}, "
          f"payload identical: {np.array_equal(again.data, aligned.data.astype(np.float32).astype(np.float64))}")
