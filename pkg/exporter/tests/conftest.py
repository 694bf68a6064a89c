import os
import wave

import numpy as np
import pytest

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


def write_wav(samples, rate, path):
    pcm = np.clip(np.asarray(samples) * 32768.0, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


def two_second_tone():
    """The deterministic 2 s fixture signal behind the golden STFX file."""
    rate = 16000
    t = np.arange(2 * rate) / rate
    x = 0.4 * np.sin(2 * np.pi * 220.0 * t) + 0.2 * np.sin(2 * np.pi * 660.0 * t)
    return x * np.minimum(1.0, 10.0 * t), rate  # short fade-in


@pytest.fixture
def tone_wav(tmp_path):
    samples, rate = two_second_tone()
    path = tmp_path / "tone_2s.wav"
    write_wav(samples, rate, path)
    return path


@pytest.fixture
def silence_wav(tmp_path):
    path = tmp_path / "silence_2s.wav"
    write_wav(np.zeros(32000), 16000, path)
    return path
