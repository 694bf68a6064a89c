"""stfx-exporter: bridge from speech encoders to STFX feature files.

Runs a configured speech representation model over a WAV file, linearly
resamples the frame sequence to a target mesh frame rate, and writes the
result in the STFX binary format the animation engine ingests. A
deterministic log-mel backend needs no downloads and anchors the golden
fixtures; HuBERT / Wav2Vec2 / WavLM backends are available when their
weights are installed locally.
"""

__version__ = "0.1.0"

from .stfx import write_stfx, read_stfx_header
from .backends import MODEL_REGISTRY, ModelUnavailableError, encode_wav
from .export import export

__all__ = [
    "write_stfx",
    "read_stfx_header",
    "MODEL_REGISTRY",
    "ModelUnavailableError",
    "encode_wav",
    "export",
]
