"""STFX writing, byte-for-byte per the engine's contract.

Layout: magic "STFX", version u32 (1), T u32, D u32, source_rate f32,
payload T*D f32, all little-endian, row-major.
"""

import struct

import numpy as np

MAGIC = b"STFX"
VERSION = 1


def write_stfx(data, source_rate, path):
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
        raise ValueError(f"feature matrix must be (T>=1, D>=1), got {data.shape}")
    if not np.isfinite(data).all():
        raise ValueError("non-finite feature values")
    T, D = data.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIf", VERSION, T, D, float(source_rate)))
        fh.write(data.tobytes())


def read_stfx_header(path):
    """Header fields only (magic validated); used by the conformance tests."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, T, D, rate = struct.unpack("<IIIf", fh.read(16))
    return {"version": version, "frames": T, "dim": D, "source_rate": rate}
