"""End-to-end assembly: neutral mesh + audio features -> animated frames.

The geometry encoder runs once per sequence; the audio latent is
broadcast over vertices and every frame is decoded against the same
operator bundle, so the output sequence shares the neutral mesh's
topology by construction.
"""

import hashlib
import os
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import blocks
from .audio import resample_features
from .autodiff import Tensor
from .errors import DataError, MeshError
from .meshio import save_sequence
from .operators import content_hash, get_operators, default_k
from .params import params_sha256
from .recurrent import project, recurrent_forward


@dataclass(frozen=True)
class AnimationSequence:
    """T frames of V x 3 positions sharing the neutral mesh's topology."""

    frames: np.ndarray  # (T, V, 3)
    faces: np.ndarray   # (F, 3), the neutral mesh's face list

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 3 or f.shape[2] != 3:
            raise DataError(f"frames must be (T, V, 3), got {f.shape}")
        if not np.isfinite(f).all():
            raise DataError("non-finite coordinates in animation frames")
        object.__setattr__(self, "frames", f)

    @property
    def n_frames(self):
        return self.frames.shape[0]


def fuse(f, v_j):
    """Concatenate the audio latent onto every vertex descriptor row:
    row k of the result is [f_k, v_j]. f is (V, h), v_j is (h,)."""
    f = ad.as_tensor(f)
    v_j = ad.as_tensor(v_j)
    if v_j.data.ndim != 1:
        raise DataError(f"audio latent must be a vector, got {v_j.data.shape}")
    V = f.data.shape[0]
    tiled = ad.broadcast_to(ad.reshape(v_j, (1, -1)), (V, v_j.data.shape[0]))
    return ad.concat([f, tiled], axis=-1)


def fuse_frames(f, v):
    """Batched fuse: (V, h) descriptors + (T, h) latents -> (T, V, 2h)."""
    f = ad.as_tensor(f)
    v = ad.as_tensor(v)
    T = v.data.shape[0]
    V, h = f.data.shape
    left = ad.broadcast_to(ad.reshape(f, (1, V, h)), (T, V, h))
    right = ad.broadcast_to(ad.reshape(v, (T, 1, v.data.shape[1])), (T, V, v.data.shape[1]))
    return ad.concat([left, right], axis=-1)


def forward_displacements(vertices, ops, feature_matrix, params):
    """Differentiable forward pass; returns the (T, V, 3) displacement Tensor."""
    f = blocks.dn_encode(vertices, ops, params.encoder)
    a = project(Tensor(np.asarray(feature_matrix, dtype=np.float64)), params.audio_proj)
    v = recurrent_forward(a, params.recurrent)
    fused = fuse_frames(f, v)
    return blocks.dn_decode(fused, ops, params.decoder)


def animate(neutral, ops, features, params):
    """Animate a neutral mesh: one output frame per feature frame.

    `features` must already be aligned to the desired frame count (see
    resample_features); `ops` must come from this neutral mesh.
    """
    if ops.n_vertices != neutral.n_vertices:
        raise MeshError(
            f"operator bundle has {ops.n_vertices} vertices, mesh has "
            f"{neutral.n_vertices}"
        )
    with ad.no_grad():
        disp = forward_displacements(
            neutral.vertices, ops, features.data, params
        ).data
    return AnimationSequence(disp + neutral.vertices[None], neutral.faces.copy())


def write_run_manifest(path, entries):
    """key: value per line; values are rendered with str()."""
    with open(path, "w") as fh:
        for key, value in entries:
            fh.write(f"{key}: {value}\n")


def animate_to_dir(neutral, features, params, out_dir, fps=30.0, cache_path=None, seed=0):
    """Full inference convenience: operators (cached), frame alignment,
    animation, per-frame OBJ files, and a run manifest.

    Returns the AnimationSequence. The manifest records content hashes,
    cache status and timings; `elapsed_*` lines are the only
    non-deterministic part of the run's output.
    """
    os.makedirs(out_dir, exist_ok=True)
    k = default_k(neutral.n_vertices, params.config.k)
    t0 = time.perf_counter()
    ops, cache_status = get_operators(neutral, k, cache_path, seed=seed)
    t_ops = time.perf_counter() - t0

    feature_hash = hashlib.sha256(
        np.ascontiguousarray(features.data, dtype="<f4").tobytes()
    ).hexdigest()
    if fps > 0 and features.source_rate > 0:
        target_T = max(1, int(round(features.duration * fps)))
        if target_T != features.n_frames:
            features = resample_features(features, target_T)
    t1 = time.perf_counter()
    seq = animate(neutral, ops, features, params)
    t_animate = time.perf_counter() - t1
    save_sequence(seq.frames, seq.faces, out_dir)

    write_run_manifest(
        os.path.join(out_dir, "run_manifest.txt"),
        [
            ("command", "animate"),
            ("model_hash", params_sha256(params)),
            ("mesh_hash", content_hash(neutral, k).hex()),
            ("feature_hash", feature_hash),
            ("feature_frames", features.n_frames),
            ("feature_dim", features.dim),
            ("fps", fps),
            ("k", k),
            ("h", params.config.h),
            ("cell", params.config.cell),
            ("cache", cache_status),
            ("frames_written", seq.n_frames),
            ("elapsed_operators_s", f"{t_ops:.3f}"),
            ("elapsed_animate_s", f"{t_animate:.3f}"),
        ],
    )
    return seq
