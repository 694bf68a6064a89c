"""Training samples, manifest files, and the synthetic data harness.

A manifest is an INI file with one [sample ...] section per sequence:

    [sample 0]
    neutral = meshes/sample0_neutral.obj
    sequence_dir = sequences/sample0
    features = features/sample0.stfx
    lip_mask = masks/sample0_lip.txt
    upper_mask = masks/sample0_upper.txt
    fps = 30

Topologies may differ between samples; within a sample every ground-truth
frame must share the neutral mesh's topology.
"""

import configparser
import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .audio import FeatureSequence, save_features, load_features
from .errors import DataError, FormatError
from .meshio import (
    Mesh,
    VertexMask,
    load_mask,
    load_mesh,
    load_sequence,
    save_mask,
    save_mesh,
    save_sequence,
)
from .shapes import icosphere, radial_deform


@dataclass(frozen=True)
class TrainingSample:
    sample_id: str
    neutral: Mesh
    ground_truth: np.ndarray  # (T, V, 3)
    features: FeatureSequence
    lip_mask: VertexMask
    upper_mask: VertexMask
    fps: float = 30.0

    def __post_init__(self):
        gt = np.asarray(self.ground_truth, dtype=np.float64)
        object.__setattr__(self, "ground_truth", gt)
        self.validate()

    def validate(self):
        gt = self.ground_truth
        if gt.ndim != 3 or gt.shape[2] != 3:
            raise DataError(f"sample {self.sample_id}: ground truth must be (T, V, 3)")
        if gt.shape[1] != self.neutral.n_vertices:
            raise DataError(
                f"sample {self.sample_id}: ground truth has {gt.shape[1]} vertices, "
                f"neutral has {self.neutral.n_vertices}"
            )
        if not np.isfinite(gt).all():
            raise DataError(f"sample {self.sample_id}: non-finite ground truth")
        if gt.shape[0] != self.features.n_frames:
            raise DataError(
                f"sample {self.sample_id}: {gt.shape[0]} ground-truth frames vs "
                f"{self.features.n_frames} feature frames"
            )
        self.lip_mask.check_against(self.neutral.n_vertices)
        self.upper_mask.check_against(self.neutral.n_vertices)

    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.neutral.vertices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.neutral.faces, dtype="<i4").tobytes())
        h.update(np.ascontiguousarray(self.ground_truth, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.features.data, dtype="<f8").tobytes())
        return h.hexdigest()


def load_manifest(path):
    """Load every sample referenced by a manifest file."""
    if not os.path.exists(path):
        raise FormatError(f"manifest not found: {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    base = os.path.dirname(os.path.abspath(path))
    sections = [s for s in cp.sections() if s.startswith("sample")]
    if not sections:
        raise DataError(f"{path}: manifest lists no samples")

    samples = []
    for sec in sections:
        get = cp[sec].get

        def resolve(key):
            value = get(key)
            if value is None:
                raise FormatError(f"{path}: [{sec}] is missing '{key}'")
            return os.path.join(base, value)

        neutral = load_mesh(resolve("neutral"))
        frames, faces = load_sequence(resolve("sequence_dir"))
        if not np.array_equal(faces, neutral.faces):
            raise DataError(f"{path}: [{sec}] sequence topology differs from neutral")
        features = load_features(resolve("features"))
        lip = load_mask(resolve("lip_mask"), "lip")
        upper = load_mask(resolve("upper_mask"), "upper_face")
        fps = float(get("fps", "30"))
        samples.append(
            TrainingSample(sec, neutral, frames, features, lip, upper, fps)
        )
    return samples


def write_dataset(samples, out_dir):
    """Persist samples under out_dir and return the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    cp = configparser.ConfigParser()
    for i, s in enumerate(samples):
        name = f"sample {i}"
        neutral_rel = f"meshes/{i:03d}_neutral.obj"
        seq_rel = f"sequences/{i:03d}"
        feat_rel = f"features/{i:03d}.stfx"
        lip_rel = f"masks/{i:03d}_lip.txt"
        upper_rel = f"masks/{i:03d}_upper.txt"
        for rel in ("meshes", "sequences", "features", "masks"):
            os.makedirs(os.path.join(out_dir, rel), exist_ok=True)
        save_mesh(s.neutral, os.path.join(out_dir, neutral_rel))
        save_sequence(s.ground_truth, s.neutral.faces, os.path.join(out_dir, seq_rel))
        save_features(s.features, os.path.join(out_dir, feat_rel))
        save_mask(s.lip_mask, os.path.join(out_dir, lip_rel))
        save_mask(s.upper_mask, os.path.join(out_dir, upper_rel))
        cp[name] = {
            "neutral": neutral_rel,
            "sequence_dir": seq_rel,
            "features": feat_rel,
            "lip_mask": lip_rel,
            "upper_mask": upper_rel,
            "fps": str(s.fps),
        }
    manifest = os.path.join(out_dir, "manifest.ini")
    with open(manifest, "w") as fh:
        cp.write(fh)
    return manifest


# ---------------------------------------------------------------------------
# synthetic harness


def _z_caps(mesh, lip_fraction=0.15, upper_fraction=0.2):
    z = mesh.vertices[:, 2]
    lip_cut = np.quantile(z, lip_fraction)
    upper_cut = np.quantile(z, 1.0 - upper_fraction)
    lip = np.where(z <= lip_cut)[0]
    upper = np.where(z >= upper_cut)[0]
    return VertexMask(lip, "lip"), VertexMask(upper, "upper_face")


def _smooth_signals(rng, T, dim, n_harmonics=4):
    t = np.linspace(0.0, 1.0, T)
    envelope = np.sin(np.pi * t) ** 2
    envelope[0] = envelope[-1] = 0.0  # exactly silent endpoints
    out = np.zeros((T, dim))
    for d in range(dim):
        for m in range(1, n_harmonics + 1):
            amp = rng.uniform(0.2, 1.0) / np.sqrt(m)
            phase = rng.uniform(0, 2 * np.pi)
            out[:, d] += amp * np.sin(2 * np.pi * m * t + phase)
    return out * envelope[:, None]


def _vertex_normals(mesh):
    v, f = mesh.vertices, mesh.faces
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    n = np.zeros_like(v)
    for c in range(3):
        np.add.at(n, f[:, c], fn)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def synth_dataset(seed, n_samples, feature_dim=8, frames=(16, 24), amplitude=0.04):
    """Deterministic face-proxy dataset.

    Meshes are radially deformed icospheres at alternating resolutions.
    One scalar drive per frame, s_j = p.x_j + 0.5 tanh(q.x_j) (p, q fixed
    by the dataset seed), moves a smooth lowest-z cap of each mesh along
    its vertex normals, so the audio-to-motion map is shared across all
    samples and topologies: a correct model can drive the loss toward
    zero, and zero features always reproduce the neutral mesh.
    """
    rng = np.random.default_rng(seed)
    p = rng.standard_normal(feature_dim) / np.sqrt(feature_dim)
    q = rng.standard_normal(feature_dim) / np.sqrt(feature_dim)

    samples = []
    for i in range(n_samples):
        subdiv = 2 + (i % 2)  # alternate V=162 / V=642
        base = icosphere(subdiv)
        mesh = radial_deform(
            base, rng.uniform(0.03, 0.1, size=3), seed=int(rng.integers(1 << 31))
        )
        T = int(rng.integers(frames[0], frames[1] + 1))
        feats = _smooth_signals(rng, T, feature_dim)

        z = mesh.vertices[:, 2]
        z_lo, z_hi = z.min(), z.max()
        gain = 1.0 / (1.0 + np.exp((z - (z_lo + 0.25 * (z_hi - z_lo))) / (0.1 * (z_hi - z_lo))))
        normals = _vertex_normals(mesh)
        drive = feats @ p + 0.5 * np.tanh(feats @ q)  # (T,)
        disp = amplitude * drive[:, None, None] * (gain[:, None] * normals)[None]
        gt = mesh.vertices[None] + disp

        lip, upper = _z_caps(mesh)
        samples.append(
            TrainingSample(
                sample_id=f"synth-{seed}-{i}",
                neutral=mesh,
                ground_truth=gt,
                features=FeatureSequence(feats, 30.0),
                lip_mask=lip,
                upper_mask=upper,
                fps=30.0,
            )
        )
    return samples
