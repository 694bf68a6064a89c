#!/usr/bin/env python3
"""One checkpoint, three triangulations of the same shape.

Trains briefly on the synthetic harness, then animates an icosphere, a
finer icosphere, and a UV sphere with the same weights. Each output keeps
its own vertex count and face list; no remeshing or registration occurs.
Frames are written under demos/output/.
"""

import os
import tempfile

import numpy as np

from audiomesh import animate, compute_operators, load_checkpoint, synth_dataset, train
from audiomesh.audio import FeatureSequence
from audiomesh.params import ModelConfig
from audiomesh.shapes import icosphere, radial_deform, uv_sphere
from audiomesh.training import TrainConfig

out_root = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(out_root, exist_ok=True)

print("training a small model on the synthetic harness (about a minute)...")
samples = synth_dataset(17, 8)
cfg = TrainConfig(
    epochs=30, learning_rate=2e-3, seed=0, k=32,
    model=ModelConfig(h=16, k=32, feature_dim=8),
)
with tempfile.TemporaryDirectory() as tmp:
    result = train(samples, cfg, tmp)
    params = load_checkpoint(result.best_path)
print(f"final training MSE: {result.history[-1][1]:.3e}\n")

rng = np.random.default_rng(3)
feats = FeatureSequence(rng.standard_normal((12, 8)) * 0.4, 30.0)

for name, base in (
    ("icosphere2", icosphere(2)),
    ("icosphere3", icosphere(3)),
    ("uv_sphere", uv_sphere(12, 18)),
):
    mesh = radial_deform(base, [0.06, 0.04, 0.05], seed=99)
    ops = compute_operators(mesh, k=32)
    seq = animate(mesh, ops, feats, params)
    motion = np.linalg.norm(seq.frames - mesh.vertices[None], axis=-1).max()
    out_dir = os.path.join(out_root, name)
    from audiomesh import save_sequence

    save_sequence(seq.frames, seq.faces, out_dir)
    print(
        f"{name:12s} V={mesh.n_vertices:5d}  frames={seq.n_frames}"
        f"  peak displacement {motion:.4f}  -> {out_dir}"
    )
