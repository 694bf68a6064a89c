"""audiomesh: speech-driven animation of triangle meshes, free of topology
constraints.

A neutral face mesh in any triangulation plus a time-aligned audio feature
stream go in; a per-frame vertex displacement field comes out. Surface
operators (lumped mass, cotangent Laplacian, truncated eigenbasis,
tangent gradients) make the network layers discretization-agnostic, a
bidirectional recurrent stack supplies the temporal latent, and training
runs on exact float64 gradients from the bundled autodiff engine.
"""

__version__ = "0.1.0"

from .meshio import (
    Mesh,
    VertexMask,
    NormalizationFrame,
    load_mesh,
    save_mesh,
    save_sequence,
    load_sequence,
    validate_mesh,
    normalize_to_frame,
)
from .operators import (
    SurfaceOperators,
    cotangent_laplacian,
    mass_matrix,
    eigenbasis,
    spatial_gradient,
    compute_operators,
    cache_store,
    cache_load,
    get_operators,
)
from .audio import (
    FeatureSequence,
    load_features,
    save_features,
    mfcc_extract,
    resample_features,
)
from .blocks import diffuse, gradient_features, block_forward, dn_encode, dn_decode
from .params import ModelConfig, ModelParams, init_model, save_checkpoint, load_checkpoint
from .recurrent import recurrent_forward, project
from .model import AnimationSequence, fuse, animate, animate_to_dir
from .training import (
    TrainConfig,
    LossWeights,
    loss_mse,
    loss_masked,
    loss_velocity,
    backward,
    adam_step,
    train,
)
from .datasets import TrainingSample, synth_dataset, write_dataset, load_manifest
from .metrics import lve, mve, fdd, motion_heatmap, descriptor_norm_map, evaluate

__all__ = [name for name in dir() if not name.startswith("_")]
