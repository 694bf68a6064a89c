"""Losses, exact gradients, Adam, and the training loop.

Gradients come from the autodiff graph (reverse mode, float64), so every
learnable tensor, including diffusion times behind the spectral
exponential and the complex gradient-mixing matrices, gets an exact
derivative. One sequence per optimizer step; topologies may differ
across samples.
"""

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError, NonFiniteError
from .model import forward_displacements
from .operators import compute_operators, default_k
from .params import ModelConfig, init_model, save_checkpoint
from .shapes import mean_edge_length

log = logging.getLogger(__name__)


# -- loss functions (array semantics; the trainer mirrors them in-graph) ----


def loss_mse(pred, gt):
    """Mean over frames and vertices of squared Euclidean vertex distance."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return float(np.mean(np.sum((pred - gt) ** 2, axis=-1)))


def loss_masked(pred, gt, lip_mask):
    """MSE restricted to the lip vertex set."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    idx = lip_mask.indices
    return float(np.mean(np.sum((pred[:, idx] - gt[:, idx]) ** 2, axis=-1)))


def loss_velocity(pred, gt):
    """MSE between consecutive-frame differences of pred and ground truth."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.shape[0] < 2:
        raise DataError("velocity loss needs at least 2 frames")
    dv = (gt[1:] - gt[:-1]) - (pred[1:] - pred[:-1])
    return float(np.mean(np.sum(dv ** 2, axis=-1)))


def _mse_graph(pred, target):
    diff = ad.add(pred, Tensor(-target))
    return ad.tmean(ad.tsum(ad.square(diff), axis=-1))


def _masked_graph(pred, target, idx):
    diff = ad.add(pred[:, idx], Tensor(-target[:, idx]))
    return ad.tmean(ad.tsum(ad.square(diff), axis=-1))


def _velocity_graph(pred, target):
    T = pred.data.shape[0]
    dp = ad.add(pred[1:T], ad.mul(pred[0 : T - 1], -1.0))
    dt = target[1:] - target[:-1]
    return _mse_graph(dp, dt)


@dataclass(frozen=True)
class LossWeights:
    mse: float = 1.0
    masked: float = 0.0
    velocity: float = 0.0

    def validate(self):
        if self.mse <= 0:
            raise DataError("w_mse must be > 0")
        if self.masked < 0 or self.velocity < 0:
            raise DataError("loss weights must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    grad_clip: float = 1.0
    k: int = 128
    model: ModelConfig = None  # filled in by train() when absent

    def validate(self):
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise DataError("learning rate must be > 0")
        self.weights.validate()


def sample_loss_graph(sample, ops, params, weights):
    """Weighted loss Tensor for one sequence (builds the full graph)."""
    pred_disp = forward_displacements(
        sample.neutral.vertices, ops, sample.features.data, params
    )
    pred = ad.add(pred_disp, Tensor(sample.neutral.vertices[None]))
    total = ad.mul(_mse_graph(pred, sample.ground_truth), weights.mse)
    if weights.masked > 0:
        total = ad.add(
            total,
            ad.mul(
                _masked_graph(pred, sample.ground_truth, sample.lip_mask.indices),
                weights.masked,
            ),
        )
    if weights.velocity > 0 and sample.ground_truth.shape[0] >= 2:
        total = ad.add(
            total, ad.mul(_velocity_graph(pred, sample.ground_truth), weights.velocity)
        )
    return total


def backward(sample, ops, params, weights=LossWeights()):
    """Exact reverse-mode gradients of the weighted loss.

    Returns (loss value, dict name -> gradient array). Raises
    NonFiniteError naming the parameter if any gradient is non-finite.
    """
    params.zero_grad()
    loss = sample_loss_graph(sample, ops, params, weights)
    loss.backward()
    grads = {}
    for name, tensor in params.named_parameters():
        g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
        grads[name] = g
    return float(loss.data), grads


def clip_gradients(grads, max_norm):
    """Scale all gradients so their global L2 norm is at most max_norm."""
    if max_norm <= 0:
        return grads
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        grads = {k: g * scale for k, g in grads.items()}
    return grads


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, cfg):
    """Standard bias-corrected Adam update, in place, deterministic."""
    state.step += 1
    t = state.step
    lr = cfg.learning_rate
    b1, b2, eps = cfg.beta1, cfg.beta2, cfg.epsilon
    for name, tensor in params.named_parameters():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(tensor.data)
            v = np.zeros_like(tensor.data)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class TrainResult:
    best_path: str
    last_path: str
    curve_path: str
    history: list
    best_val: float


def _canonical_order(samples):
    # content-hash ordering makes training invariant to manifest listing order
    return sorted(samples, key=lambda s: s.content_hash())


def train(samples, cfg, out_dir):
    """Train on a list of TrainingSamples; writes best/last checkpoints and
    a loss-curve CSV under out_dir.

    The last 10% of samples (after a seeded shuffle of the canonical
    content-hash order) form the validation split; with very few samples
    the split is empty and training loss drives checkpoint selection.
    """
    cfg.validate()
    if not samples:
        raise DataError("empty training manifest")
    for s in samples:
        s.validate()
    os.makedirs(out_dir, exist_ok=True)

    ordered = _canonical_order(samples)
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(ordered))
    ordered = [ordered[i] for i in perm]
    n_val = len(ordered) // 10
    train_set = ordered[: len(ordered) - n_val]
    val_set = ordered[len(ordered) - n_val :]

    model_cfg = cfg.model
    if model_cfg is None:
        model_cfg = ModelConfig(
            k=cfg.k, feature_dim=train_set[0].features.dim
        )
    init_time = mean_edge_length(train_set[0].neutral) ** 2
    params = init_model(model_cfg, seed=cfg.seed, init_time=init_time)

    ops_cache = {}

    def ops_for(sample):
        key = sample.content_hash()
        if key not in ops_cache:
            k = default_k(sample.neutral.n_vertices, model_cfg.k)
            ops_cache[key] = compute_operators(sample.neutral, k)
        return ops_cache[key]

    state = AdamState()
    history = []
    best_val = np.inf
    best_path = os.path.join(out_dir, "checkpoint_best.stpm")
    last_path = os.path.join(out_dir, "checkpoint_last.stpm")
    curve_path = os.path.join(out_dir, "loss_curve.csv")

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_set))
        epoch_losses = []
        for idx in order:
            sample = train_set[idx]
            loss, grads = backward(sample, ops_for(sample), params, cfg.weights)
            grads = clip_gradients(grads, cfg.grad_clip)
            adam_step(params, grads, state, cfg)
            epoch_losses.append(loss)
        train_loss = float(np.mean(epoch_losses))

        with ad.no_grad():
            val_losses = [
                float(sample_loss_graph(s, ops_for(s), params, cfg.weights).data)
                for s in val_set
            ]
        val_loss = float(np.mean(val_losses)) if val_losses else train_loss
        history.append((epoch, train_loss, val_loss))
        log.info(
            "epoch %d: train_mse %.6e val_mse %.6e", epoch, train_loss, val_loss
        )
        if val_loss < best_val:
            best_val = val_loss
            save_checkpoint(params, best_path)

    save_checkpoint(params, last_path)
    if not os.path.exists(best_path):
        save_checkpoint(params, best_path)
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "val_mse"])
        writer.writerows(history)
    return TrainResult(best_path, last_path, curve_path, history, best_val)
