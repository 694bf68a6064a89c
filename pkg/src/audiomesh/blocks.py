"""Discretization-agnostic network layers.

Each block diffuses its input over the surface with learned per-channel
times, computes tangent-gradient features mixed by a learned complex
matrix, and feeds [input, diffused, gradient features] through a
per-vertex MLP with a residual connection. Feature tensors are (V, c) for
a single field or (T, V, c) for a batch of frames sharing one mesh.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NonFiniteError, MeshError


def _linear(x, lin):
    return ad.add(ad.matmul(x, lin.weight), lin.bias)


def diffuse(H, ops, times):
    """Spectral heat diffusion, one learned time per channel.

    Channel j becomes Phi diag(exp(-lambda t_j)) Phi^T M H_j truncated to
    the k-mode basis. `times` may be a Tensor (gradients flow through the
    exponential) or a plain array.
    """
    H = ad.as_tensor(H)
    times = ad.as_tensor(times)
    if not np.isfinite(times.data).all():
        raise NonFiniteError("non-finite diffusion time")
    c = H.data.shape[-1]
    if times.data.shape != (c,):
        raise ValueError(f"expected {c} diffusion times, got {times.data.shape}")
    if H.data.shape[-2] != ops.n_vertices:
        raise MeshError(
            f"feature rows {H.data.shape[-2]} != operator vertices {ops.n_vertices}"
        )
    phi = ops.eigenvectors                    # (V, k)
    lam = ops.eigenvalues[:, None]            # (k, 1)
    mass_col = ops.mass[:, None]              # (V, 1) broadcasts over channels
    coeff = ad.matmul(Tensor(phi.T), ad.mul(H, Tensor(mass_col)))
    decay = ad.exp(ad.mul(ad.mul(times, -1.0), Tensor(lam)))  # (k, c)
    return ad.matmul(Tensor(phi), ad.mul(coeff, decay))


def _grad_parts(ops):
    # cache the split real/imag gradient operators on the bundle
    if not hasattr(ops, "_grad_re_cache"):
        object.__setattr__(ops, "_grad_re_cache", ops.gradient.real.tocsr())
        object.__setattr__(ops, "_grad_im_cache", ops.gradient.imag.tocsr())
    return ops._grad_re_cache, ops._grad_im_cache


def gradient_features(H, ops, mix_re, mix_im):
    """Orientation-aware features: tanh(Re(conj(g) * (g A))) per vertex and
    channel, where g is the complex tangent gradient of each channel and A
    a learned complex c x c matrix (given as real/imag parts)."""
    H = ad.as_tensor(H)
    grad_re, grad_im = _grad_parts(ops)
    gx = ad.spmm(grad_re, H)
    gy = ad.spmm(grad_im, H)
    wr = ad.add(ad.matmul(gx, mix_re), ad.mul(ad.matmul(gy, mix_im), -1.0))
    wi = ad.add(ad.matmul(gx, mix_im), ad.matmul(gy, mix_re))
    return ad.tanh(ad.add(ad.mul(gx, wr), ad.mul(gy, wi)))


def block_forward(H, ops, blk):
    """u = diffuse(H); z = gradient features of u; H + MLP([H, u, z])."""
    H = ad.as_tensor(H)
    times = ad.square(blk.time_sqrt)
    u = diffuse(H, ops, times)
    z = gradient_features(u, ops, blk.mix_re, blk.mix_im)
    cat = ad.concat([H, u, z], axis=-1)
    hidden = ad.relu(_linear(cat, blk.mlp_hidden))
    return ad.add(H, _linear(hidden, blk.mlp_out))


def dn_encode(vertices, ops, enc):
    """Per-vertex descriptors from raw vertex positions: linear 3->h, the
    block stack, linear h->h. Returns a (V, h) Tensor."""
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.shape[0] != ops.n_vertices:
        raise MeshError(
            f"mesh has {vertices.shape[0]} vertices but operators were built "
            f"for {ops.n_vertices}"
        )
    x = _linear(Tensor(vertices), enc.inp)
    for blk in enc.blocks:
        x = block_forward(x, ops, blk)
    return _linear(x, enc.out)


def dn_decode(F, ops, dec):
    """Displacement field from fused descriptors: linear 2h->h, the block
    stack, linear h->3. The caller adds the result to the neutral
    positions. F is (V, 2h) or (T, V, 2h)."""
    F = ad.as_tensor(F)
    if F.data.shape[-2] != ops.n_vertices:
        raise MeshError(
            f"fused features cover {F.data.shape[-2]} vertices, operators "
            f"have {ops.n_vertices}"
        )
    x = _linear(F, dec.inp)
    for blk in dec.blocks:
        x = block_forward(x, ops, blk)
    return _linear(x, dec.out)
