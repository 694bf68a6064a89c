import numpy as np
import pytest

from audiomesh import autodiff as ad, shapes
from audiomesh.autodiff import Tensor
from audiomesh.blocks import block_forward, diffuse, dn_decode, dn_encode, gradient_features
from audiomesh.errors import MeshError, NonFiniteError
from audiomesh.meshio import Mesh
from audiomesh.operators import compute_operators
from audiomesh.params import (
    DecoderParams,
    EncoderParams,
    diffusion_block_init,
    init_model,
    linear_init,
    linear_zeros,
    ModelConfig,
)


def test_diffuse_t0_is_projection(icosahedron, icosahedron_ops, rng):
    # with k = V the spectral projection is complete: t = 0 is the identity
    H = rng.standard_normal((12, 4))
    out = diffuse(Tensor(H), icosahedron_ops, np.zeros(4)).data
    assert np.abs(out - H).max() < 1e-6


def test_diffuse_truncated_projection(icosphere2, rng):
    ops = compute_operators(icosphere2, k=16)
    H = rng.standard_normal((ops.n_vertices, 2))
    out = diffuse(Tensor(H), ops, np.zeros(2)).data
    phi, mass = ops.eigenvectors, ops.mass
    proj = phi @ (phi.T @ (mass[:, None] * H))
    assert np.abs(out - proj).max() < 1e-10


def test_diffuse_eigenvector_decay(icosahedron_ops):
    # an eigenvector decays by exactly exp(-lambda t)
    i = 4
    t = 0.37
    phi_i = icosahedron_ops.eigenvectors[:, i]
    out = diffuse(Tensor(phi_i[:, None]), icosahedron_ops, np.array([t])).data[:, 0]
    lam = icosahedron_ops.eigenvalues[i]
    assert np.abs(out - np.exp(-lam * t) * phi_i).max() < 1e-6


def test_diffuse_infinite_time_limit(icosphere2_ops, rng):
    H = rng.standard_normal((icosphere2_ops.n_vertices, 3))
    out = diffuse(Tensor(H), icosphere2_ops, np.full(3, 1e6)).data
    mass = icosphere2_ops.mass
    mean = (mass[:, None] * H).sum(axis=0) / mass.sum()
    assert np.abs(out - mean[None, :]).max() < 1e-5


def test_diffuse_mass_conservation(icosphere2_ops, rng):
    H = rng.standard_normal((icosphere2_ops.n_vertices, 4))
    out = diffuse(Tensor(H), icosphere2_ops, np.array([0.0, 0.01, 0.3, 5.0])).data
    mass = icosphere2_ops.mass
    before = (mass[:, None] * H).sum(axis=0)
    after = (mass[:, None] * out).sum(axis=0)
    assert np.abs(after - before).max() < 1e-5 * np.abs(before).max()


def test_diffuse_contraction(icosphere2_ops, rng):
    mass = icosphere2_ops.mass
    phi = icosphere2_ops.eigenvectors
    for t in (0.0, 0.05, 1.0, 100.0):
        H = rng.standard_normal((icosphere2_ops.n_vertices, 2))
        out = diffuse(Tensor(H), icosphere2_ops, np.full(2, t)).data
        proj = phi @ (phi.T @ (mass[:, None] * H))

        def m_norm(x):
            return np.sqrt((mass[:, None] * x * x).sum())

        assert m_norm(out) <= m_norm(proj) + 1e-8


def test_diffuse_rejects_nonfinite_time(icosahedron_ops, rng):
    H = rng.standard_normal((12, 2))
    with pytest.raises(NonFiniteError):
        diffuse(Tensor(H), icosahedron_ops, np.array([0.1, np.nan]))


def test_diffuse_batched_matches_per_frame(icosahedron_ops, rng):
    H = rng.standard_normal((3, 12, 4))
    t = np.abs(rng.standard_normal(4)) * 0.1
    batched = diffuse(Tensor(H), icosahedron_ops, t).data
    for j in range(3):
        single = diffuse(Tensor(H[j]), icosahedron_ops, t).data
        assert np.allclose(batched[j], single, atol=1e-12)


def test_gradient_features_constant_field(icosahedron_ops, rng):
    H = np.ones((12, 3)) * 4.2
    mix = Tensor(rng.standard_normal((3, 3)))
    out = gradient_features(Tensor(H), icosahedron_ops, mix, mix).data
    assert np.abs(out).max() < 1e-10


def test_gradient_features_identity_mix_unit_gradient():
    # flat grid, field x: gradient magnitude 1 everywhere, A = I picks
    # Re(conj g * g) = |g|^2 = 1 -> tanh(1)
    grid = shapes.flat_grid(5, 5, 0.7)
    ops = compute_operators(grid, k=8)
    H = Tensor(grid.vertices[:, :1])
    out = gradient_features(
        H, ops, Tensor(np.eye(1)), Tensor(np.zeros((1, 1)))
    ).data
    assert np.allclose(out, np.tanh(1.0), atol=1e-6)


def test_gradient_features_bounded(icosphere2_ops, rng):
    mix_re = Tensor(rng.standard_normal((5, 5)))
    mix_im = Tensor(rng.standard_normal((5, 5)))
    H = Tensor(rng.standard_normal((icosphere2_ops.n_vertices, 5)) * 0.3)
    out = gradient_features(H, icosphere2_ops, mix_re, mix_im).data
    assert (out > -1).all() and (out < 1).all()
    # float64 tanh may saturate for violent inputs, but never exceeds 1
    H_big = Tensor(rng.standard_normal((icosphere2_ops.n_vertices, 5)) * 50)
    out_big = gradient_features(H_big, icosphere2_ops, mix_re, mix_im).data
    assert np.abs(out_big).max() <= 1.0


def test_block_zero_mlp_is_identity(icosahedron_ops, rng):
    blk = diffusion_block_init(4, rng, init_time=0.05)
    blk.mlp_hidden.weight.data[:] = 0
    blk.mlp_hidden.bias.data[:] = 0
    blk.mlp_out.weight.data[:] = 0
    blk.mlp_out.bias.data[:] = 0
    H = rng.standard_normal((12, 4))
    out = block_forward(Tensor(H), icosahedron_ops, blk).data
    assert np.array_equal(out, H)


def test_block_finite_on_random_inputs(icosahedron_ops, rng):
    blk = diffusion_block_init(6, rng)
    H = rng.uniform(-1, 1, (12, 6))
    out = block_forward(Tensor(H), icosahedron_ops, blk).data
    assert np.isfinite(out).all()


def _permuted_mesh(mesh, perm):
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return Mesh(mesh.vertices[perm], inv[mesh.faces].astype(np.int32))


def test_block_permutation_equivariance(icosahedron, icosahedron_ops, rng):
    blk = diffusion_block_init(5, rng)
    H = rng.standard_normal((12, 5))
    out = block_forward(Tensor(H), icosahedron_ops, blk).data
    perm = rng.permutation(12)
    ops_p = icosahedron_ops.permute(perm)
    out_p = block_forward(Tensor(H[perm]), ops_p, blk).data
    assert np.abs(out_p - out[perm]).max() < 1e-6


def test_encode_shapes_and_zero_blocks(icosahedron, icosahedron_ops, rng):
    h = 16
    enc = EncoderParams(
        inp=linear_init(3, h, rng),
        blocks=[],
        out=linear_zeros(h, h),
    )
    # no blocks, zero out linear: descriptors are exactly zero
    f = dn_encode(icosahedron.vertices, icosahedron_ops, enc).data
    assert f.shape == (12, h)
    assert np.array_equal(f, np.zeros((12, h)))


def test_encode_residual_passthrough(icosahedron, icosahedron_ops, rng):
    # zero every block MLP: the stack reduces to out(in(x))
    cfg = ModelConfig(h=8, k=12, feature_dim=4)
    params = init_model(cfg, seed=0)
    for blk in params.encoder.blocks:
        for lin in (blk.mlp_hidden, blk.mlp_out):
            lin.weight.data[:] = 0
            lin.bias.data[:] = 0
    f = dn_encode(icosahedron.vertices, icosahedron_ops, params.encoder).data
    x = icosahedron.vertices @ params.encoder.inp.weight.data + params.encoder.inp.bias.data
    expected = x @ params.encoder.out.weight.data + params.encoder.out.bias.data
    assert np.allclose(f, expected, atol=1e-12)


def test_encode_vertex_count_mismatch(icosahedron_ops, rng):
    enc = EncoderParams(linear_init(3, 4, rng), [], linear_init(4, 4, rng))
    with pytest.raises(MeshError):
        dn_encode(rng.standard_normal((13, 3)), icosahedron_ops, enc)


def test_decode_zero_init_gives_zero_displacement(icosahedron, icosahedron_ops, rng):
    cfg = ModelConfig(h=8, k=12, feature_dim=4)
    params = init_model(cfg, seed=3)
    F = rng.standard_normal((3, 12, 16))
    disp = dn_decode(Tensor(F), icosahedron_ops, params.decoder).data
    assert disp.shape == (3, 12, 3)
    assert np.array_equal(disp, np.zeros_like(disp))


def test_decode_permutation_equivariance(icosahedron, icosahedron_ops, rng):
    cfg = ModelConfig(h=8, k=12, feature_dim=4)
    params = init_model(cfg, seed=5)
    # randomize the final layer so the output is non-trivial
    params.decoder.out.weight.data = rng.standard_normal(
        params.decoder.out.weight.data.shape
    )
    F = rng.standard_normal((2, 12, 16))
    out = dn_decode(Tensor(F), icosahedron_ops, params.decoder).data
    perm = rng.permutation(12)
    out_p = dn_decode(
        Tensor(F[:, perm]), icosahedron_ops.permute(perm), params.decoder
    ).data
    assert np.abs(out_p - out[:, perm]).max() < 1e-6
