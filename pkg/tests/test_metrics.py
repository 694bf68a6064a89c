import numpy as np
import pytest

from audiomesh import shapes
from audiomesh.errors import DataError, MaskError
from audiomesh.meshio import Mesh, VertexMask
from audiomesh.metrics import (
    descriptor_norm_map,
    evaluate,
    export_heatmap,
    fdd,
    lve,
    motion_heatmap,
    mve,
    write_report,
)

from oracles import brute_force_fdd, brute_force_lve, brute_force_mve


def mask(idx):
    return VertexMask(np.asarray(idx), "lip")


def test_lve_exact_cases(rng):
    gt = rng.standard_normal((1, 100, 3))
    pred = gt.copy()
    m = mask(range(10))
    assert lve(pred, gt, m)[0] == 0.0
    pred[0, 3, 0] += 1e-3  # lip vertex off by 1 mm
    assert lve(pred, gt, m)[0] == pytest.approx(1e-6, rel=1e-12)


def test_lve_two_frame_average():
    gt = np.zeros((2, 5, 3))
    pred = np.zeros((2, 5, 3))
    pred[0, 1, 0] = 1e-3   # per-frame max 1e-6
    pred[1, 2, 1] = 2e-3   # per-frame max 4e-6
    val, trace = lve(pred, gt, mask(range(5)))
    assert np.allclose(trace, [1e-6, 4e-6])
    assert val == pytest.approx(2.5e-6, rel=1e-12)


def test_mve_and_mask_distinction(rng):
    gt = np.zeros((1, 10, 3))
    pred = np.zeros((1, 10, 3))
    pred[0, 7, 2] = 1e-3  # not in the lip mask
    m = mask([0, 1, 2])
    assert lve(pred, gt, m)[0] == 0.0
    assert mve(pred, gt)[0] == pytest.approx(1e-6, rel=1e-12)


def test_mve_uniform_offset(rng):
    gt = rng.standard_normal((4, 20, 3))
    d = np.array([1e-3, -2e-3, 0.5e-3])
    pred = gt + d
    assert mve(pred, gt)[0] == pytest.approx(np.sum(d ** 2), rel=1e-12)


def test_fdd_hand_example():
    # gt oscillates one masked vertex at distances {0, 2e-3} from neutral:
    # population std 1e-3; mask of 5 vertices -> mean 2e-4
    V = 8
    neutral = Mesh(
        np.concatenate([np.zeros((1, 3)), np.eye(3), np.random.default_rng(0).standard_normal((4, 3))]),
        np.array([[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]], dtype=np.int32),
    )
    gt = np.tile(neutral.vertices, (2, 1, 1))
    pred = gt.copy()
    gt[1, 0, 0] += 2e-3  # frame distances 0 and 2e-3
    upper = VertexMask(np.arange(5), "upper_face")
    val, trace = fdd(pred, gt, neutral, upper)
    assert val == pytest.approx(2e-4, rel=1e-12)
    assert len(trace) == 5


def test_fdd_sign_convention(rng):
    neutral = shapes.icosahedron()
    gt = np.tile(neutral.vertices, (3, 1, 1))
    pred = gt.copy()
    pred[1] *= 1.01  # prediction more dynamic than static gt
    upper = VertexMask(np.arange(6), "upper_face")
    assert fdd(pred, gt, neutral, upper)[0] < 0


def test_metrics_match_brute_force(rng):
    T, V = 5, 50
    gt = rng.standard_normal((T, V, 3))
    pred = gt + 0.01 * rng.standard_normal((T, V, 3))
    neutral_verts = rng.standard_normal((V, 3))
    lip_idx = sorted(rng.choice(V, size=8, replace=False))
    upper_idx = sorted(rng.choice(V, size=11, replace=False))

    assert lve(pred, gt, mask(lip_idx))[0] == pytest.approx(
        brute_force_lve(pred, gt, lip_idx), abs=1e-12
    )
    assert mve(pred, gt)[0] == pytest.approx(brute_force_mve(pred, gt), abs=1e-12)

    neutral = Mesh.__new__(Mesh)
    object.__setattr__(neutral, "vertices", neutral_verts)
    object.__setattr__(neutral, "faces", np.zeros((0, 3), dtype=np.int32))
    got = fdd(pred, gt, neutral, VertexMask(np.asarray(upper_idx), "upper_face"))[0]
    assert got == pytest.approx(
        brute_force_fdd(pred, gt, neutral_verts, upper_idx), abs=1e-12
    )


def test_lve_bounded_by_mve(rng):
    for _ in range(10):
        gt = rng.standard_normal((4, 30, 3))
        pred = gt + 0.1 * rng.standard_normal((4, 30, 3))
        m = mask(sorted(rng.choice(30, size=6, replace=False)))
        _, lve_trace = lve(pred, gt, m)
        _, mve_trace = mve(pred, gt)
        assert (lve_trace <= mve_trace + 1e-15).all()


def test_metric_scale_covariance(rng):
    s = 3.0
    gt = rng.standard_normal((4, 20, 3))
    pred = gt + 0.01 * rng.standard_normal((4, 20, 3))
    neutral_verts = rng.standard_normal((20, 3))
    neutral = Mesh.__new__(Mesh)
    object.__setattr__(neutral, "vertices", neutral_verts)
    object.__setattr__(neutral, "faces", np.zeros((0, 3), dtype=np.int32))
    neutral_s = Mesh.__new__(Mesh)
    object.__setattr__(neutral_s, "vertices", neutral_verts * s)
    object.__setattr__(neutral_s, "faces", np.zeros((0, 3), dtype=np.int32))
    m = mask(range(5))
    upper = VertexMask(np.arange(5, 12), "upper_face")

    assert lve(pred * s, gt * s, m)[0] == pytest.approx(s ** 2 * lve(pred, gt, m)[0])
    assert mve(pred * s, gt * s)[0] == pytest.approx(s ** 2 * mve(pred, gt)[0])
    assert fdd(pred * s, gt * s, neutral_s, upper)[0] == pytest.approx(
        s * fdd(pred, gt, neutral, upper)[0]
    )


def test_error_conditions(rng):
    gt = np.zeros((1, 5, 3))
    with pytest.raises(DataError):
        mve(np.zeros((2, 5, 3)), gt)
    with pytest.raises(DataError):
        fdd(gt, gt, shapes.icosahedron(), VertexMask(np.arange(3), "upper_face"))


def test_motion_heatmap(rng):
    V = 10
    frames = np.zeros((4, V, 3))
    assert np.array_equal(motion_heatmap(frames), np.zeros(V))
    frames[1:, 3, 0] = 2e-3  # distance 2e-3 at every frame j >= 1
    hm = motion_heatmap(frames)
    assert hm.shape == (V,)
    assert hm[3] == pytest.approx(2e-3, rel=1e-12)
    assert hm[0] == 0.0
    with pytest.raises(DataError):
        motion_heatmap(frames[:1])


def test_descriptor_norm_map(icosahedron, icosahedron_ops, rng):
    from audiomesh.params import ModelConfig, init_model

    params = init_model(ModelConfig(h=8, k=12, feature_dim=4), seed=0)
    values = descriptor_norm_map(icosahedron, icosahedron_ops, params)
    assert values.shape == (12,)
    assert values.max() == pytest.approx(1.0)
    assert (values > 0).all()
    # permutation equivariance of the map
    perm = rng.permutation(12)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(12)
    permuted_mesh = Mesh(icosahedron.vertices[perm], inv[icosahedron.faces].astype(np.int32))
    values_p = descriptor_norm_map(permuted_mesh, icosahedron_ops.permute(perm), params)
    assert np.allclose(values_p, values[perm], atol=1e-9)


def test_report_and_heatmap_export(tmp_path, rng, icosahedron):
    gt = rng.standard_normal((3, 12, 3))
    pred = gt + 0.01 * rng.standard_normal((3, 12, 3))
    report = evaluate(
        pred, gt, icosahedron,
        VertexMask(np.arange(4), "lip"), VertexMask(np.arange(4, 9), "upper_face"),
    )
    csv_path, txt_path = write_report(report, str(tmp_path / "report"))
    text = open(txt_path).read()
    assert "lve_m2" in text and "fdd_m" in text
    lines = open(csv_path).read().strip().splitlines()
    assert len(lines) == 4  # header + 3 frames

    values = motion_heatmap(np.concatenate([icosahedron.vertices[None], gt]))
    txt, obj = export_heatmap(values, icosahedron, str(tmp_path / "hm"))
    assert len(open(txt).read().splitlines()) == 12
    first = open(obj).read().splitlines()[0].split()
    assert first[0] == "v" and len(first) == 7  # x y z r g b
