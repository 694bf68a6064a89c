"""Evaluation metrics and diagnostic per-vertex maps.

LVE and MVE use squared Euclidean distances (per-frame max over lip /
all vertices, averaged over frames). FDD compares per-vertex dynamics:
the population standard deviation over frames of the distance from the
neutral position, averaged as a signed ground-truth-minus-prediction
difference over the upper-face mask.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .blocks import dn_encode
from .errors import DataError, MaskError


def _check_shapes(pred, gt):
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if pred.ndim != 3 or pred.shape[2] != 3:
        raise DataError(f"sequences must be (T, V, 3), got {pred.shape}")
    return pred, gt


def lve(pred, gt, lip_mask):
    """Lip vertex error: per frame, the max squared vertex error over the
    lip mask; averaged across frames. Returns (scalar, per-frame trace)."""
    pred, gt = _check_shapes(pred, gt)
    idx = lip_mask.indices
    if len(idx) == 0:
        raise MaskError("empty lip mask")
    err = np.sum((pred[:, idx] - gt[:, idx]) ** 2, axis=-1)
    trace = err.max(axis=1)
    return float(trace.mean()), trace


def mve(pred, gt):
    """Mean vertex error: per frame, the max squared vertex error over all
    vertices; averaged across frames. Returns (scalar, per-frame trace)."""
    pred, gt = _check_shapes(pred, gt)
    err = np.sum((pred - gt) ** 2, axis=-1)
    trace = err.max(axis=1)
    return float(trace.mean()), trace


def dynamics(seq, neutral_vertices):
    """Per-vertex population std over frames of distance-from-neutral."""
    seq = np.asarray(seq)
    d = np.linalg.norm(seq - neutral_vertices[None], axis=-1)  # (T, V)
    return d.std(axis=0)


def fdd(pred, gt, neutral, upper_mask):
    """Upper-face dynamics deviation, signed gt-minus-pred.

    Returns (scalar, per-vertex trace over the mask).
    """
    pred, gt = _check_shapes(pred, gt)
    if pred.shape[0] < 2:
        raise DataError("fdd needs at least 2 frames")
    idx = upper_mask.indices
    if len(idx) == 0:
        raise MaskError("empty upper-face mask")
    trace = dynamics(gt, neutral.vertices)[idx] - dynamics(pred, neutral.vertices)[idx]
    return float(trace.mean()), trace


def motion_heatmap(frames):
    """Per-vertex mean L2 distance between frame 0 and every later frame."""
    frames = np.asarray(frames)
    if frames.shape[0] < 2:
        raise DataError("motion heatmap needs at least 2 frames")
    d = np.linalg.norm(frames[1:] - frames[0][None], axis=-1)
    return d.mean(axis=0)


def descriptor_norm_map(neutral, ops, params):
    """Per-vertex descriptor norms from the geometry encoder, divided by
    their maximum so values lie in (0, 1]."""
    with ad.no_grad():
        f = dn_encode(neutral.vertices, ops, params.encoder).data
    norms = np.linalg.norm(f, axis=1)
    peak = norms.max()
    if peak <= 0:
        raise DataError("all descriptors are zero; norm map is degenerate")
    return norms / peak


@dataclass(frozen=True)
class MetricReport:
    lve: float
    mve: float
    fdd: float
    lve_trace: np.ndarray
    mve_trace: np.ndarray
    fdd_trace: np.ndarray


def evaluate(pred, gt, neutral, lip_mask, upper_mask):
    lve_val, lve_trace = lve(pred, gt, lip_mask)
    mve_val, mve_trace = mve(pred, gt)
    fdd_val, fdd_trace = fdd(pred, gt, neutral, upper_mask)
    return MetricReport(lve_val, mve_val, fdd_val, lve_trace, mve_trace, fdd_trace)


def write_report(report, path_prefix):
    """Write <prefix>.csv (per-frame traces) and <prefix>.txt (summary)."""
    csv_path = path_prefix + ".csv"
    txt_path = path_prefix + ".txt"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "lve", "mve"])
        for j, (a, b) in enumerate(zip(report.lve_trace, report.mve_trace)):
            writer.writerow([j, f"{a:.12e}", f"{b:.12e}"])
    with open(txt_path, "w") as fh:
        fh.write(f"lve_m2: {report.lve:.12e}\n")
        fh.write(f"lve_mm2: {report.lve * 1e6:.12e}\n")
        fh.write(f"mve_m2: {report.mve:.12e}\n")
        fh.write(f"mve_mm2: {report.mve * 1e6:.12e}\n")
        fh.write(f"fdd_m: {report.fdd:.12e}\n")
        fh.write(f"frames: {len(report.lve_trace)}\n")
        fh.write(f"upper_mask_size: {len(report.fdd_trace)}\n")
    return csv_path, txt_path


def export_heatmap(values, mesh, path_prefix):
    """Write <prefix>.txt (one float per line, vertex order) and
    <prefix>.obj with blue-to-red vertex colors over [0, max]."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) != mesh.n_vertices:
        raise DataError(
            f"{len(values)} heatmap values for {mesh.n_vertices} vertices"
        )
    txt_path = path_prefix + ".txt"
    obj_path = path_prefix + ".obj"
    with open(txt_path, "w") as fh:
        for v in values:
            fh.write(f"{v:.12e}\n")
    peak = values.max()
    t = values / peak if peak > 0 else np.zeros_like(values)
    with open(obj_path, "w") as fh:
        for (x, y, z), c in zip(mesh.vertices, t):
            fh.write(f"v {x:.9g} {y:.9g} {z:.9g} {c:.6f} 0.000000 {1.0 - c:.6f}\n")
        for a, b, c3 in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c3 + 1}\n")
    return txt_path, obj_path
