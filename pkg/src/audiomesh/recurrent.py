"""Bidirectional gated recurrent stack over audio frames.

Standard LSTM/GRU recurrences written directly against the autodiff
engine; forward and backward passes over time are concatenated per frame,
three layers are stacked, and a final linear map projects the 2h-wide
bidirectional state to the h-dim temporal latent.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NonFiniteError


def _check_finite(h, layer, direction, frame):
    if not np.isfinite(h.data).all():
        raise NonFiniteError(
            f"non-finite recurrent state at layer {layer}, {direction} pass, frame {frame}"
        )


def _lstm_direction(x_gates, cell, hidden, layer, direction):
    T = x_gates.data.shape[0]
    H = hidden
    h = Tensor(np.zeros((1, H)))
    c = Tensor(np.zeros((1, H)))
    outs = []
    for t in range(T):
        z = ad.add(x_gates[t : t + 1], ad.add(ad.matmul(h, cell.w_hh), cell.b_hh))
        i = ad.sigmoid(z[:, 0 * H : 1 * H])
        f = ad.sigmoid(z[:, 1 * H : 2 * H])
        g = ad.tanh(z[:, 2 * H : 3 * H])
        o = ad.sigmoid(z[:, 3 * H : 4 * H])
        c = ad.add(ad.mul(f, c), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        _check_finite(h, layer, direction, t)
        outs.append(h[0])
    return outs


def _gru_direction(x_gates, cell, hidden, layer, direction):
    T = x_gates.data.shape[0]
    H = hidden
    h = Tensor(np.zeros((1, H)))
    outs = []
    for t in range(T):
        zx = x_gates[t : t + 1]
        zh = ad.add(ad.matmul(h, cell.w_hh), cell.b_hh)
        r = ad.sigmoid(ad.add(zx[:, 0 * H : 1 * H], zh[:, 0 * H : 1 * H]))
        z = ad.sigmoid(ad.add(zx[:, 1 * H : 2 * H], zh[:, 1 * H : 2 * H]))
        n = ad.tanh(ad.add(zx[:, 2 * H : 3 * H], ad.mul(r, zh[:, 2 * H : 3 * H])))
        h = ad.add(ad.mul(ad.add(ad.mul(z, -1.0), 1.0), n), ad.mul(z, h))
        _check_finite(h, layer, direction, t)
        outs.append(h[0])
    return outs


_DIRECTIONS = {"lstm": _lstm_direction, "gru": _gru_direction}


def _run_direction(x, cell_params, cell_type, hidden, layer, direction):
    # input gate contributions for every frame in one matmul
    x_gates = ad.add(ad.matmul(x, cell_params.w_ih), cell_params.b_ih)
    return _DIRECTIONS[cell_type](x_gates, cell_params, hidden, layer, direction)


def recurrent_forward(a, params):
    """Run the stacked bidirectional recurrence.

    a is a (T, h/2) Tensor or array of projected audio frames; returns the
    (T, h) temporal latent after the output projection.
    """
    x = ad.as_tensor(a)
    T = x.data.shape[0]
    H = params.hidden
    for layer_idx, layer in enumerate(params.layers):
        fwd = _run_direction(x, layer.fwd, params.cell, H, layer_idx, "forward")
        rev_in = ad.stack([x[T - 1 - t] for t in range(T)], axis=0) if T > 1 else x
        bwd_rev = _run_direction(rev_in, layer.bwd, params.cell, H, layer_idx, "backward")
        bwd = [bwd_rev[T - 1 - t] for t in range(T)]
        x = ad.stack(
            [ad.concat([f, b], axis=-1) for f, b in zip(fwd, bwd)], axis=0
        )
    return ad.add(ad.matmul(x, params.proj.weight), params.proj.bias)


def project(features, proj):
    """Affine per-frame projection of raw audio features to h/2 dims."""
    x = ad.as_tensor(features)
    if x.data.shape[-1] != proj.weight.data.shape[0]:
        raise ValueError(
            f"feature dim {x.data.shape[-1]} != projection input "
            f"{proj.weight.data.shape[0]}"
        )
    return ad.add(ad.matmul(x, proj.weight), proj.bias)
