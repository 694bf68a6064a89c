"""Learnable parameter containers, initialization, and checkpoint I/O.

Checkpoint format ("STPM"): magic, version u32, config echo
(h u32, k u32, n_blocks u32, cell u8, feature_dim u32), tensor count u32,
then per tensor: name_len u16 + utf8 name, ndim u8, dims u32 each, payload
f32 little-endian row-major. Storage is f32; in-memory math is f64, so a
load/save cycle reproduces the file byte for byte.
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import FormatError

CHECKPOINT_MAGIC = b"STPM"
CHECKPOINT_VERSION = 1
_CELL_CODE = {"lstm": 0, "gru": 1}
_CELL_NAME = {v: k for k, v in _CELL_CODE.items()}


@dataclass
class Linear:
    weight: Tensor  # (n_in, n_out)
    bias: Tensor    # (n_out,)


def linear_init(n_in, n_out, rng):
    bound = 1.0 / np.sqrt(n_in)
    return Linear(
        Tensor(rng.uniform(-bound, bound, (n_in, n_out)), requires_grad=True),
        Tensor(rng.uniform(-bound, bound, n_out), requires_grad=True),
    )


def linear_zeros(n_in, n_out):
    return Linear(
        Tensor(np.zeros((n_in, n_out)), requires_grad=True),
        Tensor(np.zeros(n_out), requires_grad=True),
    )


@dataclass
class DiffusionBlockParams:
    """One network block: learned per-channel diffusion times (stored as
    square roots so t = s^2 >= 0), a complex gradient-mixing matrix, and a
    per-vertex MLP [3c -> c -> c]."""

    time_sqrt: Tensor  # (c,)
    mix_re: Tensor     # (c, c)
    mix_im: Tensor     # (c, c)
    mlp_hidden: Linear
    mlp_out: Linear


def diffusion_block_init(c, rng, init_time=1e-2):
    bound = 1.0 / np.sqrt(c)
    return DiffusionBlockParams(
        time_sqrt=Tensor(np.full(c, np.sqrt(init_time)), requires_grad=True),
        mix_re=Tensor(rng.uniform(-bound, bound, (c, c)), requires_grad=True),
        mix_im=Tensor(rng.uniform(-bound, bound, (c, c)), requires_grad=True),
        mlp_hidden=linear_init(3 * c, c, rng),
        mlp_out=linear_init(c, c, rng),
    )


@dataclass
class EncoderParams:
    """Geometry stack: linear 3->h, n blocks at width h, linear h->h."""

    inp: Linear
    blocks: list
    out: Linear


@dataclass
class DecoderParams:
    """Displacement stack: linear 2h->h, n blocks, linear h->3.

    The final linear starts at zero so an untrained model reproduces the
    neutral face exactly.
    """

    inp: Linear
    blocks: list
    out: Linear


@dataclass
class CellParams:
    """One direction of one recurrent layer; gate blocks are concatenated
    along the output axis (i,f,g,o for lstm, r,z,n for gru)."""

    w_ih: Tensor
    w_hh: Tensor
    b_ih: Tensor
    b_hh: Tensor


@dataclass
class BiLayerParams:
    fwd: CellParams
    bwd: CellParams


@dataclass
class RecurrentParams:
    """Stacked bidirectional recurrent layers plus the 2h->h output
    projection producing the temporal latent."""

    layers: list
    proj: Linear
    cell: str
    hidden: int


def cell_init(n_in, hidden, cell, rng):
    n_gates = 4 if cell == "lstm" else 3
    bound = 1.0 / np.sqrt(hidden)

    def t(shape):
        return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)

    return CellParams(
        w_ih=t((n_in, n_gates * hidden)),
        w_hh=t((hidden, n_gates * hidden)),
        b_ih=t(n_gates * hidden),
        b_hh=t(n_gates * hidden),
    )


def recurrent_init(n_in, hidden, n_layers, cell, rng):
    if cell not in _CELL_CODE:
        raise ValueError(f"unknown cell type {cell!r} (use 'lstm' or 'gru')")
    layers = []
    for layer in range(n_layers):
        d = n_in if layer == 0 else 2 * hidden
        layers.append(
            BiLayerParams(cell_init(d, hidden, cell, rng), cell_init(d, hidden, cell, rng))
        )
    return RecurrentParams(
        layers=layers, proj=linear_init(2 * hidden, hidden, rng), cell=cell, hidden=hidden
    )


@dataclass(frozen=True)
class ModelConfig:
    h: int = 32
    k: int = 128
    cell: str = "lstm"
    feature_dim: int = 26
    n_blocks: int = 4
    n_recurrent_layers: int = 3


@dataclass
class ModelParams:
    """Everything learnable, plus the config echo needed to rebuild it."""

    config: ModelConfig
    encoder: EncoderParams
    decoder: DecoderParams
    audio_proj: Linear
    recurrent: RecurrentParams

    def named_parameters(self):
        """Yield (name, Tensor) in a fixed, documented order."""

        def from_linear(prefix, lin):
            yield f"{prefix}.weight", lin.weight
            yield f"{prefix}.bias", lin.bias

        def from_stack(prefix, stack):
            yield from from_linear(f"{prefix}.inp", stack.inp)
            for i, blk in enumerate(stack.blocks):
                p = f"{prefix}.blocks.{i}"
                yield f"{p}.time_sqrt", blk.time_sqrt
                yield f"{p}.mix_re", blk.mix_re
                yield f"{p}.mix_im", blk.mix_im
                yield from from_linear(f"{p}.mlp_hidden", blk.mlp_hidden)
                yield from from_linear(f"{p}.mlp_out", blk.mlp_out)
            yield from from_linear(f"{prefix}.out", stack.out)

        yield from from_stack("encoder", self.encoder)
        yield from from_stack("decoder", self.decoder)
        yield from from_linear("audio_proj", self.audio_proj)
        for i, layer in enumerate(self.recurrent.layers):
            for direction, cell in (("fwd", layer.fwd), ("bwd", layer.bwd)):
                p = f"recurrent.layers.{i}.{direction}"
                yield f"{p}.w_ih", cell.w_ih
                yield f"{p}.w_hh", cell.w_hh
                yield f"{p}.b_ih", cell.b_ih
                yield f"{p}.b_hh", cell.b_hh
        yield from from_linear("recurrent.proj", self.recurrent.proj)

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.zero_grad()


def init_model(config, seed=0, init_time=1e-2):
    """Fresh model parameters; `init_time` should be about the squared mean
    edge length of a representative mesh (local smoothing at step zero)."""
    rng = np.random.default_rng(seed)
    h = config.h

    def stack(c_in, c_out, zero_out):
        inp = linear_init(c_in, h, rng)
        blocks = [diffusion_block_init(h, rng, init_time) for _ in range(config.n_blocks)]
        out = linear_zeros(h, c_out) if zero_out else linear_init(h, c_out, rng)
        return inp, blocks, out

    e_inp, e_blocks, e_out = stack(3, h, zero_out=False)
    d_inp, d_blocks, d_out = stack(2 * h, 3, zero_out=True)
    encoder = EncoderParams(e_inp, e_blocks, e_out)
    decoder = DecoderParams(d_inp, d_blocks, d_out)
    audio_proj = linear_init(config.feature_dim, h // 2, rng)
    recurrent = recurrent_init(h // 2, h, config.n_recurrent_layers, config.cell, rng)
    return ModelParams(config, encoder, decoder, audio_proj, recurrent)


def save_checkpoint(params, path):
    names = list(params.named_parameters())
    cfg = params.config
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(
            struct.pack(
                "<IIIBI",
                cfg.h,
                cfg.k,
                cfg.n_blocks,
                _CELL_CODE[cfg.cell],
                cfg.feature_dim,
            )
        )
        fh.write(struct.pack("<I", len(names)))
        for name, tensor in names:
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            shape = tensor.data.shape
            fh.write(struct.pack("<B", len(shape)))
            for d in shape:
                fh.write(struct.pack("<I", d))
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())


def load_checkpoint(path):
    def read(fh, n, what):
        buf = fh.read(n)
        if len(buf) != n:
            raise FormatError(f"checkpoint truncated while reading {what}")
        return buf

    with open(path, "rb") as fh:
        if read(fh, 4, "magic") != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad magic, not a model checkpoint")
        (version,) = struct.unpack("<I", read(fh, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: checkpoint version {version} unsupported")
        h, k, n_blocks, cell_code, feature_dim = struct.unpack(
            "<IIIBI", read(fh, 17, "config")
        )
        if cell_code not in _CELL_NAME:
            raise FormatError(f"{path}: unknown cell code {cell_code}")
        config = ModelConfig(
            h=h, k=k, cell=_CELL_NAME[cell_code], feature_dim=feature_dim, n_blocks=n_blocks
        )
        params = init_model(config, seed=0)
        table = dict(params.named_parameters())
        (count,) = struct.unpack("<I", read(fh, 4, "tensor count"))
        if count != len(table):
            raise FormatError(
                f"{path}: {count} tensors stored, model expects {len(table)}"
            )
        for _ in range(count):
            (name_len,) = struct.unpack("<H", read(fh, 2, "name"))
            name = read(fh, name_len, "name").decode()
            if name not in table:
                raise FormatError(f"{path}: unexpected tensor {name!r}")
            (ndim,) = struct.unpack("<B", read(fh, 1, "ndim"))
            shape = tuple(
                struct.unpack("<I", read(fh, 4, "dims"))[0] for _ in range(ndim)
            )
            tensor = table[name]
            if shape != tensor.data.shape:
                raise FormatError(
                    f"{path}: tensor {name!r} has shape {shape}, expected {tensor.data.shape}"
                )
            n = int(np.prod(shape)) if shape else 1
            payload = read(fh, 4 * n, name)
            tensor.data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(shape)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after checkpoint payload")
    return params


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def params_sha256(params):
    """Content hash of a parameter set as it would be checkpointed (f32)."""
    cfg = params.config
    h = hashlib.sha256()
    h.update(
        struct.pack(
            "<IIIBI", cfg.h, cfg.k, cfg.n_blocks, _CELL_CODE[cfg.cell], cfg.feature_dim
        )
    )
    for name, tensor in params.named_parameters():
        h.update(name.encode())
        h.update(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
    return h.hexdigest()
