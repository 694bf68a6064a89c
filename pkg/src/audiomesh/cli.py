"""Command-line interface.

Subcommands: ops, extract, train, animate, eval, heatmap, synth.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
`--threads 1` pins the BLAS pool and guarantees bitwise reproducibility.
"""

import argparse
import configparser
import os
import sys

from . import __version__
from .audio import MfccConfig, load_features, load_wav, mfcc_extract, save_features
from .datasets import load_manifest, synth_dataset, write_dataset
from .errors import DataError, NumericalError
from .meshio import load_mask, load_mesh, load_sequence
from .metrics import evaluate, export_heatmap, motion_heatmap, write_report
from .model import animate_to_dir, write_run_manifest
from .operators import cache_load, cache_store, compute_operators, content_hash, default_k
from .params import ModelConfig, file_sha256, load_checkpoint
from .training import LossWeights, TrainConfig


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _build_parser():
    parser = _Parser(prog="audiomesh", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads", type=int, default=0,
        help="BLAS thread cap; 1 guarantees bitwise reproducibility (0 = library default)",
    )

    p = sub.add_parser("ops", parents=[common], help="precompute a surface operator cache")
    p.add_argument("mesh", help="neutral mesh (.obj or .ply)")
    p.add_argument("--k", type=int, default=128, help="eigenbasis size (clipped to V-1)")
    p.add_argument("--out", required=True, help="output cache file")

    p = sub.add_parser("extract", parents=[common], help="mel-cepstral features from a WAV file")
    p.add_argument("--wav", required=True, help="16-bit PCM mono WAV input")
    p.add_argument("--out", required=True, help="output feature file")
    p.add_argument("--window-ms", type=float, default=25.0, help="analysis window (ms)")
    p.add_argument("--hop-ms", type=float, default=10.0, help="hop between frames (ms)")

    p = sub.add_parser("train", parents=[common], help="train a model from a manifest")
    p.add_argument("--manifest", required=True, help="dataset manifest (INI)")
    p.add_argument("--config", help="INI config file; flags override its values")
    p.add_argument("--out-dir", required=True, help="checkpoints and loss curve go here")
    p.add_argument("--epochs", type=int, help="training epochs (default 200)")
    p.add_argument("--lr", type=float, help="learning rate (default 1e-4)")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--k", type=int, help="eigenbasis size (default 128)")
    p.add_argument("--hidden", type=int, help="network width h (default 32)")
    p.add_argument("--cell", choices=["lstm", "gru"], help="recurrent cell (default lstm)")
    p.add_argument("--w-mse", type=float, help="MSE loss weight (default 1)")
    p.add_argument("--w-mask", type=float, help="lip-masked loss weight (default 0)")
    p.add_argument("--w-vel", type=float, help="velocity loss weight (default 0)")

    p = sub.add_parser("animate", parents=[common], help="animate a neutral mesh from features")
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--neutral", required=True, help="neutral mesh to animate")
    p.add_argument("--features", required=True, help="audio feature file")
    p.add_argument("--fps", type=float, default=30.0, help="output frame rate (default 30)")
    p.add_argument("--out-dir", required=True, help="frame files and manifest go here")
    p.add_argument("--ops", help="operator cache path (reused when fresh, else rebuilt)")

    p = sub.add_parser("eval", parents=[common], help="metrics between two frame directories")
    p.add_argument("--pred-dir", required=True, help="predicted frame_*.obj directory")
    p.add_argument("--gt-dir", required=True, help="ground-truth frame_*.obj directory")
    p.add_argument("--neutral", required=True, help="neutral mesh")
    p.add_argument("--lip-mask", required=True, help="lip vertex index file")
    p.add_argument("--upper-mask", required=True, help="upper-face vertex index file")
    p.add_argument("--report", required=True, help="report path prefix (.csv/.txt added)")

    p = sub.add_parser("heatmap", parents=[common], help="per-vertex motion map of a sequence")
    p.add_argument("--seq-dir", required=True, help="frame_*.obj directory")
    p.add_argument("--out", required=True, help="output path prefix (.txt/.obj added)")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=0, help="dataset seed")
    p.add_argument("--n", type=int, default=4, help="number of samples")
    p.add_argument("--out-dir", required=True, help="dataset root directory")
    return parser


def _limit_threads(n):
    if n and n > 0:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=n)


def _read_train_config(args):
    values = {
        "epochs": 200,
        "lr": 1e-4,
        "seed": 0,
        "k": 128,
        "hidden": 32,
        "cell": "lstm",
        "w_mse": 1.0,
        "w_mask": 0.0,
        "w_vel": 0.0,
        "grad_clip": 1.0,
    }
    if args.config:
        if not os.path.exists(args.config):
            raise DataError(f"config file not found: {args.config}")
        cp = configparser.ConfigParser()
        cp.read(args.config)
        if "train" in cp:
            sec = cp["train"]
            for key, cast in (
                ("epochs", int), ("lr", float), ("seed", int), ("k", int),
                ("hidden", int), ("w_mse", float), ("w_mask", float),
                ("w_vel", float), ("grad_clip", float),
            ):
                if key in sec:
                    values[key] = cast(sec[key])
            if "cell" in sec:
                values["cell"] = sec["cell"]
    for key in ("epochs", "lr", "seed", "k", "hidden", "cell", "w_mse", "w_mask", "w_vel"):
        arg = getattr(args, key, None)
        if arg is not None:
            values[key] = arg
    return values


def _cmd_ops(args):
    mesh = load_mesh(args.mesh)
    k = default_k(mesh.n_vertices, args.k)
    ops = compute_operators(mesh, k)
    cache_store(ops, mesh, args.out)
    print(f"mesh: {args.mesh}")
    print(f"vertices: {mesh.n_vertices}")
    print(f"k: {k}")
    print(f"mesh_hash: {content_hash(mesh, k).hex()}")
    print(f"cache: {args.out}")
    return 0


def _cmd_extract(args):
    samples, rate = load_wav(args.wav)
    cfg = MfccConfig(window_ms=args.window_ms, hop_ms=args.hop_ms)
    features = mfcc_extract(samples, rate, cfg)
    save_features(features, args.out)
    print(f"wav: {args.wav}")
    print(f"frames: {features.n_frames}")
    print(f"dim: {features.dim}")
    print(f"source_rate: {features.source_rate}")
    print(f"out_hash: {file_sha256(args.out)}")
    return 0


def _cmd_train(args):
    values = _read_train_config(args)
    samples = load_manifest(args.manifest)
    model_cfg = ModelConfig(
        h=values["hidden"], k=values["k"], cell=values["cell"],
        feature_dim=samples[0].features.dim,
    )
    cfg = TrainConfig(
        epochs=values["epochs"],
        learning_rate=values["lr"],
        seed=values["seed"],
        k=values["k"],
        grad_clip=values["grad_clip"],
        weights=LossWeights(values["w_mse"], values["w_mask"], values["w_vel"]),
        model=model_cfg,
    )
    from .training import train

    result = train(samples, cfg, args.out_dir)
    write_run_manifest(
        os.path.join(args.out_dir, "run_manifest.txt"),
        [
            ("command", "train"),
            ("manifest", os.path.abspath(args.manifest)),
            ("n_samples", len(samples)),
            ("epochs", cfg.epochs),
            ("learning_rate", cfg.learning_rate),
            ("seed", cfg.seed),
            ("k", cfg.k),
            ("best_val_mse", f"{result.best_val:.3e}"),
            ("best_checkpoint_hash", file_sha256(result.best_path)),
        ],
    )
    print(f"trained {cfg.epochs} epochs on {len(samples)} samples")
    print(f"best: {result.best_path}")
    print(f"last: {result.last_path}")
    print(f"curve: {result.curve_path}")
    return 0


def _cmd_animate(args):
    params = load_checkpoint(args.model)
    neutral = load_mesh(args.neutral)
    if args.ops and os.path.exists(args.ops):
        cached = cache_load(args.ops)
        if cached.n_vertices != neutral.n_vertices:
            raise DataError(
                f"operator cache {args.ops} was built for {cached.n_vertices} "
                f"vertices but the neutral mesh has {neutral.n_vertices}"
            )
    features = load_features(args.features)
    seq = animate_to_dir(
        neutral, features, params, args.out_dir, fps=args.fps, cache_path=args.ops
    )
    print(f"wrote {seq.n_frames} frames to {args.out_dir}")
    return 0


def _cmd_eval(args):
    pred, pred_faces = load_sequence(args.pred_dir)
    gt, gt_faces = load_sequence(args.gt_dir)
    neutral = load_mesh(args.neutral)
    if pred.shape != gt.shape:
        raise DataError(
            f"prediction {pred.shape} and ground truth {gt.shape} differ in shape"
        )
    if pred.shape[1] != neutral.n_vertices:
        raise DataError(
            f"sequences have {pred.shape[1]} vertices, neutral has {neutral.n_vertices}"
        )
    lip = load_mask(args.lip_mask, "lip")
    upper = load_mask(args.upper_mask, "upper_face")
    lip.check_against(neutral.n_vertices)
    upper.check_against(neutral.n_vertices)
    report = evaluate(pred, gt, neutral, lip, upper)
    csv_path, txt_path = write_report(report, args.report)
    write_run_manifest(
        args.report + ".manifest.txt",
        [
            ("command", "eval"),
            ("pred_dir", os.path.abspath(args.pred_dir)),
            ("gt_dir", os.path.abspath(args.gt_dir)),
            ("frames", pred.shape[0]),
            ("lve_m2", f"{report.lve:.12e}"),
            ("mve_m2", f"{report.mve:.12e}"),
            ("fdd_m", f"{report.fdd:.12e}"),
        ],
    )
    print(f"lve: {report.lve:.6e}")
    print(f"mve: {report.mve:.6e}")
    print(f"fdd: {report.fdd:.6e}")
    print(f"report: {csv_path} {txt_path}")
    return 0


def _cmd_heatmap(args):
    frames, faces = load_sequence(args.seq_dir)
    values = motion_heatmap(frames)
    from .meshio import Mesh

    txt_path, obj_path = export_heatmap(values, Mesh(frames[0], faces), args.out)
    print(f"heatmap: {txt_path} {obj_path}")
    return 0


def _cmd_synth(args):
    samples = synth_dataset(args.seed, args.n)
    manifest = write_dataset(samples, args.out_dir)
    write_run_manifest(
        os.path.join(args.out_dir, "run_manifest.txt"),
        [
            ("command", "synth"),
            ("seed", args.seed),
            ("n_samples", args.n),
            ("manifest", os.path.abspath(manifest)),
            ("sample_hashes", ",".join(s.content_hash()[:16] for s in samples)),
        ],
    )
    print(f"manifest: {manifest}")
    return 0


_COMMANDS = {
    "ops": _cmd_ops,
    "extract": _cmd_extract,
    "train": _cmd_train,
    "animate": _cmd_animate,
    "eval": _cmd_eval,
    "heatmap": _cmd_heatmap,
    "synth": _cmd_synth,
}


def run(argv):
    """Entry point returning an exit code (0/1/2/3)."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr)
        return 1
    try:
        _limit_threads(getattr(args, "threads", 0))
        return _COMMANDS[args.command](args)
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
