"""Command-line surface.

Subcommands: gen-data, train, eval, dct, smooth, inspect-adjacency,
export-trajectory.  Exit codes: 0 success, 2 configuration error,
3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from .errors import ConfigError, DataError, DivergenceError
from .frequency import dct_forward, dct_inverse, dct_matrix
from .skeleton import (build_hybrid_adjacency, human36m_skeleton, khop_adjacency,
                       load_skeleton, save_skeleton, shortest_path_hops, symmetric_matrix)
from .training import TrainConfig, evaluate, train


def _matrix_csv(matrix: np.ndarray) -> str:
    return "\n".join(",".join(format(v, ".6g") for v in row) for row in matrix)


def _load_skeleton_arg(path: str | None):
    return load_skeleton(path) if path else human36m_skeleton()


def cmd_gen_data(args) -> int:
    skeleton = _load_skeleton_arg(args.skeleton)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        seq = data_mod.generate_motion(skeleton, args.frames, fps=args.fps, seed=args.seed + i)
        data_mod.write_sequence(seq, out / f"seq_{i:03d}.pseq")
    save_skeleton(skeleton, out / "skeleton.json")
    manifest = {"count": args.count, "frames": args.frames, "fps": args.fps,
                "seed": args.seed, "skeleton": "skeleton.json"}
    with open(out / "dataset.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    print(f"wrote {args.count} sequences to {out}")
    return 0


def _train_config(args) -> TrainConfig:
    if args.config:
        cfg = TrainConfig.from_json_file(args.config)
    else:
        cfg = TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.stage is not None:
        overrides = {"stage": args.stage}
        doc = json.loads(cfg.to_json())
        doc.update(overrides)
        cfg = TrainConfig.from_dict(doc)
    for name, value in (("frames", args.frames), ("embed_dim", args.dim),
                        ("depth", args.depth), ("hop_count", args.hops),
                        ("lambda_f", args.lambda_f)):
        if value is not None:
            doc = json.loads(cfg.to_json())
            doc["model"][name] = value
            if name == "hop_count":
                doc["model"]["hop_weights"] = None
            if doc.get("preliminary_model") and name in ("frames", "embed_dim", "hop_count", "lambda_f"):
                doc["preliminary_model"][name] = value
                if name == "hop_count":
                    doc["preliminary_model"]["hop_weights"] = None
            cfg = TrainConfig.from_dict(doc)
    if args.data:
        cfg.data_dir = args.data
    if args.out:
        cfg.out_dir = args.out
    if args.epochs is not None:
        cfg.epochs = args.epochs
    return cfg


def cmd_train(args) -> int:
    cfg = _train_config(args)
    result = train(cfg)
    print(f"best validation MPJPE: {result.best_val_mpjpe_mm:.3f} mm")
    print(f"checkpoints: {result.best_checkpoint} / {result.last_checkpoint}")
    print(f"loss log: {result.log_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = TrainConfig.from_json_file(args.config)
    report = evaluate(cfg, checkpoint=args.checkpoint, data_dir=args.data,
                      central_frame=args.central_frame, allow_scale=not args.no_scale)
    print(json.dumps(report.to_dict(), indent=2))
    if args.per_action_csv:
        with open(args.per_action_csv, "w", encoding="utf-8") as f:
            f.write("action,mpjpe_mm,p_mpjpe_mm,mpjve_mm_per_frame\n")
            for name, entry in report.per_action.items():
                f.write(f"{name},{entry['mpjpe_mm']:.6f},{entry['p_mpjpe_mm']:.6f},"
                        f"{entry.get('mpjve_mm_per_frame', '')}\n")
    return 0


def _read_trajectories(path) -> tuple:
    """CSV of one column per trajectory; optional non-numeric header."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty trajectory file")
    header = None
    try:
        float(lines[0].split(",")[0])
    except ValueError:
        header = lines[0]
        lines = lines[1:]
    rows = [[float(v) for v in ln.split(",")] for ln in lines]
    return header, np.asarray(rows, dtype=np.float64)


def _write_trajectories(header, values: np.ndarray, out_path) -> None:
    target = open(out_path, "w", encoding="utf-8") if out_path else sys.stdout
    try:
        if header:
            target.write(header + "\n")
        for row in np.atleast_2d(values):
            target.write(",".join(format(v, ".9g") for v in row) + "\n")
    finally:
        if out_path:
            target.close()


def cmd_dct(args) -> int:
    header, values = _read_trajectories(args.infile)
    frames = args.frames or values.shape[0]
    if values.shape[0] < frames:
        raise DataError(f"{args.infile}: {values.shape[0]} rows but --T {frames}")
    basis = dct_matrix(frames)
    coeffs = dct_forward(values[:frames], basis)
    _write_trajectories(header, coeffs, args.out)
    return 0


def cmd_smooth(args) -> int:
    header, values = _read_trajectories(args.infile)
    frames = values.shape[0]
    if args.keep < 1 or args.keep > frames:
        raise ConfigError(f"--keep must lie in [1, {frames}], got {args.keep}")
    basis = dct_matrix(frames)
    coeffs = dct_forward(values, basis)
    coeffs[args.keep :] = 0.0
    _write_trajectories(header, dct_inverse(coeffs, basis), args.out)
    return 0


def cmd_inspect_adjacency(args) -> int:
    skeleton = _load_skeleton_arg(args.skeleton)
    hops = shortest_path_hops(skeleton)
    for k in range(1, args.hops + 1):
        print(f"# k-hop adjacency, k={k}")
        print(_matrix_csv(khop_adjacency(hops, k)))
    print("# symmetric pairs")
    print(_matrix_csv(symmetric_matrix(skeleton)))
    hybrid = build_hybrid_adjacency(skeleton, hop_count=args.hops)
    print(f"# hybrid matrix (hop weights {hybrid.hop_weights}, sym weight {hybrid.sym_weight})")
    print(_matrix_csv(hybrid.skeletal))
    return 0


def cmd_export_trajectory(args) -> int:
    seq = data_mod.read_sequence(args.infile)
    data_mod.export_csv(seq, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poselift",
                                     description="2D-to-3D pose lifting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic motion sequences")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--frames", type=int, default=27)
    p.add_argument("--fps", type=float, default=50.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skeleton", default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one stage")
    p.add_argument("--config", default=None, help="TrainConfig JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--stage", choices=["preliminary", "main"], default=None)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--dim", type=int, default=None, help="embedding dimension")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--hops", type=int, default=None)
    p.add_argument("--lambda-f", dest="lambda_f", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--central-frame", action="store_true")
    p.add_argument("--no-scale", action="store_true",
                   help="strictly rigid alignment in the Procrustes protocol")
    p.add_argument("--per-action-csv", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dct", help="transform trajectory CSV columns")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--T", dest="frames", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dct)

    p = sub.add_parser("smooth", help="reconstruct from the lowest frequencies")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--keep", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("inspect-adjacency", help="print adjacency matrices as CSV")
    p.add_argument("--skeleton", default=None)
    p.add_argument("--hops", type=int, default=2)
    p.set_defaults(func=cmd_inspect_adjacency)

    p = sub.add_parser("export-trajectory", help="per-joint-per-axis CSV from a sequence")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_trajectory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
