"""Command-line front end.

One subcommand per pipeline stage: scene files, robustness fields,
expert datasets, training, guided sampling, and the benchmark report.
All outputs are byte-stable for fixed seeds except timing columns.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bench import run_benchmark
from .cloud import sample_scene_surfaces
from .errors import StableDropError
from .geom import EPS_CONTACT
from .guide import (BATCH, D_MAX, GAMMA, GUIDE_INTERVAL, T_INFER,
                    GuidanceConfig, sample_placements)
from .planner import generate_dataset
from .render import render_field_svg
from .scenes import SCENE_NAMES, build_scene, default_object, load_scene, \
    save_scene
from .score import TrainConfig, load_checkpoint, save_checkpoint, train
from .statics import robustness_field

POSE_COLUMNS = ["x", "y", "z", "c1x", "c1y", "c1z", "c2x", "c2y", "c2z"]


def _f(x):
    return repr(float(x))


def _write_lines(path, lines):
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii",
                          newline="\n")


def _cmd_robustness(args):
    scene = load_scene(args.scene)
    rng = np.random.default_rng(args.seed)
    samples = sample_scene_surfaces(scene.bodies, args.points, rng)
    values, _ = robustness_field(scene.bodies, samples, workers=args.workers)
    lines = ["x,y,z,nx,ny,nz,body_id,robustness"]
    for i, val in enumerate(values):
        p = samples.points[i]
        n = samples.normals[i]
        r = "INF" if np.isinf(val) else _f(val)
        lines.append(",".join([_f(p[0]), _f(p[1]), _f(p[2]),
                               _f(n[0]), _f(n[1]), _f(n[2]),
                               str(samples.body_ids[i]), r]))
    _write_lines(args.out, lines)
    if args.svg:
        render_field_svg(samples.points, values, args.svg, title=scene.name)
    print(f"{len(values)} points -> {args.out}")
    return 0


def _cmd_scene(args):
    save_scene(build_scene(args.name), args.out)
    print(f"{args.name} -> {args.out}")
    return 0


def _cmd_dataset(args):
    names = list(SCENE_NAMES) if args.scenes == "all" else args.scenes.split(",")
    count = generate_dataset(names, args.per_scene, args.seed, args.out,
                             workers=args.workers)
    print(f"{count} records -> {args.out}")
    return 0


def _cmd_train(args):
    loss_csv = args.loss_csv or f"{args.out}.loss.csv"
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                         lr=args.lr, seed=args.seed, leave_out=args.leave_out,
                         loss_csv=loss_csv)
    ckpt = train(args.data, config)
    save_checkpoint(ckpt, args.out)
    print(f"final loss {ckpt.meta['final_loss']:.6f} -> {args.out}")
    return 0


def _cmd_sample(args):
    ckpt = load_checkpoint(args.model)
    scene = load_scene(args.scene)
    config = GuidanceConfig(gamma=args.gamma, n=args.interval,
                            d_max=args.d_max, t_infer=args.steps,
                            batch=args.batch)
    outcomes = sample_placements(ckpt, scene, default_object(), config,
                                 seed=args.seed, eps=args.eps)
    lines = [",".join(POSE_COLUMNS + ["penetration_free", "stable",
                                      "degenerate"])]
    for out in outcomes:
        lines.append(",".join([_f(v) for v in out.pose]
                              + [str(int(out.penetration_free)),
                                 str(int(out.stable)),
                                 str(int(out.degenerate))]))
    _write_lines(args.out, lines)
    valid = sum(o.valid for o in outcomes)
    print(f"{valid}/{len(outcomes)} valid -> {args.out}")
    return 0


def _cmd_bench(args):
    report = run_benchmark(args.config, args.out)
    for row in report.validity_rows:
        print(f"{row['model']} {row['sampler']}: valid ALL "
              f"{row['valid_all']:.1f}%, V/PF ALL {row['vpf_all']:.1f}%")
    print(f"tables and report -> {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stabledrop",
        description="stable-placement planning: robustness fields, expert "
                    "data, pose diffusion, benchmark reports")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("robustness", help="sample a scene robustness field")
    p.add_argument("--scene", required=True, help="scene file")
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV output")
    p.add_argument("--svg", help="optional heatmap render")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_robustness)

    p = sub.add_parser("scene", help="write a benchmark scene file")
    p.add_argument("--name", required=True, choices=SCENE_NAMES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_scene)

    p = sub.add_parser("dataset", help="generate expert placements")
    p.add_argument("--scenes", default="all",
                   help="'all' or comma-separated scene names")
    p.add_argument("--per-scene", type=int, default=800)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="JSONL output")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_dataset)

    p = sub.add_parser("train", help="fit the placement prior")
    p.add_argument("--data", required=True, help="JSONL dataset")
    p.add_argument("--leave-out", default=None, choices=SCENE_NAMES,
                   help="scene withheld from training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--loss-csv", default=None,
                   help="loss curve CSV (default: <out>.loss.csv)")
    p.add_argument("--out", required=True, help="checkpoint output")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sample", help="reverse-sample guided placements")
    p.add_argument("--model", required=True, help="checkpoint")
    p.add_argument("--scene", required=True, help="scene file")
    p.add_argument("--batch", type=int, default=BATCH)
    p.add_argument("--gamma", type=float, default=GAMMA)
    p.add_argument("--interval", type=int, default=GUIDE_INTERVAL)
    p.add_argument("--steps", type=int, default=T_INFER)
    p.add_argument("--d-max", type=float, default=D_MAX)
    p.add_argument("--eps", type=float, default=EPS_CONTACT,
                   help="validation contact tolerance, m")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="poses CSV")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("bench", help="run the benchmark protocol")
    p.add_argument("--config", required=True, help="TOML config")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StableDropError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
