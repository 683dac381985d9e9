"""Sample placements from a checkpoint, with and without guidance.

Prefers the packaged desk-scale model (models/table-out.ckpt) and falls
back to the overfit miniature from train_small.py. Draws one batch per
sampler on the model's held-out scene and compares validity and
robustness of what came out.
"""

import pathlib

import numpy as np

from stabledrop import (
    GuidanceConfig,
    build_scene,
    default_object,
    load_checkpoint,
    sample_placements,
)

BATCH = 8
SEED = 0
EPS = 0.01   # bench-style contact slack for scoring the samples


def summarize(tag, outcomes):
    valid = [o for o in outcomes if o.valid]
    pen_free = sum(o.penetration_free for o in outcomes)
    print(f"{tag}: {len(valid)}/{len(outcomes)} valid, "
          f"{pen_free} penetration-free, "
          f"{sum(o.degenerate for o in outcomes)} degenerate")
    for o in valid[:3]:
        x, y, z = o.pose[:3]
        print(f"  ({x:+.2f}, {y:+.2f}, {z:.2f})  "
              f"min/median robustness {o.min_robustness:.2f}"
              f"/{o.median_robustness:.2f} N")
    if valid:
        best = max(v.min_robustness for v in valid)
        print(f"  best min robustness {best:.2f} N")
    return valid


def main():
    root = pathlib.Path(__file__).parent
    packaged = root.parent / "models" / "table-out.ckpt"
    mini = root / "out" / "mini.ckpt"
    path = packaged if packaged.exists() else mini
    if not path.exists():
        raise SystemExit("no checkpoint; run train_small.py first")

    ckpt = load_checkpoint(path)
    scene = build_scene(ckpt.meta["leave_out"])
    obj = default_object()
    print(f"model {path.name} (left out '{scene.name}', "
          f"{ckpt.meta['epochs']} epochs); sampling batch of {BATCH}\n")

    for tag, cfg in [("unguided", GuidanceConfig(gamma=0.0, batch=BATCH)),
                     ("guided  ", GuidanceConfig(batch=BATCH))]:
        outcomes = sample_placements(ckpt, scene, obj, cfg, seed=SEED, eps=EPS)
        summarize(tag, outcomes)

    # tilt of the sampled rotations, valid or not: how flat does the
    # denoiser land the cube?
    from stabledrop.geom import rotation_of
    cfg = GuidanceConfig(batch=BATCH)
    outcomes = sample_placements(ckpt, scene, obj, cfg, seed=SEED, eps=EPS)
    tilt = [np.degrees(np.arccos(np.clip(rotation_of(o.pose)[2, 2], -1, 1)))
            for o in outcomes]
    print(f"\nguided tilt spread: {min(tilt):.2f} .. {max(tilt):.2f} deg "
          f"(median {np.median(tilt):.2f})")


if __name__ == "__main__":
    main()
