"""Walk the four scenes and render their robustness fields.

For each scene this samples surface points, solves the per-point press
robustness LP, prints a short numeric summary, and writes an SVG heat
map next to this script (out/field_<scene>.svg).
"""

import pathlib
import time

import numpy as np

from stabledrop import SCENE_NAMES, build_scene, render_field_svg, robustness_field
from stabledrop.cloud import sample_scene_surfaces

POINTS = 512
SEED = 0


def tour_scene(name, out_dir):
    scene = build_scene(name)
    samples = sample_scene_surfaces(scene.bodies, POINTS, np.random.default_rng(SEED))
    t0 = time.perf_counter()
    values, flagged = robustness_field(scene.bodies, samples)
    dt = time.perf_counter() - t0

    finite = values[np.isfinite(values)]
    print(f"{name}: {POINTS} points in {dt:.1f}s, "
          f"{len(values) - len(finite)} unbounded, {flagged.sum()} flagged")
    if len(finite):
        print(f"  finite robustness N: min {finite.min():.2f} "
              f"median {np.median(finite):.2f} max {finite.max():.2f}")
    # the weakest press hints where the structure wants to fail
    i = int(np.argmin(np.where(np.isfinite(values), values, np.inf)))
    print(f"  weakest point {np.round(samples.points[i], 2)} "
          f"on {samples.body_ids[i]}")

    svg = out_dir / f"field_{name}.svg"
    render_field_svg(samples.points, values, svg, title=name)
    print(f"  wrote {svg}")


def main():
    out_dir = pathlib.Path(__file__).parent / "out"
    out_dir.mkdir(exist_ok=True)
    for name in SCENE_NAMES:
        tour_scene(name, out_dir)


if __name__ == "__main__":
    main()
