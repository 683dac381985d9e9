"""Run the full benchmark protocol at toy size and print Table 1.

Uses the packaged desk-scale model when present, otherwise the overfit
miniature from train_small.py. A real run uses configs/bench.toml; this
one shrinks every knob so it finishes in minutes.
"""

import csv
import pathlib

from stabledrop import run_benchmark


def main():
    root = pathlib.Path(__file__).parent
    packaged = root.parent / "models" / "table-out.ckpt"
    mini = root / "out" / "mini.ckpt"
    out = root / "out" / "bench"

    if packaged.exists():
        checkpoints = {"table": str(packaged)}
    elif mini.exists():
        checkpoints = {"shelf": str(mini)}
    else:
        raise SystemExit("no checkpoint; run train_small.py first")

    config = {
        "n": 8, "variations": 2, "seed": 0,
        "steps": 25, "repeats": 1, "time_batch": 4,
        "checkpoints": checkpoints,
    }
    report = run_benchmark(config, out)
    print(f"wrote {sorted(p.name for p in out.iterdir())}\n")

    with open(out / "table1.csv", newline="") as fh:
        for row in csv.reader(fh):
            print("  ".join(f"{c:>10}" for c in row))
    print(f"\n{len(report.min_rows)} robustness rows; "
          f"full report: {out / 'report.md'}")


if __name__ == "__main__":
    main()
