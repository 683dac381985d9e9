"""Overfit the denoiser on a handful of records.

Uses the miniature dataset from expert_dataset.py (regenerating it if
missing), trains for a couple hundred epochs, and prints the loss
trajectory. A loss that collapses well below its starting value is the
quickest health check the whole conditioning path deserves trust.
"""

import pathlib

from stabledrop import TrainConfig, generate_dataset, load_checkpoint, save_checkpoint, train

EPOCHS = 200
SEED = 0


def main():
    out = pathlib.Path(__file__).parent / "out"
    out.mkdir(exist_ok=True)
    data = out / "mini.jsonl"
    if not data.exists():
        print("building miniature dataset first...")
        generate_dataset(["table", "cantilever"], 4, SEED, data)

    cfg = TrainConfig(epochs=EPOCHS, seed=SEED, leave_out="shelf",
                      loss_csv=str(out / "mini.loss.csv"))
    ckpt = train(data, cfg)

    losses = ckpt.losses
    print(f"trained {EPOCHS} epochs on {ckpt.meta['records']} records "
          f"({ckpt.meta['scenes_seen']})")
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        i = min(len(losses) - 1, int(frac * len(losses)))
        step, loss = losses[i]
        print(f"  step {step:4d}: loss {loss:.4f}")
    print(f"ratio first/last: {losses[0][1] / losses[-1][1]:.1f}x")

    path = out / "mini.ckpt"
    save_checkpoint(ckpt, path)
    again = load_checkpoint(path)
    assert again.meta["final_loss"] == ckpt.meta["final_loss"]
    print(f"checkpoint saved and reloaded: {path} "
          f"({path.stat().st_size / 1e6:.1f} MB)")


if __name__ == "__main__":
    main()
