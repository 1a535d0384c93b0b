"""Multi-task vs single-task answer/element consistency on synthetic worlds.

    python scripts/consistency_experiment.py --seeds 5 --epochs 20 --noise 1.0
"""
import argparse
import json

import numpy as np

from framevqa.consistency import build_index, consistency_rate
from framevqa.metrics import accuracy
from framevqa.model import TrainConfig, predict, train
from framevqa.synthetic import make_world


def run_seed(seed, args):
    world = make_world(seed=seed, n_verbs=args.verbs, images_per_verb=args.images, noise=args.noise)
    ds = world.dataset()
    test = ds.split("test")
    idx = build_index(ds.split("train"))
    fallback = {s.sample_id: s.frame_element for s in ds.samples}
    row = {"seed": seed, "n_train": len(ds.split("train")), "n_test": len(test)}
    for name, single in (("single", True), ("multi", False)):
        config = TrainConfig(epochs=args.epochs, batch_size=args.batch, seed=seed, single_task=single)
        model, _ = train(ds, config, world.features)
        preds = predict(test, model, None, world.features)
        row[f"{name}_accuracy"] = accuracy(preds, test)
        row[f"{name}_consistency"] = consistency_rate(preds, idx, fallback)
    return row


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--verbs", type=int, default=6)
    p.add_argument("--images", type=int, default=30)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--json", help="write per-seed rows here")
    args = p.parse_args()

    rows = [run_seed(s, args) for s in range(args.seeds)]
    print(f"{'seed':>4}  {'acc single':>10}  {'acc multi':>9}  {'cons single':>11}  {'cons multi':>10}")
    for r in rows:
        print(f"{r['seed']:>4}  {r['single_accuracy']:>10.2f}  {r['multi_accuracy']:>9.2f}  "
              f"{r['single_consistency']:>11.2f}  {r['multi_consistency']:>10.2f}")
    for key in ("single_accuracy", "multi_accuracy", "single_consistency", "multi_consistency"):
        print(f"mean {key}: {np.mean([r[key] for r in rows]):.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
