"""Write a synthetic world as CLI input files.

Produces schema.json, annotations.jsonl, splits.jsonl and features.jsonl in
the output directory, so the whole ``framevqa`` pipeline can be exercised
without the real annotations:

    python scripts/make_synthetic_corpus.py --out-dir /tmp/synth
    framevqa report --schema /tmp/synth/schema.json \\
        --annotations /tmp/synth/annotations.jsonl --splits /tmp/synth/splits.jsonl \\
        --features /tmp/synth/features.jsonl --epochs 20 --batch 32 --out-dir /tmp/synth/report
"""
import argparse
import json
from pathlib import Path

from framevqa.synthetic import make_world


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbs", type=int, default=6)
    p.add_argument("--images", type=int, default=30)
    p.add_argument("--noise", type=float, default=1.0)
    args = p.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = make_world(seed=args.seed, n_verbs=args.verbs, images_per_verb=args.images, noise=args.noise)

    schema = [{"verb": f.verb_id,
               "forms": {"base": f.forms.base, "third": f.forms.third_person, "gerund": f.forms.gerund},
               "abstract": f.definition_text} for f in world.frames]
    (out / "schema.json").write_text(json.dumps(schema, indent=2) + "\n")
    with open(out / "annotations.jsonl", "w") as fh:
        for a in world.annotations:
            frame = {k.lower(): v for k, v in a.fillers.items()}
            fh.write(json.dumps({"image_id": a.image_id, "verb": a.verb_id, "frames": [frame]}) + "\n")
    with open(out / "splits.jsonl", "w") as fh:
        for image_id, split in world.splits.items():
            fh.write(json.dumps({"image_id": image_id, "split": split}) + "\n")
    with open(out / "features.jsonl", "w") as fh:
        world.features.write_jsonl(fh)
    print(f"wrote {len(world.annotations)} images over {len(schema)} verbs to {out}")


if __name__ == "__main__":
    main()
