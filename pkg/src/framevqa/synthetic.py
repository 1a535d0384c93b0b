"""Small synthetic imSitu-like worlds for tests and desk-scale experiments.

Each frame element owns its own noun vocabulary, so answers are
element-conditioned. Image features are the sum of per-noun prototype
vectors of the image's fillers plus Gaussian noise, which makes answers
recoverable from the image rather than memorized per image id.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frames import FrameSet, VerbForms, parse_abstract_definition
from .model import FeatureStore
from .realize import Dataset, ImageAnnotation, build_dataset
from .templates import DEFAULT_LEXICON, generate_all

VERBS = ("cook", "buy", "catch", "open", "wash", "carry", "paint", "ride", "push", "feed", "cut", "pull")

# element -> connector used when it appears after the direct object
SLOT_POOL = {
    "ITEM": None,
    "FOOD": None,
    "TOOL": "with",
    "CONTAINER": "in",
    "VEHICLE": "on",
    "COAGENT": "with",
    "DESTINATION": "to",
    "PLACE": "in",
}


@dataclass
class SyntheticWorld:
    frames: FrameSet
    annotations: list[ImageAnnotation]
    splits: dict[str, str]
    features: FeatureStore
    nouns: dict[str, list[str]]

    def dataset(self, max_context: int | None = None) -> Dataset:
        templates = generate_all(self.frames, DEFAULT_LEXICON, max_context)
        return build_dataset(self.annotations, templates, self.frames, self.splits)


def make_frames(n_verbs: int, rng: np.random.Generator, max_slots: int = 3) -> FrameSet:
    fs = FrameSet()
    objects = [e for e in SLOT_POOL if SLOT_POOL[e] is None]
    obliques = [e for e in SLOT_POOL if SLOT_POOL[e] is not None]
    for verb in VERBS[:n_verbs]:
        forms = VerbForms.from_base(verb)
        words = ["an AGENT", forms.third_person, "the " + objects[rng.integers(len(objects))]]
        n_extra = int(rng.integers(0, max_slots))
        for e in rng.choice(obliques, size=n_extra, replace=False):
            words.append(f"{SLOT_POOL[e]} a {e}")
        fs.add(parse_abstract_definition(" ".join(words), forms, verb))
    return fs


def make_world(
    seed: int = 0,
    n_verbs: int = 4,
    images_per_verb: int = 30,
    nouns_per_element: int = 4,
    d_img: int = 64,
    noise: float = 0.1,
    empty_rate: float = 0.1,
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    max_slots: int = 3,
) -> SyntheticWorld:
    rng = np.random.default_rng(seed)
    frames = make_frames(n_verbs, rng, max_slots)
    elements = sorted({e for f in frames for e in f.elements})
    nouns = {e: [f"{e.lower()}{k}" for k in range(nouns_per_element)] for e in elements}
    prototypes = {n: rng.standard_normal(d_img) for e in elements for n in nouns[e]}
    verb_proto = {f.verb_id: rng.standard_normal(d_img) for f in frames}

    annotations, splits, vectors = [], {}, {}
    cut_train = split_fractions[0]
    cut_dev = cut_train + split_fractions[1]
    for frame in frames:
        for k in range(images_per_verb):
            image_id = f"{frame.verb_id}_{k:04d}"
            fillers = {}
            for e in frame.elements:
                if e != "AGENT" and rng.random() < empty_rate:
                    fillers[e] = ""
                else:
                    fillers[e] = nouns[e][rng.integers(nouns_per_element)]
            vec = verb_proto[frame.verb_id] + noise * rng.standard_normal(d_img)
            for noun in fillers.values():
                if noun:
                    vec = vec + prototypes[noun]
            vectors[image_id] = vec
            annotations.append(ImageAnnotation(image_id, frame.verb_id, fillers, 0))
            u = rng.random()
            splits[image_id] = "train" if u < cut_train else "dev" if u < cut_dev else "test"
    return SyntheticWorld(frames, annotations, splits, FeatureStore(vectors, d_img), nouns)
