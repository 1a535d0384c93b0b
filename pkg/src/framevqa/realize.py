"""Instantiate templates with image annotations to obtain QA samples."""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .frames import FrameSet, VerbFrame
from .templates import VERB_TARGET, QuestionTemplate

SPLITS = ("train", "dev", "test")

_PLACEHOLDER_RE = re.compile(r"\b[A-Z]{2,}\b|\b[A-Z]\b(?=[ ?])")


class RealizeError(ValueError):
    pass


class VerbMismatch(RealizeError):
    pass


class UnknownImage(RealizeError):
    pass


class AnnotationError(RealizeError):
    pass


@dataclass(frozen=True)
class ImageAnnotation:
    image_id: str
    verb_id: str
    fillers: Mapping[str, str]
    annotator_index: int = 0

    def filler(self, element: str) -> str:
        return (self.fillers.get(element) or "").strip()


@dataclass(frozen=True)
class QASample:
    image_id: str
    verb_id: str
    question: str
    answer: str
    frame_element: str
    split: str
    context: tuple[str, ...] = ()
    sample_id: str = ""

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "image_id": self.image_id,
            "verb": self.verb_id,
            "question": self.question,
            "answer": self.answer,
            "element": self.frame_element,
            "split": self.split,
            "context": list(self.context),
        }

    @classmethod
    def from_json(cls, rec: dict) -> "QASample":
        return cls(
            rec["image_id"], rec["verb"], rec["question"], rec["answer"], rec["element"],
            rec["split"], tuple(rec.get("context", ())), rec.get("sample_id", ""),
        )


class Vocab:
    """Indexed set of strings, sorted for reproducibility."""

    def __init__(self, items: Iterable[str] = ()):
        self.items: list[str] = sorted(set(items))
        self.index: dict[str, int] = {s: i for i, s in enumerate(self.items)}

    def __len__(self):
        return len(self.items)

    def __contains__(self, item):
        return item in self.index

    def __getitem__(self, i: int) -> str:
        return self.items[i]

    def get(self, item: str, default: int | None = None) -> int | None:
        return self.index.get(item, default)


@dataclass
class Dataset:
    samples: list[QASample]
    answer_vocab: Vocab = field(default_factory=Vocab)
    element_vocab: Vocab = field(default_factory=Vocab)
    duplicates_removed: int = 0

    def __post_init__(self):
        if not len(self.answer_vocab) and not len(self.element_vocab):
            self.rebuild_vocab()

    def rebuild_vocab(self):
        train = self.split("train")
        self.answer_vocab = Vocab(s.answer for s in train)
        self.element_vocab = Vocab(s.frame_element for s in train)

    def split(self, name: str) -> list[QASample]:
        return [s for s in self.samples if s.split == name]

    def by_id(self) -> dict[str, QASample]:
        return {s.sample_id: s for s in self.samples}

    def write_jsonl(self, fh):
        for s in self.samples:
            fh.write(json.dumps(s.to_json()) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "Dataset":
        with open(path, encoding="utf-8") as fh:
            samples = [QASample.from_json(json.loads(line)) for line in fh if line.strip()]
        return cls(samples)


def substitute(surface: str, fillers: Mapping[str, str]) -> str:
    """Replace uppercase placeholders by their fillers; nothing else changes."""
    out = _PLACEHOLDER_RE.sub(lambda m: fillers[m.group(0)], surface)
    return out[:1].upper() + out[1:]


def placeholders(surface: str) -> list[str]:
    return _PLACEHOLDER_RE.findall(surface)


def realize(template: QuestionTemplate, ann: ImageAnnotation, frame: VerbFrame, split: str = "train") -> QASample | None:
    if template.verb_id != ann.verb_id or frame.verb_id != ann.verb_id:
        raise VerbMismatch(f"template verb {template.verb_id!r} vs annotation verb {ann.verb_id!r}")
    needed = set(placeholders(template.surface)) | set(template.context)
    if template.target == VERB_TARGET:
        answer = frame.forms.gerund
    else:
        answer = ann.filler(template.target)
        if not answer:
            return None
    fillers = {}
    for element in needed:
        value = ann.filler(element)
        if not value:
            return None
        fillers[element] = value
    question = substitute(template.surface, fillers)
    return QASample(ann.image_id, ann.verb_id, question, answer.lower(), template.target, split, template.context)


def validate_annotation(ann: ImageAnnotation, frames: FrameSet):
    if ann.verb_id not in frames:
        raise AnnotationError(f"image {ann.image_id}: unknown verb {ann.verb_id!r}")
    slots = set(frames[ann.verb_id].elements)
    extra = set(ann.fillers) - slots
    if extra:
        raise AnnotationError(f"image {ann.image_id}: {sorted(extra)} not slots of {ann.verb_id!r}")


def build_dataset(
    annotations: Iterable[ImageAnnotation],
    templates: Mapping[str, Sequence[QuestionTemplate]],
    frames: FrameSet,
    split_assignment: Mapping[str, str],
    dedup: bool = True,
) -> Dataset:
    """Realize every (template, annotation) pair of the matching verb.

    Output is sorted by image, verb, template order and annotator; exact
    duplicate (image, question, answer) triples keep their first occurrence.
    Sample ids are ``<image_id>#<n>`` after sorting.
    """
    rows = []
    for ann in annotations:
        validate_annotation(ann, frames)
        split = split_assignment.get(ann.image_id)
        if split is None:
            raise UnknownImage(f"image {ann.image_id!r} has no split assignment")
        frame = frames[ann.verb_id]
        for ti, tpl in enumerate(templates.get(ann.verb_id, ())):
            sample = realize(tpl, ann, frame, split)
            if sample is not None:
                rows.append(((ann.image_id, ann.verb_id, ti, ann.annotator_index), sample))
    rows.sort(key=lambda r: r[0])

    seen = set()
    samples = []
    per_image: Counter = Counter()
    removed = 0
    for _, s in rows:
        triple = (s.image_id, s.question, s.answer)
        if dedup and triple in seen:
            removed += 1
            continue
        seen.add(triple)
        n = per_image[s.image_id]
        per_image[s.image_id] += 1
        samples.append(_with_id(s, f"{s.image_id}#{n}"))
    return Dataset(samples, duplicates_removed=removed)


def _with_id(s: QASample, sample_id: str) -> QASample:
    return QASample(s.image_id, s.verb_id, s.question, s.answer, s.frame_element, s.split, s.context, sample_id)


def parse_annotation_record(rec: dict) -> list[ImageAnnotation]:
    out = []
    for k, frame in enumerate(rec["frames"]):
        fillers = {name.upper(): (value or "") for name, value in frame.items()}
        out.append(ImageAnnotation(rec["image_id"], rec["verb"], fillers, k))
    return out


def iter_annotations(path: str | Path) -> Iterator[ImageAnnotation]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                yield from parse_annotation_record(rec)
            except (json.JSONDecodeError, KeyError, AttributeError) as exc:
                raise AnnotationError(f"{path}: record {lineno}: {exc}") from exc


def load_splits(path: str | Path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["split"] not in SPLITS:
                raise RealizeError(f"{path}: record {lineno}: unknown split {rec['split']!r}")
            out[rec["image_id"]] = rec["split"]
    return out
