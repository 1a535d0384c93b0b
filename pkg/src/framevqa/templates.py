"""Question-answer templates generated by holding out one frame element.

Every slot of a frame is in turn the answer target; each subset of the
remaining slots becomes the context mentioned in the question. A single extra
template asks about the verb itself.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .frames import FrameSet, Slot, VerbFrame

VERB_TARGET = "VERB"

WHO, WHERE, WHAT, WHAT_PHRASE = "who", "where", "what", "what_phrase"

# instrument slots are asked with "what does X use to ..." and mentioned as "with TOOL"
INSTRUMENTS = frozenset({"TOOL"})
CONNECTOR_RENDERING = {"using": "with"}


@dataclass(frozen=True)
class WhClass:
    kind: str
    text: str | None = None

    def __post_init__(self):
        if self.kind not in (WHO, WHERE, WHAT, WHAT_PHRASE):
            raise ValueError(f"unknown wh class {self.kind!r}")
        if self.kind == WHAT_PHRASE and not self.text:
            raise ValueError("what_phrase needs its text")

    @property
    def word(self) -> str:
        return self.text if self.kind == WHAT_PHRASE else self.kind


# Elements whose question word is visible in the sample tables; everything else
# comes from a user lexicon or the "what <element>" fallback.
DEFAULT_LEXICON: dict[str, WhClass] = {
    "AGENT": WhClass(WHO),
    "COAGENT": WhClass(WHO),
    "SELLER": WhClass(WHO),
    "VICTIM": WhClass(WHO),
    "PLACE": WhClass(WHERE),
    "LOCATION": WhClass(WHERE),
    "DESTINATION": WhClass(WHERE),
    "FOOD": WhClass(WHAT),
    "TOOL": WhClass(WHAT),
    "CONTAINER": WhClass(WHAT),
    "HEATSOURCE": WhClass(WHAT),
    "PAYMENT": WhClass(WHAT),
    "TARGET": WhClass(WHAT),
    "VEHICLE": WhClass(WHAT),
    "OBJECT": WhClass(WHAT),
    "ITEM": WhClass(WHAT_PHRASE, "what item"),
    "GOODS": WhClass(WHAT_PHRASE, "what item"),
    "CAUGHTITEM": WhClass(WHAT_PHRASE, "what item"),
    "PICKED": WhClass(WHAT_PHRASE, "what item"),
}


def load_lexicon(path: str | Path, base: Mapping[str, WhClass] | None = None) -> dict[str, WhClass]:
    """Read ``{"ELEMENT": {"wh": ..., "text": ...}}``; entries override ``base``."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    lexicon = dict(base or {})
    for name, entry in raw.items():
        lexicon[name.upper()] = WhClass(entry["wh"], entry.get("text"))
    return lexicon


def wh_word_for(element: str, lexicon: Mapping[str, WhClass]) -> WhClass:
    try:
        return lexicon[element]
    except KeyError:
        return WhClass(WHAT_PHRASE, "what " + element.lower())


@dataclass(frozen=True)
class QuestionTemplate:
    verb_id: str
    target: str
    context: tuple[str, ...]
    surface: str

    @property
    def key(self) -> tuple[str, tuple[str, ...]]:
        return self.target, self.context

    def to_json(self) -> dict:
        return {"verb": self.verb_id, "target": self.target, "context": list(self.context), "surface": self.surface}

    @classmethod
    def from_json(cls, rec: dict) -> "QuestionTemplate":
        return cls(rec["verb"], rec["target"], tuple(rec["context"]), rec["surface"])


def _context_phrase(slot: Slot) -> str:
    if slot.connector is None:
        return slot.element
    return f"{CONNECTOR_RENDERING.get(slot.connector, slot.connector)} {slot.element}"


def _capitalize(s: str) -> str:
    return s[:1].upper() + s[1:]


def _is_instrument(slot: Slot) -> bool:
    return slot.element in INSTRUMENTS or slot.connector == "using"


def render_surface(frame: VerbFrame, target: str, context: Iterable[str], lexicon: Mapping[str, WhClass]) -> str:
    subject = frame.subject
    if subject is None:
        raise ValueError(f"frame {frame.verb_id!r} has no subject slot")
    forms = frame.forms
    if target == VERB_TARGET:
        return f"What is the {subject.element} doing?"

    ctx_set = set(context)
    ctx = [_context_phrase(s) for s in frame.slots if s.element in ctx_set and not s.is_subject]
    tslot = frame.slot(target)
    wh = wh_word_for(target, lexicon)

    if tslot.is_subject:
        words = [wh.word, "is", forms.gerund, *ctx]
    elif _is_instrument(tslot):
        words = ["what", "does", "the", subject.element, "use", "to", forms.base, *ctx]
    elif wh.kind == WHERE:
        words = ["where", "does", "the", subject.element, forms.base, *ctx]
    else:
        words = [wh.word, "does", "the", subject.element, forms.base, *ctx]
        if tslot.connector:
            words.append(tslot.connector)
    return _capitalize(" ".join(words)) + "?"


def generate_templates(
    frame: VerbFrame,
    lexicon: Mapping[str, WhClass] = DEFAULT_LEXICON,
    max_context: int | None = None,
) -> list[QuestionTemplate]:
    """All (target, context) templates of one frame.

    Targets follow slot order; for each target the context subsets of the
    remaining slots are enumerated in binary-counting order and kept when
    their size is at most ``max_context``. The verb template comes last and
    only exists when the frame has an AGENT slot. The subject slot is always
    referenced by non-subject questions, so listing it in the context does not
    change the surface.
    """
    if frame.subject is None:
        raise ValueError(f"frame {frame.verb_id!r} has no subject slot")
    out: list[QuestionTemplate] = []
    elements = frame.elements
    for target in elements:
        rest = [e for e in elements if e != target]
        for mask in range(1 << len(rest)):
            context = tuple(e for j, e in enumerate(rest) if mask >> j & 1)
            if max_context is not None and len(context) > max_context:
                continue
            surface = render_surface(frame, target, context, lexicon)
            out.append(QuestionTemplate(frame.verb_id, target, context, surface))
    if "AGENT" in elements:
        out.append(QuestionTemplate(frame.verb_id, VERB_TARGET, (), render_surface(frame, VERB_TARGET, (), lexicon)))
    return out


def generate_all(
    frames: FrameSet,
    lexicon: Mapping[str, WhClass] = DEFAULT_LEXICON,
    max_context: int | None = None,
) -> dict[str, list[QuestionTemplate]]:
    return {f.verb_id: generate_templates(f, lexicon, max_context) for f in frames}


def distinct_surface_count(templates: Iterable[QuestionTemplate]) -> int:
    return len({(t.verb_id, t.target, t.surface) for t in templates})


def write_templates(templates: Iterable[QuestionTemplate], fh) -> int:
    n = 0
    for t in templates:
        fh.write(json.dumps(t.to_json()) + "\n")
        n += 1
    return n


def read_templates(path: str | Path) -> dict[str, list[QuestionTemplate]]:
    out: dict[str, list[QuestionTemplate]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                t = QuestionTemplate.from_json(json.loads(line))
                out.setdefault(t.verb_id, []).append(t)
    return out
