"""Verb frames parsed from imSitu-style abstract definitions.

An abstract definition is a single sentence such as
``"an AGENT cooks a FOOD in a CONTAINER over a HEATSOURCE using a TOOL in a PLACE"``.
Uppercase runs are frame-element slots; the lowercase word closest before a
slot (articles excluded) is its connector.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

ARTICLES = frozenset({"a", "an", "the"})

_SLOT_RE = re.compile(r"[A-Z]+")
_TOKEN_RE = re.compile(r"[A-Za-z]+")


class FrameError(ValueError):
    pass


class NoSlotsFound(FrameError):
    pass


class VerbNotFound(FrameError):
    pass


class ParseError(FrameError):
    pass


class DuplicateVerb(FrameError):
    pass


class EmptyFrameSet(FrameError):
    pass


@dataclass(frozen=True)
class VerbForms:
    base: str
    third_person: str
    gerund: str

    def __post_init__(self):
        for name in ("base", "third_person", "gerund"):
            if not getattr(self, name):
                raise ValueError(f"verb form {name!r} is empty")

    @classmethod
    def from_base(cls, base: str) -> "VerbForms":
        """Naive English morphology, used when a schema record omits forms."""
        base = base.lower()
        return cls(base, third_person(base), gerund(base))


_VOWELS = set("aeiou")


def third_person(base: str) -> str:
    if base.endswith(("s", "x", "z", "ch", "sh", "o")):
        return base + "es"
    if base.endswith("y") and len(base) > 1 and base[-2] not in _VOWELS:
        return base[:-1] + "ies"
    return base + "s"


def gerund(base: str) -> str:
    if base.endswith("ie"):
        return base[:-2] + "ying"
    if base.endswith("e") and not base.endswith(("ee", "ye", "oe")) and len(base) > 2:
        return base[:-1] + "ing"
    # consonant doubling for short CVC stems: cut -> cutting, stop -> stopping
    if (
        len(base) >= 3
        and base[-1] not in _VOWELS | set("wxy")
        and base[-2] in _VOWELS
        and base[-3] not in _VOWELS
        and sum(ch in _VOWELS for ch in base) == 1
    ):
        return base + base[-1] + "ing"
    return base + "ing"


@dataclass(frozen=True)
class Slot:
    element: str
    connector: str | None = None
    is_direct_object: bool = False
    is_subject: bool = False

    def phrase(self) -> str:
        """Article-free rendering: ``"in CONTAINER"`` or bare ``"FOOD"``."""
        return f"{self.connector} {self.element}" if self.connector else self.element


@dataclass(frozen=True)
class VerbFrame:
    verb_id: str
    forms: VerbForms
    slots: tuple[Slot, ...]
    definition_text: str

    @property
    def elements(self) -> tuple[str, ...]:
        return tuple(s.element for s in self.slots)

    @property
    def subject(self) -> Slot | None:
        if self.slots and self.slots[0].is_subject:
            return self.slots[0]
        return None

    def slot(self, element: str) -> Slot:
        for s in self.slots:
            if s.element == element:
                return s
        raise KeyError(element)

    def skeleton(self) -> str:
        """Definition with articles dropped, rebuilt from the parsed slots."""
        words: list[str] = []
        for s in self.slots:
            if s.is_subject:
                words.append(s.element)
        words.append(self._verb_token)
        words.extend(s.phrase() for s in self.slots if not s.is_subject)
        return " ".join(words)

    @property
    def _verb_token(self) -> str:
        for tok in _TOKEN_RE.findall(self.definition_text):
            if tok in (self.forms.third_person, self.forms.base):
                return tok
        return self.forms.third_person


def parse_abstract_definition(text: str, forms: VerbForms, verb_id: str | None = None) -> VerbFrame:
    tokens = _TOKEN_RE.findall(text)
    slot_positions = [i for i, t in enumerate(tokens) if _SLOT_RE.fullmatch(t)]
    if not slot_positions:
        raise NoSlotsFound(f"no uppercase slot token in {text!r}")
    verb_pos = next(
        (i for i, t in enumerate(tokens) if t in (forms.third_person, forms.base)),
        None,
    )
    if verb_pos is None:
        raise VerbNotFound(f"neither {forms.third_person!r} nor {forms.base!r} occurs in {text!r}")

    slots: list[Slot] = []
    seen: set[str] = set()
    prev = -1
    for pos in slot_positions:
        name = tokens[pos]
        if name in seen:
            raise ParseError(f"slot {name} repeated in {text!r}")
        seen.add(name)
        lo = max(prev, verb_pos) if pos > verb_pos else prev
        between = [t for t in tokens[lo + 1 : pos] if t.lower() not in ARTICLES]
        connector = between[-1].lower() if between else None
        if pos < verb_pos and not slots:
            slots.append(Slot(name, None, False, is_subject=True))
        else:
            slots.append(Slot(name, connector, connector is None))
        prev = pos
    return VerbFrame(verb_id or forms.base, forms, tuple(slots), text)


@dataclass
class FrameSet:
    frames: dict[str, VerbFrame] = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames.values())

    def __getitem__(self, verb_id: str) -> VerbFrame:
        return self.frames[verb_id]

    def __contains__(self, verb_id):
        return verb_id in self.frames

    def add(self, frame: VerbFrame):
        if frame.verb_id in self.frames:
            raise DuplicateVerb(frame.verb_id)
        self.frames[frame.verb_id] = frame


def _forms_from_record(rec: dict) -> VerbForms:
    verb = rec["verb"]
    forms = rec.get("forms") or {}
    guess = VerbForms.from_base(forms.get("base", verb))
    return VerbForms(
        forms.get("base", guess.base),
        forms.get("third", guess.third_person),
        forms.get("gerund", guess.gerund),
    )


def frameset_from_records(records: Iterable[dict]) -> FrameSet:
    fs = FrameSet()
    for i, rec in enumerate(records):
        verb = rec.get("verb", f"<record {i}>")
        try:
            frame = parse_abstract_definition(rec["abstract"], _forms_from_record(rec), rec["verb"])
        except (KeyError, FrameError) as exc:
            if isinstance(exc, DuplicateVerb):
                raise
            raise ParseError(f"record {i} (verb {verb!r}): {exc}") from exc
        fs.add(frame)
    if not fs.frames:
        raise EmptyFrameSet("schema contains no verb records")
    return fs


def load_frameset(path: str | Path) -> FrameSet:
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raise EmptyFrameSet(f"{path} is empty")
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(records, list):
        raise ParseError(f"{path}: expected a JSON array of verb records")
    return frameset_from_records(records)
