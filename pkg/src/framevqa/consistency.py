"""Answer / frame-element consistency.

A pair is consistent when at least one training sample carries both the
answer and the frame element.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .metrics import Prediction
from .realize import QASample


class MissingElementPrediction(ValueError):
    pass


@dataclass(frozen=True)
class ConsistencyIndex:
    pairs: frozenset[tuple[str, str]] = frozenset()
    per_answer: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {a: sorted(els) for a, els in sorted(self.per_answer.items())}


def build_index(train: Iterable[QASample]) -> ConsistencyIndex:
    pairs = {(s.answer, s.frame_element) for s in train}
    per_answer: dict[str, set[str]] = {}
    for a, e in pairs:
        per_answer.setdefault(a, set()).add(e)
    return ConsistencyIndex(frozenset(pairs), {a: frozenset(es) for a, es in per_answer.items()})


def is_consistent(answer: str, element: str, idx: ConsistencyIndex) -> bool:
    return (answer, element) in idx.pairs


def distinct_element_count(answer: str, idx: ConsistencyIndex) -> int:
    return len(idx.per_answer.get(answer, ()))


def consistency_rate(
    preds: Iterable[Prediction],
    idx: ConsistencyIndex,
    fallback_elements: Mapping[str, str] | None = None,
) -> float:
    """Percentage of predictions whose (answer, element) pair was seen in train.

    Predictions without an element (single-head models) take theirs from
    ``fallback_elements`` keyed by sample id, normally the template target.
    """
    n = ok = 0
    for p in preds:
        element = p.predicted_element
        if element is None and fallback_elements is not None:
            element = fallback_elements.get(p.sample_id)
        if element is None:
            raise MissingElementPrediction(f"prediction {p.sample_id!r} has no frame element")
        n += 1
        ok += is_consistent(p.predicted_answer.strip().lower(), element, idx)
    if n == 0:
        raise ValueError("no predictions")
    return 100.0 * ok / n


def write_index(idx: ConsistencyIndex, fh):
    json.dump(idx.to_json(), fh, indent=1, sort_keys=True)
