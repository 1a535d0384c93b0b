"""Accuracy, 2x2 chi-square significance and fine-grained breakdowns."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .realize import QASample
from .stats import wh_key

# 1-dof chi-square critical value at alpha = 0.01
CHI2_CRITICAL_1DOF_001 = 6.635


class MissingPrediction(KeyError):
    pass


class DegenerateTable(ValueError):
    pass


class KeyMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Prediction:
    sample_id: str
    predicted_answer: str
    predicted_element: str | None = None

    def to_json(self) -> dict:
        return {"sample_id": self.sample_id, "answer": self.predicted_answer, "element": self.predicted_element}

    @classmethod
    def from_json(cls, rec: dict) -> "Prediction":
        return cls(rec["sample_id"], rec["answer"], rec.get("element"))


def read_predictions(path: str | Path) -> list[Prediction]:
    with open(path, encoding="utf-8") as fh:
        return [Prediction.from_json(json.loads(line)) for line in fh if line.strip()]


def write_predictions(preds: Iterable[Prediction], fh):
    for p in preds:
        fh.write(json.dumps(p.to_json()) + "\n")


def align(preds: Iterable[Prediction], gold: Sequence[QASample]) -> list[tuple[Prediction, QASample]]:
    """Pair each gold sample with its prediction; every gold sample needs one."""
    by_id = {p.sample_id: p for p in preds}
    pairs = []
    for g in gold:
        try:
            pairs.append((by_id[g.sample_id], g))
        except KeyError:
            raise MissingPrediction(f"no prediction for sample {g.sample_id!r}") from None
    return pairs


def is_correct(pred: Prediction, gold: QASample) -> bool:
    return pred.predicted_answer.strip().lower() == gold.answer.strip().lower()


def accuracy(preds: Iterable[Prediction], gold: Sequence[QASample]) -> float:
    pairs = align(preds, gold)
    if not pairs:
        raise ValueError("no samples to score")
    return sum(is_correct(p, g) for p, g in pairs) / len(pairs) * 100


def correct_counts(preds: Iterable[Prediction], gold: Sequence[QASample]) -> tuple[int, int]:
    pairs = align(preds, gold)
    n_ok = sum(is_correct(p, g) for p, g in pairs)
    return n_ok, len(pairs) - n_ok


def chi_square_2x2(table, yates: bool = True) -> float:
    """Pearson chi-square of a 2x2 table ``((a, b), (c, d))``.

    With ``yates`` the continuity correction subtracts 0.5 from each
    ``|observed - expected|`` (clipped at zero).
    """
    (a, b), (c, d) = table
    cells = [[a, b], [c, d]]
    if any(x < 0 for row in cells for x in row):
        raise ValueError("counts must be non-negative")
    rows = [a + b, c + d]
    cols = [a + c, b + d]
    n = a + b + c + d
    if 0 in rows or 0 in cols:
        raise DegenerateTable(f"zero marginal in {cells}")
    corr = 0.5 if yates else 0.0
    stat = 0.0
    for i in range(2):
        for j in range(2):
            expected = rows[i] * cols[j] / n
            dev = max(abs(cells[i][j] - expected) - corr, 0.0)
            stat += dev * dev / expected
    return stat


GROUP_KEYS: dict[str, Callable[[QASample], str]] = {
    "wh": lambda s: wh_key(s.question),
    "verb": lambda s: s.verb_id,
    "element": lambda s: s.frame_element,
}


def breakdown(preds: Iterable[Prediction], gold: Sequence[QASample], key: str) -> dict[str, float]:
    group_of = GROUP_KEYS[key]
    hits: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for p, g in align(preds, gold):
        h = hits[group_of(g)]
        h[0] += is_correct(p, g)
        h[1] += 1
    return {k: 100.0 * ok / n for k, (ok, n) in sorted(hits.items())}


DEFAULT_BIN_EDGES = tuple(range(-100, 101, 10))


def _fmt(x: float) -> str:
    return f"{x:g}%"


def interval_labels(bin_edges: Sequence[float] = DEFAULT_BIN_EDGES) -> list[str]:
    labels = []
    for lo, hi in zip(bin_edges, bin_edges[1:]):
        if hi == 0:
            labels.append(f"({_fmt(lo)},{_fmt(hi)})")
            labels.append("0%")
        elif lo == bin_edges[0]:
            labels.append(f"[{_fmt(lo)},{_fmt(hi)}]")
        else:
            labels.append(f"({_fmt(lo)},{_fmt(hi)}]")
    if 0 not in bin_edges:
        raise ValueError("bin edges must include 0")
    return labels


def difference_histogram(acc_a: Mapping[str, float], acc_b: Mapping[str, float],
                         bin_edges: Sequence[float] = DEFAULT_BIN_EDGES) -> dict[str, int]:
    """Count ``acc_b - acc_a`` per group into intervals.

    Intervals are half-open ``(lo, hi]``; exact zero has its own bin, so the
    interval ending at 0 is open on both sides. The lowest interval also
    includes its left edge.
    """
    if set(acc_a) != set(acc_b):
        raise KeyMismatch(f"groups differ: {sorted(set(acc_a) ^ set(acc_b))}")
    edges = list(bin_edges)
    labels = interval_labels(edges)
    hist = dict.fromkeys(labels, 0)
    for k in acc_a:
        delta = acc_b[k] - acc_a[k]
        hist[_bin_label(delta, edges)] += 1
    return hist


def _bin_label(delta: float, edges: list[float]) -> str:
    if delta == 0:
        return "0%"
    if delta < edges[0] or delta > edges[-1]:
        raise ValueError(f"difference {delta} outside bin edges")
    for lo, hi in zip(edges, edges[1:]):
        if hi == 0 and lo < delta < hi:
            return f"({_fmt(lo)},{_fmt(hi)})"
        if lo == edges[0] and lo <= delta <= hi:
            return f"[{_fmt(lo)},{_fmt(hi)}]"
        if lo < delta <= hi:
            return f"({_fmt(lo)},{_fmt(hi)}]"
    raise AssertionError("unreachable")
