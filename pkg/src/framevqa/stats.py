"""Dataset distributions: frame elements, answers, wh-words, question lengths."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .realize import QASample


@dataclass
class StatsReport:
    n_samples: int = 0
    element_freq: Counter = field(default_factory=Counter)
    answer_freq: Counter = field(default_factory=Counter)
    wh_dist: Counter = field(default_factory=Counter)
    length_hist: Counter = field(default_factory=Counter)

    def merge(self, other: "StatsReport") -> "StatsReport":
        return StatsReport(
            self.n_samples + other.n_samples,
            self.element_freq + other.element_freq,
            self.answer_freq + other.answer_freq,
            self.wh_dist + other.wh_dist,
            self.length_hist + other.length_hist,
        )

    def to_json(self, k: int | None = None) -> dict:
        def ranked(freq):
            keys = top_k(freq, len(freq) if k is None else k)
            return [[key, freq[key]] for key in keys]

        return {
            "n_samples": self.n_samples,
            "element_freq": ranked(self.element_freq),
            "answer_freq": ranked(self.answer_freq),
            "wh_dist": ranked(self.wh_dist),
            "length_hist": [[n, self.length_hist[n]] for n in sorted(self.length_hist)],
        }


def question_length(question: str) -> int:
    # trailing "?" stays attached to the last word
    return len(question.split())


def wh_key(question: str) -> str:
    words = question.split()
    return words[0].lower().rstrip("?") if words else ""


def compute_stats(samples: Iterable[QASample], split: str | None = None) -> StatsReport:
    report = StatsReport()
    for s in samples:
        if split is not None and s.split != split:
            continue
        report.n_samples += 1
        report.element_freq[s.frame_element] += 1
        report.answer_freq[s.answer] += 1
        report.wh_dist[wh_key(s.question)] += 1
        report.length_hist[question_length(s.question)] += 1
    return report


def top_k(freq: Mapping[str, int], k: int) -> list:
    if k < 0:
        raise ValueError("k must be non-negative")
    return sorted(freq, key=lambda key: (-freq[key], str(key)))[:k]


def format_table(report: StatsReport, k: int = 10) -> str:
    blocks = [f"samples: {report.n_samples}"]
    for title, freq in (
        ("frame element", report.element_freq),
        ("answer", report.answer_freq),
        ("wh-word", report.wh_dist),
    ):
        keys = top_k(freq, k)
        width = max([len(title)] + [len(str(key)) for key in keys])
        lines = [f"{title:<{width}}  frequency"]
        lines += [f"{key:<{width}}  {freq[key]:>9,}" for key in keys]
        blocks.append("\n".join(lines))
    lines = ["words  questions"]
    lines += [f"{n:>5}  {report.length_hist[n]:>9,}" for n in sorted(report.length_hist)]
    blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def to_csv(report: StatsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["distribution", "key", "count"])
    for name, freq in (
        ("element", report.element_freq),
        ("answer", report.answer_freq),
        ("wh", report.wh_dist),
    ):
        for key in top_k(freq, len(freq)):
            w.writerow([name, key, freq[key]])
    for n in sorted(report.length_hist):
        w.writerow(["length", n, report.length_hist[n]])
    return buf.getvalue()
