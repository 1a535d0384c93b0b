"""Is-a taxonomy, Wu-Palmer similarity and the WUPS answer metric."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

VIRTUAL_ROOT = "*root*"


class TaxonomyError(ValueError):
    pass


class UnknownNode(TaxonomyError, KeyError):
    pass


class LengthMismatch(ValueError):
    pass


class EmptyAnswerSet(ValueError):
    pass


def normalize(term: str) -> str:
    """Lowercase, with runs of spaces/underscores collapsed to one ``_``."""
    return "_".join(term.replace("_", " ").lower().split())


@dataclass
class Taxonomy:
    parents: dict[str, frozenset[str]]
    root: str
    synonyms: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], synonyms: Mapping[str, str] | None = None) -> "Taxonomy":
        parents: dict[str, set[str]] = {}
        for child, parent in edges:
            child, parent = normalize(child), normalize(parent)
            if child == parent:
                raise TaxonomyError(f"self loop on {child!r}")
            parents.setdefault(child, set()).add(parent)
            parents.setdefault(parent, set())
        if not parents:
            raise TaxonomyError("taxonomy has no edges")
        roots = sorted(n for n, ps in parents.items() if not ps)
        if not roots:
            raise TaxonomyError("taxonomy has no root (cycle through every node)")
        if len(roots) == 1:
            root = roots[0]
        else:
            root = VIRTUAL_ROOT
            parents.setdefault(root, set())
            for r in roots:
                if r != root:
                    parents[r].add(root)
        syn = {normalize(k): normalize(v) for k, v in (synonyms or {}).items()}
        for surface, node in syn.items():
            if node not in parents:
                raise TaxonomyError(f"synonym {surface!r} points at unknown node {node!r}")
        tax = cls({n: frozenset(ps) for n, ps in parents.items()}, root, syn)
        tax._check_acyclic()
        return tax

    def _check_acyclic(self):
        children = self._children
        indeg = {n: len(ps) for n, ps in self.parents.items()}
        queue = deque(n for n, d in indeg.items() if d == 0)
        seen = 0
        while queue:
            n = queue.popleft()
            seen += 1
            for c in children.get(n, ()):
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if seen != len(self.parents):
            raise TaxonomyError("taxonomy contains a cycle")

    @cached_property
    def _children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for child, ps in self.parents.items():
            for p in ps:
                out.setdefault(p, []).append(child)
        return out

    @cached_property
    def depths(self) -> dict[str, int]:
        """Shortest hypernym-chain length to the root, root = 1."""
        depth = {self.root: 1}
        queue = deque([self.root])
        while queue:
            n = queue.popleft()
            for c in self._children.get(n, ()):
                if c not in depth:
                    depth[c] = depth[n] + 1
                    queue.append(c)
        return depth

    def __contains__(self, node: str) -> bool:
        return node in self.parents

    @property
    def nodes(self):
        return self.parents.keys()

    def depth(self, node: str) -> int:
        try:
            return self.depths[node]
        except KeyError:
            raise UnknownNode(node) from None

    def ancestors(self, node: str) -> frozenset[str]:
        """``node`` and everything above it."""
        if node not in self.parents:
            raise UnknownNode(node)
        cache = self.__dict__.setdefault("_anc_cache", {})
        if node in cache:
            return cache[node]
        seen = {node}
        stack = [node]
        while stack:
            for p in self.parents[stack.pop()]:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        cache[node] = frozenset(seen)
        return cache[node]

    def lcs_depth(self, a: str, b: str) -> int:
        common = self.ancestors(a) & self.ancestors(b)
        return max(self.depths[n] for n in common)

    def resolve(self, term: str) -> str | None:
        key = normalize(term)
        if key in self.synonyms:
            return self.synonyms[key]
        return key if key in self.parents else None


def wup(a: str, b: str, taxonomy: Taxonomy | None = None) -> float:
    """Wu-Palmer similarity; terms missing from the taxonomy only match themselves."""
    na = taxonomy.resolve(a) if taxonomy is not None else None
    nb = taxonomy.resolve(b) if taxonomy is not None else None
    if na is None or nb is None:
        return 1.0 if a.strip().lower() == b.strip().lower() else 0.0
    if na == nb:
        return 1.0
    return 2.0 * taxonomy.lcs_depth(na, nb) / (taxonomy.depth(na) + taxonomy.depth(nb))


def _as_set(answers) -> tuple[str, ...]:
    if isinstance(answers, str):
        return (answers,)
    return tuple(answers)


def wups_scores(
    gold: Sequence,
    pred: Sequence,
    taxonomy: Taxonomy | None = None,
    threshold: float | None = None,
    mode: str = "binary",
) -> list[float]:
    """Per-sample WUPS terms (before averaging and scaling to percent).

    ``mode="binary"`` scores each sample 1 when its min-of-products score is at
    least ``threshold`` and 0 otherwise. ``mode="downweight"`` instead scales
    every pairwise WUP below the threshold by 0.1 before aggregating.
    """
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold answer sets vs {len(pred)} predictions")
    if mode not in ("binary", "downweight"):
        raise ValueError(f"unknown WUPS mode {mode!r}")

    def sim(a, t):
        w = wup(a, t, taxonomy)
        if mode == "downweight" and threshold is not None and w < threshold:
            w *= 0.1
        return w

    out = []
    for A, T in zip(gold, pred):
        A, T = _as_set(A), _as_set(T)
        if not A or not T:
            raise EmptyAnswerSet("answer sets must be nonempty")
        forward = math.prod(max(sim(a, t) for t in T) for a in A)
        backward = math.prod(max(sim(a, t) for a in A) for t in T)
        score = min(forward, backward)
        if mode == "binary" and threshold is not None:
            score = 1.0 if score >= threshold else 0.0
        out.append(score)
    return out


def wups(gold: Sequence, pred: Sequence, taxonomy: Taxonomy | None = None,
         threshold: float | None = None, mode: str = "binary") -> float:
    scores = wups_scores(gold, pred, taxonomy, threshold, mode)
    if not scores:
        raise LengthMismatch("no samples")
    return sum(scores) / len(scores) * 100


def read_tsv_pairs(path: str | Path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TaxonomyError(f"{path}: line {lineno}: expected two tab-separated fields")
            pairs.append((parts[0], parts[1]))
    return pairs


def load_taxonomy(edges_path: str | Path, synonyms_path: str | Path | None = None) -> Taxonomy:
    synonyms = dict(read_tsv_pairs(synonyms_path)) if synonyms_path else None
    return Taxonomy.from_edges(read_tsv_pairs(edges_path), synonyms)


def parse_wordnet_data(lines: Iterable[str], index_lines: Iterable[str] | None = None):
    """Convert a WordNet ``data.noun`` dump to (edges, synonyms).

    Nodes are named ``<first lemma>.<offset>``. Hypernym (``@``) and instance
    hypernym (``@i``) pointers become edges. Each lemma maps to one node: the
    first sense listed in ``index.noun`` when given, else the first synset in
    file order that contains it.
    """
    names: dict[str, str] = {}
    lemmas: dict[str, list[str]] = {}
    hyper: dict[str, list[str]] = {}
    for line in lines:
        if not line.strip() or line.startswith(" "):
            continue
        fields = line.split(" | ")[0].split()
        offset = fields[0]
        w_cnt = int(fields[3], 16)
        words = [fields[4 + 2 * i].lower() for i in range(w_cnt)]
        pos = 4 + 2 * w_cnt
        p_cnt = int(fields[pos])
        ptrs = fields[pos + 1 : pos + 1 + 4 * p_cnt]
        names[offset] = f"{words[0]}.{offset}"
        lemmas[offset] = words
        hyper[offset] = [ptrs[i + 1] for i in range(0, len(ptrs), 4) if ptrs[i] in ("@", "@i")]

    edges = [(names[o], names[p]) for o, ps in hyper.items() for p in ps if p in names]
    synonyms: dict[str, str] = {}
    if index_lines is not None:
        for line in index_lines:
            if not line.strip() or line.startswith(" "):
                continue
            f = line.split()
            lemma, synset_cnt, p_cnt = f[0], int(f[2]), int(f[3])
            offsets = f[4 + p_cnt + 2 :][:synset_cnt]
            if offsets and offsets[0] in names:
                synonyms[lemma.lower()] = names[offsets[0]]
    for offset, words in lemmas.items():
        for w in words:
            synonyms.setdefault(w, names[offset])
    # isolated synsets (no hypernym, no hyponym) still need to be nodes
    linked = {n for e in edges for n in e}
    edges += [(names[o], VIRTUAL_ROOT) for o in names if names[o] not in linked]
    return edges, synonyms
