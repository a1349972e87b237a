"""Tokenization, inverted index, Okapi BM25, tf-idf cosine and candidate pruning."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

INDEX_FORMAT = "lexfuse-index"
INDEX_VERSION = 1

_WORD_RE = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class TokenizerConfig:
    """How text is cut into tokens.

    ``character`` mode emits one token per non-space character and is meant
    for unsegmented scripts such as Japanese. Chunk window sizes are counted
    in whatever tokens the active config produces.
    """

    mode: str = "unicode_word"
    lowercase: bool = True

    def __post_init__(self):
        if self.mode not in ("unicode_word", "character"):
            raise ValueError(f"unknown tokenizer mode {self.mode!r}")

    @property
    def joiner(self) -> str:
        return "" if self.mode == "character" else " "


def tokenize(text: str, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    if config.lowercase:
        text = text.lower()
    if config.mode == "character":
        return [ch for ch in text if not ch.isspace()]
    return _WORD_RE.findall(text)


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.5
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


@dataclass
class InvertedIndex:
    """Postings and length statistics over a set of retrieval units.

    ``postings`` maps term -> [(unit_id, tf), ...] sorted by unit_id.
    """

    postings: dict[str, list[tuple[str, int]]]
    unit_lengths: dict[str, int]
    avg_length: float
    n_units: int
    _tf: dict[str, dict[str, int]] = field(default_factory=dict, repr=False, compare=False)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def tf(self, term: str, unit_id: str) -> int:
        table = self._tf.get(term)
        if table is None:
            table = dict(self.postings.get(term, ()))
            self._tf[term] = table
        return table.get(unit_id, 0)

    @property
    def unit_ids(self) -> list[str]:
        return sorted(self.unit_lengths)


def build_index(units: Iterable[tuple[str, Sequence[str]]]) -> InvertedIndex:
    """Build an inverted index from ``(unit_id, tokens)`` pairs."""
    unit_lengths: dict[str, int] = {}
    raw: dict[str, list[tuple[str, int]]] = {}
    for unit_id, tokens in units:
        if unit_id in unit_lengths:
            raise ValueError(f"duplicate unit id {unit_id!r}")
        unit_lengths[unit_id] = len(tokens)
        for term, count in Counter(tokens).items():
            raw.setdefault(term, []).append((unit_id, count))
    postings = {term: sorted(plist) for term, plist in raw.items()}
    n = len(unit_lengths)
    avg = sum(unit_lengths.values()) / n if n else 0.0
    return InvertedIndex(postings=postings, unit_lengths=unit_lengths, avg_length=avg, n_units=n)


def bm25_idf(index: InvertedIndex, term: str) -> float:
    df = index.df(term)
    return math.log((index.n_units - df + 0.5) / (df + 0.5) + 1.0)


def _length_norm(index: InvertedIndex, unit_id: str, params: Bm25Params) -> float:
    if index.avg_length == 0:
        return params.k1
    rel = index.unit_lengths[unit_id] / index.avg_length
    return params.k1 * (1.0 - params.b + params.b * rel)


def bm25_score(
    index: InvertedIndex,
    query: Sequence[str],
    unit_id: str,
    params: Bm25Params = Bm25Params(),
) -> float:
    """Okapi BM25 of one unit. Repeated query terms count once per occurrence."""
    if index.n_units == 0:
        raise ValueError("cannot score against an empty index")
    if unit_id not in index.unit_lengths:
        raise KeyError(f"unknown unit id {unit_id!r}")
    norm = _length_norm(index, unit_id, params)
    score = 0.0
    for term in query:
        tf = index.tf(term, unit_id)
        if tf:
            score += bm25_idf(index, term) * tf * (params.k1 + 1.0) / (tf + norm)
    return score


def bm25_scores(
    index: InvertedIndex,
    query: Sequence[str],
    params: Bm25Params = Bm25Params(),
) -> dict[str, float]:
    """BM25 for every unit at once, walking only the query terms' postings."""
    if index.n_units == 0:
        raise ValueError("cannot score against an empty index")
    scores = dict.fromkeys(index.unit_lengths, 0.0)
    norms: dict[str, float] = {}
    for term, qcount in Counter(query).items():
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = bm25_idf(index, term)
        for unit_id, tf in plist:
            norm = norms.get(unit_id)
            if norm is None:
                norm = norms[unit_id] = _length_norm(index, unit_id, params)
            scores[unit_id] += qcount * idf * tf * (params.k1 + 1.0) / (tf + norm)
    return scores


def rank_units(scores: dict[str, float]) -> list[tuple[str, float]]:
    """Sort by descending score, ascending id on ties."""
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def prune_candidates(
    index: InvertedIndex,
    query: Sequence[str],
    k: int,
    params: Bm25Params = Bm25Params(),
    exclude: Iterable[str] = (),
) -> list[str]:
    """Ids of the top-``k`` units by BM25, best first."""
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    scores = bm25_scores(index, query, params)
    for unit_id in exclude:
        scores.pop(unit_id, None)
    return [unit_id for unit_id, _ in rank_units(scores)[:k]]


def tfidf_idf(index: InvertedIndex, term: str) -> float:
    return math.log(index.n_units / (1 + index.df(term))) + 1.0


def tfidf_vector(tokens: Sequence[str], index: InvertedIndex) -> dict[str, float]:
    return {t: c * tfidf_idf(index, t) for t, c in Counter(tokens).items()}


def cosine(u: dict[str, float], v: dict[str, float]) -> float:
    if len(u) > len(v):
        u, v = v, u
    dot = sum(w * v[t] for t, w in u.items() if t in v)
    if dot == 0.0:
        return 0.0
    nu = math.sqrt(sum(w * w for w in u.values()))
    nv = math.sqrt(sum(w * w for w in v.values()))
    return min(1.0, max(0.0, dot / (nu * nv)))


def tfidf_cosine(a: Sequence[str], b: Sequence[str], corpus_stats: InvertedIndex) -> float:
    """Cosine similarity of raw-count tf-idf vectors; 0 when either side is empty."""
    if corpus_stats.n_units == 0:
        raise ValueError("tf-idf statistics need at least one unit")
    return cosine(tfidf_vector(a, corpus_stats), tfidf_vector(b, corpus_stats))


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """Write a JSON snapshot. Keys are sorted so snapshots are byte-stable."""
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "n_units": index.n_units,
        "avg_length": index.avg_length,
        "unit_lengths": index.unit_lengths,
        "postings": {t: [[u, tf] for u, tf in plist] for t, plist in index.postings.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_index(path: str | Path) -> InvertedIndex:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != INDEX_FORMAT:
        raise ValueError(f"{path}: not a {INDEX_FORMAT} snapshot")
    if payload.get("version") != INDEX_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {payload.get('version')}")
    postings = {t: [(u, int(tf)) for u, tf in plist] for t, plist in payload["postings"].items()}
    lengths = {u: int(n) for u, n in payload["unit_lengths"].items()}
    index = InvertedIndex(
        postings=postings,
        unit_lengths=lengths,
        avg_length=float(payload["avg_length"]),
        n_units=int(payload["n_units"]),
    )
    if index.n_units != len(lengths):
        raise ValueError(f"{path}: n_units does not match unit_lengths")
    return index

