"""Labeled training pairs: tf-idf capped negatives, augmentation, silver pairs, self-labeling."""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import CaseDocument
from .lexical import InvertedIndex, TokenizerConfig, build_index, cosine, tfidf_vector, tokenize

log = logging.getLogger(__name__)

POSITIVE = "pos"
NEGATIVE = "neg"
ORIGINS = ("gold", "derived_chunk", "silver", "self_flipped")

SILVER_RECIPE = (
    "consecutive sentences inside one kept paragraph are positives; each positive gets "
    "ratio_neg negatives whose second sentence is drawn uniformly (seeded) from other cases"
)


class PredictorError(RuntimeError):
    pass


@dataclass(frozen=True)
class LabeledPair:
    query_id: str
    passage_id: str
    query_text: str
    passage_text: str
    label: str
    origin: str = "gold"

    def __post_init__(self):
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"label must be 'pos' or 'neg', got {self.label!r}")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")

    @property
    def key(self) -> tuple[str, str]:
        return self.query_id, self.passage_id

    def to_record(self) -> dict:
        return {
            "query_id": self.query_id,
            "passage_id": self.passage_id,
            "query": self.query_text,
            "passage": self.passage_text,
            "label": self.label,
            "origin": self.origin,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "LabeledPair":
        return cls(rec["query_id"], rec["passage_id"], rec["query"], rec["passage"],
                   rec["label"], rec.get("origin", "gold"))


@dataclass(frozen=True)
class SelfLabelConfig:
    e1: int = 2
    e2: int = 1
    threshold: float = 0.5
    iterations: int = 1

    def __post_init__(self):
        if self.e1 < 0 or self.e2 < 0:
            raise ValueError("epoch counts must be >= 0")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass(frozen=True)
class AugmentConfig:
    n_augment: int = 0

    def __post_init__(self):
        if self.n_augment < 0:
            raise ValueError("n_augment must be >= 0")


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    gold_ids: tuple[str, ...]


def check_unique(pairs: Sequence[LabeledPair]) -> None:
    seen = set()
    for p in pairs:
        if p.key in seen:
            raise ValueError(f"duplicate pair {p.key}")
        seen.add(p.key)


class ArticleStore:
    """Tokenized articles plus tf-idf statistics over them."""

    def __init__(self, articles: Mapping[str, str], tokenizer: TokenizerConfig = TokenizerConfig()):
        self.tokenizer = tokenizer
        self.texts = dict(articles)
        self.tokens = {aid: tokenize(t, tokenizer) for aid, t in self.texts.items()}
        self.stats: InvertedIndex = build_index(self.tokens.items())
        self._vectors = {aid: tfidf_vector(toks, self.stats) for aid, toks in self.tokens.items()}

    def rank(self, text: str, exclude: Iterable[str] = ()) -> list[tuple[str, float]]:
        """Articles by tf-idf cosine to ``text``, best first, id-ascending on ties."""
        skip = set(exclude)
        qv = tfidf_vector(tokenize(text, self.tokenizer), self.stats)
        scored = [(aid, cosine(qv, vec)) for aid, vec in self._vectors.items() if aid not in skip]
        scored.sort(key=lambda kv: (-kv[1], kv[0]))
        return scored


def generate_retrieval_pairs(
    questions: Sequence[Question],
    articles: ArticleStore,
    neg_cap: int = 150,
) -> list[LabeledPair]:
    """Gold positives plus the ``neg_cap`` most tf-idf-similar non-gold articles as negatives."""
    if neg_cap < 0:
        raise ValueError("neg_cap must be >= 0")
    pairs = []
    for q in questions:
        for gid in q.gold_ids:
            if gid not in articles.texts:
                raise KeyError(f"question {q.id!r}: gold article {gid!r} not in corpus")
        for gid in dict.fromkeys(q.gold_ids):
            pairs.append(LabeledPair(q.id, gid, q.text, articles.texts[gid], POSITIVE, "gold"))
        if neg_cap == 0:
            continue
        for aid, _ in articles.rank(q.text, exclude=q.gold_ids)[:neg_cap]:
            pairs.append(LabeledPair(q.id, aid, q.text, articles.texts[aid], NEGATIVE, "gold"))
    return pairs


def augment_articles(
    question_text: str,
    given_ids: Sequence[str],
    articles: ArticleStore,
    config: AugmentConfig,
) -> list[str]:
    """``given_ids`` followed by the ``n_augment`` best tf-idf matches not already given."""
    for gid in given_ids:
        if gid not in articles.texts:
            raise KeyError(f"given article {gid!r} not in corpus")
    out = list(dict.fromkeys(given_ids))
    if config.n_augment:
        out += [aid for aid, _ in articles.rank(question_text, exclude=out)[:config.n_augment]]
    return out


def generate_silver_supporting(
    docs: Sequence[CaseDocument],
    ratio_neg: int = 1,
    seed: int = 0,
) -> list[LabeledPair]:
    """Silver sentence-pair data; see ``SILVER_RECIPE``.

    Sentence ids are ``<doc>:<paragraph>:<sentence>``. Negatives for one
    positive are sampled without replacement, so a case never gets the same
    distractor twice.
    """
    if ratio_neg < 0:
        raise ValueError("ratio_neg must be >= 0")
    rng = random.Random(seed)
    sent_ids: list[str] = []
    sent_texts: list[str] = []
    spans: dict[str, tuple[int, int]] = {}
    positives: list[tuple[str, int, int]] = []
    for doc in docs:
        start = len(sent_ids)
        for p in doc.kept_paragraphs:
            base = len(sent_ids)
            for k, s in enumerate(p.sentences):
                sent_ids.append(f"{doc.id}:{p.index}:{k}")
                sent_texts.append(s)
            for k in range(len(p.sentences) - 1):
                positives.append((doc.id, base + k, base + k + 1))
        spans[doc.id] = (start, len(sent_ids))

    total = len(sent_ids)
    pairs = []
    for doc_id, a, b in positives:
        pairs.append(LabeledPair(sent_ids[a], sent_ids[b], sent_texts[a], sent_texts[b], POSITIVE, "silver"))
        lo, hi = spans[doc_id]
        others = total - (hi - lo)
        if not ratio_neg or not others:
            continue
        for r in rng.sample(range(others), min(ratio_neg, others)):
            j = r if r < lo else r + (hi - lo)
            pairs.append(LabeledPair(sent_ids[a], sent_ids[j], sent_texts[a], sent_texts[j], NEGATIVE, "silver"))
    log.info("silver: %d sentences, %d positives, %d pairs", total, len(positives), len(pairs))
    return pairs


def _score_one(predictor, p: LabeledPair) -> float:
    try:
        return predictor.score(p.query_text, p.passage_text)
    except Exception as exc:
        raise PredictorError(f"predictor failed on pair {p.key}: {exc}") from exc


def _predict(predictor, pairs: Sequence[LabeledPair], jobs: int = 1) -> list[float]:
    batch = getattr(predictor, "score_batch", None)
    if batch is not None:
        try:
            scores = list(batch([(p.query_text, p.passage_text) for p in pairs]))
        except Exception as exc:
            where = getattr(exc, "index", None)
            name = f" on pair {pairs[where].key}" if where is not None and where < len(pairs) else ""
            raise PredictorError(f"predictor failed{name}: {exc}") from exc
    elif jobs > 1 and not getattr(predictor, "single_flight", False):
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(lambda p: _score_one(predictor, p), pairs))
    else:
        scores = [_score_one(predictor, p) for p in pairs]
    for p, s in zip(pairs, scores):
        if isinstance(s, bool) or not isinstance(s, (int, float)) or not 0.0 <= s <= 1.0:
            raise PredictorError(f"predictor returned {s!r} for pair {p.key}")
    return scores


def refine_once(
    dataset: Sequence[LabeledPair],
    predictor,
    threshold: float = 0.5,
    jobs: int = 1,
) -> list[LabeledPair]:
    """One relabeling pass: positives scored below ``threshold`` become negatives.

    Negatives are never scored and never turn positive. Scoring may run on
    ``jobs`` threads; flips are applied afterwards in dataset order.
    """
    positives = [i for i, p in enumerate(dataset) if p.label == POSITIVE]
    scores = _predict(predictor, [dataset[i] for i in positives], jobs)
    out = list(dataset)
    for i, s in zip(positives, scores):
        if s < threshold:
            out[i] = replace(dataset[i], label=NEGATIVE, origin="self_flipped")
    return out


def self_label_refine(
    dataset: Sequence[LabeledPair],
    predictor,
    config: SelfLabelConfig = SelfLabelConfig(),
    jobs: int = 1,
) -> list[LabeledPair]:
    current = list(dataset)
    for it in range(config.iterations):
        before = sum(p.label == POSITIVE for p in current)
        current = refine_once(current, predictor, config.threshold, jobs)
        after = sum(p.label == POSITIVE for p in current)
        log.info("self-label iteration %d: %d -> %d positives", it + 1, before, after)
    return current


def write_pairs(pairs: Iterable[LabeledPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False) + "\n")


def read_pairs(path: str | Path) -> list[LabeledPair]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(LabeledPair.from_record(json.loads(line)))
                except (KeyError, ValueError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad pair record ({exc})") from None
    return out
