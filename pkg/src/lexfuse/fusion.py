"""Paragraph-level lexical/semantic score matrices, their fusion, and case ranking.

For a query case with N kept paragraphs and a candidate with M, both channels
are N x M matrices. The fused matrix is ``alpha * semantic + (1 - alpha) *
lexical`` where the lexical channel is min-max normalized per matrix by
default, and a case score is the mean over query paragraphs of their best
candidate-paragraph cell.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import CaseDocument
from .lexical import (
    Bm25Params,
    InvertedIndex,
    TokenizerConfig,
    bm25_scores,
    build_index,
    prune_candidates,
    tokenize,
)
from .scorers import ScorerError, TfidfCosineScorer, score_pairs

log = logging.getLogger(__name__)

CHANNELS = ("lexical", "semantic", "fused")
NORMALIZATIONS = ("per_matrix_minmax", "none")


class FusionError(ValueError):
    pass


@dataclass
class ScoreMatrix:
    query_case_id: str
    candidate_case_id: str
    channel: str
    values: np.ndarray

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise FusionError(f"unknown channel {self.channel!r}")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise FusionError(f"score matrix must be at least 1x1, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise FusionError(f"{self.channel} matrix has non-finite values")
        if self.channel == "lexical" and np.any(self.values < 0):
            raise FusionError("lexical scores must be >= 0")
        if self.channel == "semantic" and (np.any(self.values < 0) or np.any(self.values > 1)):
            raise FusionError("semantic scores must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 0.7
    lexical_normalization: str = "per_matrix_minmax"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.lexical_normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown lexical normalization {self.lexical_normalization!r}")


@dataclass(frozen=True)
class RetrievalConfig:
    prune_k: int = 100
    alpha: float = 0.7
    top_n: int = 5
    # keep only cases scoring >= threshold * best score; None disables
    threshold: float | None = None
    lexical_normalization: str = "per_matrix_minmax"
    bm25: Bm25Params = Bm25Params()

    def __post_init__(self):
        if self.prune_k < 1:
            raise ValueError("prune_k must be >= 1")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if self.threshold is not None and not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")

    @property
    def fusion(self) -> FusionConfig:
        return FusionConfig(self.alpha, self.lexical_normalization)


def _kept_texts(case: CaseDocument) -> list[str]:
    texts = [p.text for p in case.kept_paragraphs]
    if not texts:
        raise FusionError(f"case {case.id!r} has no kept paragraphs")
    return texts


def _lexical_values(query_tokens: Sequence[Sequence[str]], cand_tokens: Sequence[Sequence[str]],
                    params: Bm25Params) -> np.ndarray:
    ids = [str(j) for j in range(len(cand_tokens))]
    index = build_index(zip(ids, cand_tokens))
    values = np.zeros((len(query_tokens), len(cand_tokens)))
    for i, q in enumerate(query_tokens):
        row = bm25_scores(index, q, params)
        values[i] = [row[u] for u in ids]
    return values


def lexical_matrix(
    query_case: CaseDocument,
    candidate_case: CaseDocument,
    params: Bm25Params = Bm25Params(),
    tokenizer: TokenizerConfig = TokenizerConfig(),
) -> ScoreMatrix:
    """BM25 of every query paragraph against an index of the candidate's paragraphs."""
    q = [tokenize(t, tokenizer) for t in _kept_texts(query_case)]
    c = [tokenize(t, tokenizer) for t in _kept_texts(candidate_case)]
    return ScoreMatrix(query_case.id, candidate_case.id, "lexical", _lexical_values(q, c, params))


def _semantic_values(query_id, query_texts, cand_id, cand_texts, scorer) -> np.ndarray:
    pairs = [(a, b) for a in query_texts for b in cand_texts]
    try:
        flat = score_pairs(scorer, pairs)
    except ScorerError as exc:
        if exc.index is None:
            raise FusionError(f"scorer failed on ({query_id}, {cand_id}): {exc}") from exc
        i, j = divmod(exc.index, len(cand_texts))
        raise FusionError(
            f"scorer failed on query {query_id!r} paragraph {i} vs candidate {cand_id!r} paragraph {j}: {exc}"
        ) from exc
    return np.asarray(flat, dtype=float).reshape(len(query_texts), len(cand_texts))


def semantic_matrix(query_case: CaseDocument, candidate_case: CaseDocument, scorer) -> ScoreMatrix:
    values = _semantic_values(query_case.id, _kept_texts(query_case),
                              candidate_case.id, _kept_texts(candidate_case), scorer)
    return ScoreMatrix(query_case.id, candidate_case.id, "semantic", values)


def minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values, dtype=float)
    return (values - lo) / (hi - lo)


def fuse(lex: ScoreMatrix, sem: ScoreMatrix, config: FusionConfig = FusionConfig()) -> ScoreMatrix:
    if lex.channel != "lexical" or sem.channel != "semantic":
        raise FusionError(f"expected lexical and semantic channels, got {lex.channel}/{sem.channel}")
    if lex.shape != sem.shape:
        raise FusionError(f"dimension mismatch: lexical {lex.shape} vs semantic {sem.shape}")
    if (lex.query_case_id, lex.candidate_case_id) != (sem.query_case_id, sem.candidate_case_id):
        raise FusionError("lexical and semantic matrices belong to different case pairs")
    lexv = minmax(lex.values) if config.lexical_normalization == "per_matrix_minmax" else lex.values
    fused = config.alpha * sem.values + (1.0 - config.alpha) * lexv
    return ScoreMatrix(lex.query_case_id, lex.candidate_case_id, "fused", fused)


def aggregate_case_score(fused: ScoreMatrix) -> float:
    """Mean over query paragraphs of the best-matching candidate paragraph."""
    return float(fused.values.max(axis=1).mean())


class CaseCorpus:
    """Read-only retrieval store: case-level BM25 index plus per-paragraph tokens.

    Cases with no kept paragraphs are left out of the index entirely.
    """

    def __init__(self, docs: Sequence[CaseDocument], tokenizer: TokenizerConfig = TokenizerConfig()):
        self.tokenizer = tokenizer
        self.docs = {d.id: d for d in docs if d.kept_paragraphs}
        skipped = len(docs) - len(self.docs)
        if skipped:
            log.info("%d cases without kept paragraphs left out of the index", skipped)
        self._para_texts = {cid: _kept_texts(d) for cid, d in self.docs.items()}
        self._para_tokens = {
            cid: [tokenize(t, tokenizer) for t in texts] for cid, texts in self._para_texts.items()
        }
        self.case_index: InvertedIndex = build_index(
            (cid, [tok for para in toks for tok in para]) for cid, toks in self._para_tokens.items()
        )
        self._paragraph_stats: InvertedIndex | None = None

    @property
    def paragraph_stats(self) -> InvertedIndex:
        """tf-idf statistics with one unit per kept paragraph, for the baseline scorer."""
        if self._paragraph_stats is None:
            self._paragraph_stats = build_index(
                (f"{cid}#{j}", toks)
                for cid, paras in self._para_tokens.items()
                for j, toks in enumerate(paras)
            )
        return self._paragraph_stats

    def baseline_scorer(self) -> TfidfCosineScorer:
        return TfidfCosineScorer(self.paragraph_stats, self.tokenizer)

    def paragraphs(self, case_id: str) -> tuple[list[str], list[list[str]]]:
        return self._para_texts[case_id], self._para_tokens[case_id]


@dataclass
class CaseMatch:
    candidate_id: str
    score: float
    lexical: ScoreMatrix
    semantic: ScoreMatrix
    fused: ScoreMatrix


class _Serialized:
    def __init__(self, scorer):
        self._scorer = scorer
        self._lock = threading.Lock()

    def score(self, a, b):
        with self._lock:
            return self._scorer.score(a, b)

    def score_batch(self, pairs):
        with self._lock:
            return score_pairs(self._scorer, pairs)


def retrieve_detailed(
    query_case: CaseDocument,
    corpus: CaseCorpus,
    config: RetrievalConfig = RetrievalConfig(),
    scorer=None,
    jobs: int = 1,
) -> list[CaseMatch]:
    """Prune with whole-case BM25, then score every surviving candidate by fused matrices.

    Returns every pruned candidate sorted by score (desc) then id (asc);
    the query's own id is never a candidate.
    """
    if scorer is None:
        scorer = corpus.baseline_scorer()
    if jobs > 1 and getattr(scorer, "single_flight", False):
        scorer = _Serialized(scorer)
    q_texts = _kept_texts(query_case)
    q_tokens = [tokenize(t, corpus.tokenizer) for t in q_texts]
    whole = [tok for para in q_tokens for tok in para]
    candidates = prune_candidates(corpus.case_index, whole, config.prune_k, config.bm25, exclude=[query_case.id])
    fusion = config.fusion

    def score_candidate(cid: str) -> CaseMatch:
        c_texts, c_tokens = corpus.paragraphs(cid)
        lex = ScoreMatrix(query_case.id, cid, "lexical", _lexical_values(q_tokens, c_tokens, config.bm25))
        sem = ScoreMatrix(query_case.id, cid, "semantic",
                          _semantic_values(query_case.id, q_texts, cid, c_texts, scorer))
        fused = fuse(lex, sem, fusion)
        return CaseMatch(cid, aggregate_case_score(fused), lex, sem, fused)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            matches = list(pool.map(score_candidate, candidates))
    else:
        matches = [score_candidate(cid) for cid in candidates]
    matches.sort(key=lambda m: (-m.score, m.candidate_id))
    return matches


def select(matches: Sequence[CaseMatch], config: RetrievalConfig) -> list[CaseMatch]:
    """Apply the relative-score threshold and the ``top_n`` cutoff."""
    out = list(matches)
    if config.threshold is not None and out:
        floor = config.threshold * out[0].score
        out = [m for m in out if m.score >= floor]
    return out[: config.top_n]


def retrieve(
    query_case: CaseDocument,
    corpus: CaseCorpus,
    config: RetrievalConfig = RetrievalConfig(),
    scorer=None,
    jobs: int = 1,
) -> list[tuple[str, float]]:
    matches = retrieve_detailed(query_case, corpus, config, scorer, jobs)
    return [(m.candidate_id, m.score) for m in select(matches, config)]
