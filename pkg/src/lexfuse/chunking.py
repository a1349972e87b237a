"""Sliding-window chunking of long articles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .trainpairs import LabeledPair

# window/stride settings explored for statute retrieval; 150/50 worked best
REPORTED_SETTINGS = ((110, 20), (150, 10), (150, 20), (150, 40), (150, 50), (200, 50), (300, 50))


@dataclass(frozen=True)
class ChunkConfig:
    window_size: int = 150
    stride: int = 50

    def __post_init__(self):
        if not 1 <= self.stride <= self.window_size:
            raise ValueError(f"need 1 <= stride <= window_size, got {self.window_size}/{self.stride}")


@dataclass(frozen=True)
class Chunk:
    article_id: str
    start: int
    tokens: tuple[str, ...]
    config: ChunkConfig

    @property
    def end(self) -> int:
        return self.start + len(self.tokens)

    @property
    def chunk_id(self) -> str:
        return f"{self.article_id}@{self.start}"


def window_starts(length: int, config: ChunkConfig) -> list[int]:
    """Start offsets: 0, stride, 2*stride, ... plus one tail window snapped to the end."""
    if length == 0:
        return []
    w, s = config.window_size, config.stride
    if length <= w:
        return [0]
    starts = list(range(0, length - w + 1, s))
    if starts[-1] + w < length:
        starts.append(length - w)
    return starts


def chunk_article(tokens: Sequence[str], config: ChunkConfig, article_id: str = "") -> list[Chunk]:
    return [
        Chunk(article_id, st, tuple(tokens[st:st + config.window_size]), config)
        for st in window_starts(len(tokens), config)
    ]


def derive_chunk_labels(
    query_id: str,
    query_text: str,
    label: str,
    chunks: Sequence[Chunk],
    joiner: str = " ",
) -> list[LabeledPair]:
    """Every (question, chunk) pair inherits the (question, article) label."""
    return [
        LabeledPair(query_id, c.chunk_id, query_text, joiner.join(c.tokens), label, "derived_chunk")
        for c in chunks
    ]
