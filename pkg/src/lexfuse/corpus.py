"""Document ingestion: paragraph and sentence segmentation plus an English/French filter."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Protocol

from .lexical import TokenizerConfig, tokenize

SOURCE_KINDS = ("case_law", "statute_article", "bar_question")

_MARKER_RE = re.compile(r"^[ \t]*\[\d+\]", re.MULTILINE)
_BLANK_RUN_RE = re.compile(r"\n[ \t]*\n\s*")

# Words whose trailing period never ends a sentence. Lowercased, without the dot.
ABBREVIATIONS = frozenset(
    """
    no nos v vs mr mrs ms dr prof art arts s ss para paras p pp sec secs ch
    vol cf e.g i.e etc al fig j jj co corp inc ltd st ont app div supp cl
    sched reg regs u.s gen jr sr
    """.split()
)
_CLOSERS = "\"')]”’"
_OPENERS = "\"'([“‘"


class CorpusError(ValueError):
    """Malformed corpus input."""


@dataclass
class Paragraph:
    index: int
    text: str
    sentences: list[str] = field(default_factory=list)
    kept: bool = True


@dataclass
class CaseDocument:
    id: str
    paragraphs: list[Paragraph]
    source_kind: str = "case_law"

    @property
    def kept_paragraphs(self) -> list[Paragraph]:
        return [p for p in self.paragraphs if p.kept]

    def kept_text(self) -> str:
        return "\n".join(p.text for p in self.kept_paragraphs)


@dataclass
class AlignedBitext:
    doc_id: str
    lang_a: str
    lang_b: str
    pairs: list[tuple[str, str]]

    def __post_init__(self):
        if not self.pairs:
            raise CorpusError(f"bitext {self.doc_id!r} has no sentence pairs")
        for i, (a, b) in enumerate(self.pairs):
            if not a.strip() or not b.strip():
                raise CorpusError(f"bitext {self.doc_id!r} pair {i} has an empty side")


@dataclass(frozen=True)
class LangFilterConfig:
    min_ratio: float = 0.05


def segment_paragraphs(raw_text: str) -> list[Paragraph]:
    """Split case text into paragraphs.

    Lines opening with a bracketed number (``[12] ...``) start a new paragraph
    and the marker stays in the text. Text without any marker is split on
    blank-line runs instead.
    """
    starts = [m.start() for m in _MARKER_RE.finditer(raw_text)]
    if starts:
        bounds = ([0] if starts[0] > 0 else []) + starts + [len(raw_text)]
        pieces = [raw_text[a:b] for a, b in zip(bounds, bounds[1:])]
    else:
        pieces = _BLANK_RUN_RE.split(raw_text)
    texts = [p.strip() for p in pieces if p.strip()]
    if not texts and raw_text.strip():
        texts = [raw_text.strip()]
    return [Paragraph(index=i, text=t) for i, t in enumerate(texts)]


class SentenceSplitter(Protocol):
    def __call__(self, text: str) -> list[str]: ...


def _is_abbreviation(text: str, dot: int) -> bool:
    j = dot
    while j > 0 and not text[j - 1].isspace() and text[j - 1] not in _OPENERS:
        j -= 1
    word = text[j:dot].lower()
    return word in ABBREVIATIONS


def segment_sentences(paragraph_text: str) -> list[str]:
    """Rule-based splitter.

    A ``.``, ``?`` or ``!`` (plus any closing quotes/brackets) ends a sentence
    when followed by whitespace and an uppercase letter, or by end of text.
    Periods after a known abbreviation never split.
    """
    text = paragraph_text
    out = []
    begin = 0
    n = len(text)
    i = 0
    while i < n:
        ch = text[i]
        if ch in ".?!":
            end = i + 1
            while end < n and text[end] in _CLOSERS:
                end += 1
            k = end
            while k < n and text[k].isspace():
                k += 1
            if k == n:
                boundary = True
            elif k > end:
                nxt = text[k]
                if nxt in _OPENERS and k + 1 < n:
                    nxt = text[k + 1]
                boundary = nxt.isupper()
            else:
                boundary = False
            if boundary and ch == "." and _is_abbreviation(text, i):
                boundary = False
            if boundary:
                sentence = text[begin:end].strip()
                if sentence:
                    out.append(sentence)
                begin = end
                i = k
                continue
        i += 1
    tail = text[begin:].strip()
    if tail:
        out.append(tail)
    return out


@lru_cache(maxsize=None)
def load_stopwords(lang: str) -> frozenset[str]:
    raw = resources.files("lexfuse").joinpath("data").joinpath(f"stopwords_{lang}.txt").read_text("utf-8")
    return frozenset(w.strip() for w in raw.splitlines() if w.strip())


def stopword_ratios(text: str) -> tuple[float, float]:
    """(english, french) stopword ratios over unicode-word tokens."""
    tokens = tokenize(text, TokenizerConfig())
    if not tokens:
        return 0.0, 0.0
    en, fr = load_stopwords("en"), load_stopwords("fr")
    n = len(tokens)
    return sum(t in en for t in tokens) / n, sum(t in fr for t in tokens) / n


def filter_language(paragraph: Paragraph, config: LangFilterConfig = LangFilterConfig()) -> Paragraph:
    """Mark a paragraph dropped when it reads as French rather than English.

    Paragraphs with no tokens count as a 0/0 tie and are kept.
    """
    en, fr = stopword_ratios(paragraph.text)
    paragraph.kept = not (fr > en and fr >= config.min_ratio)
    return paragraph


def build_document(
    doc_id: str,
    kind: str,
    text: str | None = None,
    paragraphs: Iterable[str] | None = None,
    splitter: SentenceSplitter = segment_sentences,
    lang_config: LangFilterConfig | None = LangFilterConfig(),
) -> CaseDocument:
    if paragraphs is not None:
        paras = [Paragraph(index=i, text=t.strip()) for i, t in enumerate(p for p in paragraphs if p.strip())]
    else:
        paras = segment_paragraphs(text or "")
    for p in paras:
        p.sentences = splitter(p.text)
        if lang_config is not None:
            filter_language(p, lang_config)
    return CaseDocument(id=doc_id, paragraphs=paras, source_kind=kind)


def _jsonl_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise CorpusError(f"{path}:{lineno}: record is not an object")
            yield lineno, record


def ingest(
    path: str | Path,
    kind: str | None = None,
    splitter: SentenceSplitter = segment_sentences,
    lang_config: LangFilterConfig | None = LangFilterConfig(),
) -> list[CaseDocument]:
    """Load a corpus JSONL file, one document per record in file order.

    ``kind`` fills in records that carry no ``"kind"`` field; a record whose
    kind disagrees with it is rejected.
    """
    docs: list[CaseDocument] = []
    seen: set[str] = set()
    for lineno, rec in _jsonl_records(path):
        doc_id = rec.get("id")
        if not isinstance(doc_id, str) or not doc_id:
            raise CorpusError(f"{path}:{lineno}: missing or non-string \"id\"")
        if doc_id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate id {doc_id!r}")
        rec_kind = rec.get("kind", kind)
        if rec_kind not in SOURCE_KINDS:
            raise CorpusError(f"{path}:{lineno}: bad or missing \"kind\" {rec_kind!r}")
        if kind is not None and rec_kind != kind:
            raise CorpusError(f"{path}:{lineno}: kind {rec_kind!r} does not match expected {kind!r}")
        paragraphs = rec.get("paragraphs")
        text = rec.get("text")
        if paragraphs is not None:
            if not isinstance(paragraphs, list) or not all(isinstance(p, str) for p in paragraphs):
                raise CorpusError(f"{path}:{lineno}: \"paragraphs\" must be a list of strings")
        elif not isinstance(text, str) or not text.strip():
            raise CorpusError(f"{path}:{lineno}: record needs non-empty \"text\" or \"paragraphs\"")
        doc = build_document(doc_id, rec_kind, text=text, paragraphs=paragraphs,
                             splitter=splitter, lang_config=lang_config)
        if not doc.paragraphs:
            raise CorpusError(f"{path}:{lineno}: document {doc_id!r} has no non-empty paragraphs")
        seen.add(doc_id)
        docs.append(doc)
    return docs


def load_bitext(path: str | Path) -> list[AlignedBitext]:
    out = []
    for lineno, rec in _jsonl_records(path):
        try:
            pairs = [(str(a), str(b)) for a, b in rec["pairs"]]
            out.append(AlignedBitext(doc_id=str(rec["doc_id"]), lang_a=str(rec["lang_a"]),
                                     lang_b=str(rec["lang_b"]), pairs=pairs))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{path}:{lineno}: bad bitext record ({exc})") from None
    return out


def document_to_record(doc: CaseDocument) -> dict:
    """Serialized segmented form, as written by ``lexfuse ingest``."""
    return {
        "id": doc.id,
        "kind": doc.source_kind,
        "paragraphs": [
            {"index": p.index, "text": p.text, "sentences": p.sentences, "kept": p.kept}
            for p in doc.paragraphs
        ],
    }


def paragraph_units(docs: Iterable[CaseDocument], tokenizer: TokenizerConfig = TokenizerConfig()):
    """``(unit_id, tokens)`` for every kept paragraph, ids ``<doc>#<index>``."""
    for doc in docs:
        for p in doc.kept_paragraphs:
            yield f"{doc.id}#{p.index}", tokenize(p.text, tokenizer)


def case_units(docs: Iterable[CaseDocument], tokenizer: TokenizerConfig = TokenizerConfig()):
    """``(doc_id, tokens)`` over each document's concatenated kept paragraphs."""
    for doc in docs:
        yield doc.id, tokenize(doc.kept_text(), tokenizer)
