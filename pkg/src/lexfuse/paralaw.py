"""Cross-lingual sentence-pair pretraining data (NFSP binary and NMSP 3-class labels).

For each adjacent index i of an aligned bitext with sentences A_i (language a)
and B_i (language b), twelve examples are emitted in this order::

    reversed  (A_i+1, A_i) (B_i+1, B_i) (B_i+1, A_i) (A_i+1, B_i)   nmsp=2, nfsp=-
    forward   (B_i, B_i+1) (A_i, A_i+1)                             nmsp=1, nfsp=-
              (A_i, B_i+1) (B_i, A_i+1)                             nmsp=1, nfsp=1
    random    (A_i, rB) (B_i, rA)                                   nmsp=0, nfsp=0
              (A_i, rA) (B_i, rB)                                   nmsp=0, nfsp=-

where rX is drawn from the random pool of language X. NFSP is only defined
on cross-lingual forward and random pairs.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import AlignedBitext

log = logging.getLogger(__name__)

NMSP_RANDOM, NMSP_NEXT, NMSP_PREVIOUS = 0, 1, 2

# (first side, first offset, second side, second offset) with side "a"/"b"
_REVERSED = (("a", 1, "a", 0), ("b", 1, "b", 0), ("b", 1, "a", 0), ("a", 1, "b", 0))
_FORWARD = (("b", 0, "b", 1), ("a", 0, "a", 1), ("a", 0, "b", 1), ("b", 0, "a", 1))
# (first side, side whose language the random second sentence is drawn in)
_RANDOM = (("a", "b"), ("b", "a"), ("a", "a"), ("b", "b"))


@dataclass(frozen=True)
class PretrainExample:
    first: str
    second: str
    lang_first: str
    lang_second: str
    nfsp_label: int | None
    nmsp_label: int

    def __post_init__(self):
        if self.nmsp_label not in (0, 1, 2):
            raise ValueError(f"nmsp label must be 0, 1 or 2, got {self.nmsp_label}")
        cross = self.lang_first != self.lang_second
        if self.nfsp_label is not None and not (cross and self.nmsp_label in (0, 1)):
            raise ValueError("nfsp is only defined for cross-lingual next/random pairs")

    def to_record(self) -> dict:
        return {
            "first": self.first,
            "second": self.second,
            "lang_first": self.lang_first,
            "lang_second": self.lang_second,
            "nfsp": self.nfsp_label,
            "nmsp": self.nmsp_label,
        }


def _example(first, second, lf, ls, nmsp) -> PretrainExample:
    nfsp = None
    if lf != ls and nmsp != NMSP_PREVIOUS:
        nfsp = 1 if nmsp == NMSP_NEXT else 0
    return PretrainExample(first, second, lf, ls, nfsp, nmsp)


def generate_examples(
    bitext: AlignedBitext,
    random_pool: Mapping[str, Sequence[str]],
    seed: int = 0,
    passes: int = 1,
) -> list[PretrainExample]:
    """Twelve labeled examples per adjacent sentence index, per pass.

    Indices whose non-random pairs would pair a sentence with identical text
    are skipped whole, so the three NMSP classes stay balanced.
    """
    if len(bitext.pairs) < 2:
        raise ValueError(f"bitext {bitext.doc_id!r} needs at least 2 sentence pairs")
    if passes < 1:
        raise ValueError("passes must be >= 1")
    lang = {"a": bitext.lang_a, "b": bitext.lang_b}
    pools = {}
    for side, code in lang.items():
        pool = list(random_pool.get(code, ()))
        if not pool:
            raise ValueError(f"random pool for language {code!r} is empty")
        pools[code] = pool
    in_bitext = {s for pair in bitext.pairs for s in pair}
    clash = sorted(s for pool in pools.values() for s in pool if s in in_bitext)
    if clash:
        raise ValueError(f"random pool sentences occur in the bitext: {clash[:3]}")

    rng = random.Random(seed)
    sent = {"a": [a for a, _ in bitext.pairs], "b": [b for _, b in bitext.pairs]}
    out: list[PretrainExample] = []
    for _ in range(passes):
        for i in range(len(bitext.pairs) - 1):
            ordered = [
                (sent[fs][i + fo], sent[ss][i + so], lang[fs], lang[ss], nmsp)
                for block, nmsp in ((_REVERSED, NMSP_PREVIOUS), (_FORWARD, NMSP_NEXT))
                for fs, fo, ss, so in block
            ]
            if any(f == s for f, s, *_ in ordered):
                log.warning("bitext %s index %d pairs identical sentences; skipped", bitext.doc_id, i)
                continue
            out.extend(_example(*row) for row in ordered)
            for fs, rs in _RANDOM:
                rlang = lang[rs]
                out.append(_example(sent[fs][i], rng.choice(pools[rlang]), lang[fs], rlang, NMSP_RANDOM))
    return out


def split_dataset(examples: Sequence, ratio_train: float, seed: int = 0) -> tuple[list, list]:
    """Seeded shuffle, then the first ``round(n * ratio_train)`` items go to training."""
    if not 0.0 < ratio_train < 1.0:
        raise ValueError(f"ratio_train must be in (0, 1), got {ratio_train}")
    items = list(examples)
    random.Random(seed).shuffle(items)
    n_train = round(len(items) * ratio_train)
    return items[:n_train], items[n_train:]


def load_random_pool(path: str | Path) -> dict[str, list[str]]:
    """Random-sentence pool JSONL: ``{"lang": str, "text": str}`` per line."""
    pool: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pool.setdefault(str(rec["lang"]), []).append(str(rec["text"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad pool record ({exc})") from None
    return pool


def write_examples(examples: Iterable[PretrainExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_record(), ensure_ascii=False) + "\n")
