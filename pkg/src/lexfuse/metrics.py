"""Retrieval and classification metrics.

F2 is computed from the macro means: ``5 * P * R / (4 * P + R)`` with P and R
averaged over queries first. This is not the mean of per-query F2.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping


@dataclass
class EvalReport:
    return_count: int
    retrieved_count: int
    macro_precision: float
    macro_recall: float
    f2: float
    per_query: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_query"] = {q: {"precision": p, "recall": r} for q, (p, r) in sorted(self.per_query.items())}
        return d


def f2_score(precision: float, recall: float) -> float:
    denom = 4.0 * precision + recall
    return 0.0 if denom == 0 else 5.0 * precision * recall / denom


def evaluate_retrieval(
    predictions: Mapping[str, set[str] | frozenset[str]],
    gold: Mapping[str, set[str] | frozenset[str]],
) -> EvalReport:
    """Macro precision/recall over every gold query.

    A gold query without predictions counts as an empty prediction (P = R = 0).
    """
    for qid in predictions:
        if qid not in gold:
            raise KeyError(f"prediction for query {qid!r} has no gold entry")
    for qid, rel in gold.items():
        if not rel:
            raise ValueError(f"gold entry for query {qid!r} is empty")
    if not gold:
        raise ValueError("gold is empty")

    per_query = {}
    returned = retrieved = 0
    for qid in sorted(gold):
        pred = set(predictions.get(qid, ()))
        rel = set(gold[qid])
        hit = len(pred & rel)
        returned += len(pred)
        retrieved += hit
        per_query[qid] = (hit / len(pred) if pred else 0.0, hit / len(rel))
    n = len(per_query)
    p = sum(v[0] for v in per_query.values()) / n
    r = sum(v[1] for v in per_query.values()) / n
    return EvalReport(returned, retrieved, p, r, f2_score(p, r), per_query)


def evaluate_accuracy(predictions: Mapping[str, bool], gold: Mapping[str, bool]) -> float:
    if set(predictions) != set(gold):
        raise ValueError("prediction and gold ids differ")
    if not gold:
        raise ValueError("gold is empty")
    return sum(predictions[k] == gold[k] for k in gold) / len(gold)


def load_gold(path: str | Path) -> dict[str, set[str]]:
    """Gold JSONL: ``{"query_id": str, "relevant_ids": [str, ...]}`` per line."""
    gold: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                gold.setdefault(str(rec["query_id"]), set()).update(str(x) for x in rec["relevant_ids"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad gold record ({exc})") from None
    return gold
