"""Weighted ensembling of min-max normalized model scores."""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from .metrics import evaluate_retrieval


@dataclass
class ModelOutputs:
    model_id: str
    scores: dict[str, float]

    def __post_init__(self):
        if not self.scores:
            raise ValueError(f"model {self.model_id!r} has no scores")
        if not all(math.isfinite(v) for v in self.scores.values()):
            raise ValueError(f"model {self.model_id!r} has non-finite scores")


@dataclass
class EnsembleWeights:
    weights: dict[str, float]

    def __post_init__(self):
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("ensemble weights must be >= 0")
        if abs(sum(self.weights.values()) - 1.0) > 1e-9:
            raise ValueError(f"ensemble weights must sum to 1, got {sum(self.weights.values())}")


def minmax_normalize(scores: Mapping[str, float]) -> dict[str, float]:
    if not scores:
        raise ValueError("cannot normalize an empty score map")
    lo, hi = min(scores.values()), max(scores.values())
    if hi == lo:
        return dict.fromkeys(scores, 0.0)
    return {k: (v - lo) / (hi - lo) for k, v in scores.items()}


def combine(outputs: Sequence[ModelOutputs], weights: EnsembleWeights) -> dict[str, float]:
    by_model = {o.model_id: o for o in outputs}
    missing = set(weights.weights) - set(by_model)
    if missing:
        raise KeyError(f"no outputs for weighted models {sorted(missing)}")
    used = [by_model[m] for m in weights.weights]
    keys = set(used[0].scores)
    for o in used[1:]:
        if set(o.scores) != keys:
            raise ValueError(f"model {o.model_id!r} scores a different candidate set")
    combined = dict.fromkeys(sorted(keys), 0.0)
    for o in used:
        w = weights.weights[o.model_id]
        for k, v in minmax_normalize(o.scores).items():
            combined[k] += w * v
    return {k: min(1.0, max(0.0, v)) for k, v in combined.items()}


def simplex_grid(n_models: int, step: float) -> Iterator[tuple[float, ...]]:
    """Weight vectors on the simplex at resolution ``step``.

    Enumerated with the first model's weight ascending slowest, i.e. the
    lexicographic order of integer compositions: for two models and step 0.5
    this yields (0, 1), (0.5, 0.5), (1, 0).
    """
    units = round(1.0 / step)
    if units < 1 or abs(units * step - 1.0) > 1e-9:
        raise ValueError(f"grid step must divide 1, got {step}")
    for head in itertools.product(range(units + 1), repeat=n_models - 1):
        rest = units - sum(head)
        if rest >= 0:
            yield tuple(k / units for k in (*head, rest))


def predict_sets(scores: Mapping[str, float], threshold: float) -> set[str]:
    return {k for k, v in scores.items() if v >= threshold}


def fit_weights(
    dev_outputs: Mapping[str, Sequence[ModelOutputs]],
    dev_gold: Mapping[str, set[str]],
    grid_step: float = 0.1,
    threshold: float = 0.5,
    jobs: int = 1,
) -> tuple[EnsembleWeights, float]:
    """Grid-search ensemble weights maximizing macro F2 on a dev set.

    ``dev_outputs`` maps query id to that query's per-model outputs; a
    candidate is predicted relevant when its combined score is at least
    ``threshold``. Returns the weights and their F2; ties go to the earliest
    grid point.
    """
    if not dev_gold:
        raise ValueError("dev gold is empty")
    model_ids = sorted({o.model_id for outs in dev_outputs.values() for o in outs})
    if not model_ids:
        raise ValueError("no model outputs")
    grid = list(simplex_grid(len(model_ids), grid_step))

    def objective(point: tuple[float, ...]) -> float:
        w = EnsembleWeights(dict(zip(model_ids, point)))
        preds = {q: predict_sets(combine(outs, w), threshold) for q, outs in dev_outputs.items()}
        return evaluate_retrieval(preds, dev_gold).f2

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(objective, grid))
    else:
        values = [objective(p) for p in grid]
    best = max(range(len(grid)), key=lambda i: (values[i], -i))
    return EnsembleWeights(dict(zip(model_ids, grid[best]))), values[best]


def load_model_outputs(path: str | Path) -> dict[str, list[ModelOutputs]]:
    """Model-output JSONL ``{"model_id","query_id","candidate_id","score"}`` grouped by query."""
    table: dict[str, dict[str, dict[str, float]]] = defaultdict(lambda: defaultdict(dict))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                table[str(rec["query_id"])][str(rec["model_id"])][str(rec["candidate_id"])] = float(rec["score"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad model-output record ({exc})") from None
    return {
        q: [ModelOutputs(m, dict(scores)) for m, scores in sorted(models.items())]
        for q, models in sorted(table.items())
    }


def save_weights(weights: EnsembleWeights, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dict(sorted(weights.weights.items())), fh, indent=2)
        fh.write("\n")


def load_weights(path: str | Path) -> EnsembleWeights:
    with open(path, encoding="utf-8") as fh:
        return EnsembleWeights({str(k): float(v) for k, v in json.load(fh).items()})
