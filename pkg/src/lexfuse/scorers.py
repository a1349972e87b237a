"""Semantic pair scorers.

Any object with ``score(text_a, text_b) -> float`` in [0, 1] can act as the
semantic channel. An optional ``score_batch(pairs)`` is used when present, and
``single_flight = True`` asks the engine to never call it concurrently.

External models plug in through a line-delimited JSON subprocess protocol:
the engine writes ``{"id": int, "a": str, "b": str}`` per line, the plugin
answers ``{"id": int, "score": float}`` per line in any order, and EOF on the
plugin's stdin means shut down.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import shlex
import subprocess
import threading
from typing import Protocol, Sequence, runtime_checkable

from .lexical import InvertedIndex, TokenizerConfig, cosine, tfidf_vector, tokenize

log = logging.getLogger(__name__)


class ScorerError(RuntimeError):
    """A scorer failed or broke its contract. ``index`` is the offending pair's batch position."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


@runtime_checkable
class SemanticScorer(Protocol):
    def score(self, text_a: str, text_b: str) -> float: ...


def check_score(value, index: int | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScorerError(f"non-numeric score {value!r}", index)
    value = float(value)
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ScorerError(f"score {value!r} outside [0, 1]", index)
    return value


def score_pairs(scorer, pairs: Sequence[tuple[str, str]]) -> list[float]:
    """Score a batch through ``score_batch`` if the scorer has one, validating every value."""
    batch = getattr(scorer, "score_batch", None)
    if batch is not None:
        raw = list(batch(pairs))
        if len(raw) != len(pairs):
            raise ScorerError(f"scorer returned {len(raw)} scores for {len(pairs)} pairs")
        return [check_score(v, i) for i, v in enumerate(raw)]
    out = []
    for i, (a, b) in enumerate(pairs):
        try:
            v = scorer.score(a, b)
        except ScorerError as exc:
            exc.index = i
            raise
        except Exception as exc:
            raise ScorerError(f"scorer raised {type(exc).__name__}: {exc}", i) from exc
        out.append(check_score(v, i))
    return out


class TfidfCosineScorer:
    """Deterministic baseline: tf-idf cosine under fixed corpus statistics."""

    single_flight = False

    def __init__(self, stats: InvertedIndex, tokenizer: TokenizerConfig = TokenizerConfig()):
        if stats.n_units == 0:
            raise ValueError("tf-idf statistics need at least one unit")
        self.stats = stats
        self.tokenizer = tokenizer
        self._cache: dict[str, dict[str, float]] = {}

    def _vector(self, text: str) -> dict[str, float]:
        vec = self._cache.get(text)
        if vec is None:
            vec = tfidf_vector(tokenize(text, self.tokenizer), self.stats)
            self._cache[text] = vec
        return vec

    def score(self, text_a: str, text_b: str) -> float:
        return cosine(self._vector(text_a), self._vector(text_b))


_EOF = object()


def _pump(stream, lines: queue.Queue) -> None:
    for line in stream:
        lines.put(line)
    lines.put(_EOF)


class SubprocessScorer:
    """Client for the line-delimited JSON scorer protocol.

    The plugin process is started lazily and kept alive across batches.
    A reply that takes longer than ``timeout`` seconds, a malformed line, an
    unknown id or a non-numeric score all raise :class:`ScorerError`.
    """

    single_flight = True

    def __init__(self, command: str | Sequence[str], timeout: float = 30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._next_id = 0
        self._lock = threading.Lock()

    def _start(self) -> subprocess.Popen:
        if self._proc is None:
            log.debug("starting scorer plugin: %s", self.command)
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
            self._lines = queue.Queue()
            threading.Thread(target=_pump, args=(self._proc.stdout, self._lines), daemon=True).start()
        return self._proc

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        with self._lock:
            return self._score_batch(pairs)

    def _score_batch(self, pairs):
        proc = self._start()
        if proc.poll() is not None:
            raise ScorerError(f"scorer plugin exited with status {proc.returncode}")
        pending = {}
        requests = []
        for i, (a, b) in enumerate(pairs):
            rid = self._next_id
            self._next_id += 1
            pending[rid] = i
            requests.append(json.dumps({"id": rid, "a": a, "b": b}, ensure_ascii=False) + "\n")

        def write():
            try:
                proc.stdin.writelines(requests)
                proc.stdin.flush()
            except (BrokenPipeError, OSError):
                pass

        writer = threading.Thread(target=write, daemon=True)
        writer.start()
        scores: list[float | None] = [None] * len(pairs)
        while pending:
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                self.close(kill=True)
                raise ScorerError(f"scorer plugin timed out after {self.timeout}s",
                                  min(pending.values())) from None
            if line is _EOF:
                raise ScorerError("scorer plugin closed its output", min(pending.values()))
            if not line.strip():
                continue
            try:
                reply = json.loads(line)
                rid = reply["id"]
                raw = reply["score"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise ScorerError(f"malformed scorer reply {line.strip()!r}") from None
            if isinstance(rid, bool) or not isinstance(rid, int) or rid not in pending:
                raise ScorerError(f"scorer reply has unknown id {rid!r}")
            idx = pending.pop(rid)
            scores[idx] = check_score(raw, idx)
        writer.join()
        return scores  # type: ignore[return-value]

    def score(self, text_a: str, text_b: str) -> float:
        return self.score_batch([(text_a, text_b)])[0]

    def close(self, kill: bool = False) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        if kill:
            proc.kill()
        else:
            try:
                proc.stdin.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=self.timeout)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
