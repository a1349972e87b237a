"""Batch command-line interface.

Every subcommand accepts ``--config FILE.json`` whose keys are option names
with underscores (``prune_k``, ``alpha``, ...); explicit flags override it.
Errors are reported as one JSON line on stderr and a nonzero exit status.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .chunking import ChunkConfig, chunk_article, derive_chunk_labels
from .corpus import SOURCE_KINDS, LangFilterConfig, document_to_record, ingest, load_bitext
from .ensemble import combine, fit_weights, load_model_outputs, load_weights, save_weights
from .fusion import CaseCorpus, RetrievalConfig, retrieve_detailed, select
from .lexical import Bm25Params, TokenizerConfig, build_index, save_index, tokenize
from .metrics import evaluate_accuracy, evaluate_retrieval, load_gold
from .paralaw import generate_examples, load_random_pool, split_dataset, write_examples
from .scorers import SubprocessScorer
from .trainpairs import (
    POSITIVE,
    SILVER_RECIPE,
    ArticleStore,
    AugmentConfig,
    Question,
    SelfLabelConfig,
    augment_articles,
    generate_retrieval_pairs,
    generate_silver_supporting,
    read_pairs,
    self_label_refine,
    write_pairs,
)

log = logging.getLogger("lexfuse")

FORMATS = """\
file formats (all JSONL files hold one JSON object per line, UTF-8):
  corpus        {"id", "kind": case_law|statute_article|bar_question, "text"}
                or {"id", "kind", "paragraphs": [str, ...]} (pre-segmented)
  segmented     {"id", "kind", "paragraphs": [{"index","text","sentences","kept"}]}   (ingest output)
  index         JSON snapshot {"format":"lexfuse-index","version":1,"n_units","avg_length",
                "unit_lengths":{id:len},"postings":{term:[[id,tf],...]}}
  bitext        {"doc_id", "lang_a", "lang_b", "pairs": [[str, str], ...]}
  random pool   {"lang", "text"}
  gold          {"query_id", "relevant_ids": [str, ...]}
  run           {"query_id", "rank", "candidate_id", "score"}   (retrieve output, eval input)
  chunks        {"article_id", "start", "text"}
  pairs         {"query_id","passage_id","query","passage","label": pos|neg,"origin"}
  paralaw       {"first","second","lang_first","lang_second","nfsp": 0|1|null,"nmsp": 0|1|2}
  model outputs {"model_id", "query_id", "candidate_id", "score"};  weights: JSON {model_id: weight}
  labels        {"id", "label": true|false}   (eval --mode accuracy)
  scorer plugin stdin {"id": int, "a": str, "b": str} -> stdout {"id": int, "score": float in [0,1]}
"""


class CliError(Exception):
    pass


def _write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def _read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise CliError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return out


def _tokenizer(args) -> TokenizerConfig:
    return TokenizerConfig(mode=args.tokenizer)


def _lang(args) -> LangFilterConfig | None:
    return None if args.no_lang_filter else LangFilterConfig(args.min_ratio)


def _require_seed(args) -> int:
    if args.seed is None:
        raise CliError(f"{args.command} is stochastic and needs an explicit --seed")
    return args.seed


def _scorer(args):
    if args.scorer_command:
        return SubprocessScorer(args.scorer_command, timeout=args.scorer_timeout)
    return None


def _texts(path, kind=None) -> dict[str, str]:
    docs = ingest(path, kind, lang_config=None)
    return {d.id: "\n".join(p.text for p in d.paragraphs) for d in docs}


# --- subcommands -----------------------------------------------------------

def cmd_ingest(args) -> None:
    docs = ingest(args.corpus, args.kind, lang_config=_lang(args))
    _write_jsonl(args.output, (document_to_record(d) for d in docs))
    kept = sum(len(d.kept_paragraphs) for d in docs)
    total = sum(len(d.paragraphs) for d in docs)
    log.info("ingested %d documents, %d/%d paragraphs kept", len(docs), kept, total)


def cmd_index(args) -> None:
    from .corpus import case_units, paragraph_units

    docs = ingest(args.corpus, args.kind, lang_config=_lang(args))
    units = case_units if args.level == "case" else paragraph_units
    index = build_index(units(docs, _tokenizer(args)))
    save_index(index, args.output)
    log.info("indexed %d %s units, %d terms", index.n_units, args.level, len(index.postings))


def cmd_retrieve(args) -> None:
    config = RetrievalConfig(
        prune_k=args.prune_k, alpha=args.alpha, top_n=args.top_n, threshold=args.threshold,
        lexical_normalization=args.normalization, bm25=Bm25Params(args.k1, args.b),
    )
    corpus = CaseCorpus(ingest(args.corpus, None, lang_config=_lang(args)), _tokenizer(args))
    queries = ingest(args.queries, None, lang_config=_lang(args))
    scorer = _scorer(args)
    figure_dir = Path(args.figure_dir) if args.figure_dir else None
    if figure_dir:
        from .report import plot_score_matrices

        figure_dir.mkdir(parents=True, exist_ok=True)
    records = []
    try:
        for q in queries:
            matches = select(retrieve_detailed(q, corpus, config, scorer, jobs=args.jobs), config)
            for rank, m in enumerate(matches, start=1):
                records.append({"query_id": q.id, "rank": rank, "candidate_id": m.candidate_id, "score": m.score})
            if figure_dir and matches:
                top = matches[0]
                plot_score_matrices(top.lexical, top.semantic, top.fused, figure_dir / f"{q.id}.png")
    finally:
        if scorer is not None:
            scorer.close()
    _write_jsonl(args.output, records)
    log.info("retrieved for %d queries (alpha=%s, prune_k=%d)", len(queries), args.alpha, args.prune_k)


def cmd_chunk(args) -> None:
    tok = _tokenizer(args)
    cfg = ChunkConfig(args.window, args.stride)
    records = []
    for aid, text in _texts(args.articles, args.kind).items():
        for c in chunk_article(tokenize(text, tok), cfg, aid):
            records.append({"article_id": aid, "start": c.start, "text": tok.joiner.join(c.tokens)})
    _write_jsonl(args.output, records)
    log.info("wrote %d chunks (%d/%d)", len(records), args.window, args.stride)


def cmd_gen_pairs(args) -> None:
    if args.mode == "silver":
        seed = _require_seed(args)
        docs = ingest(args.corpus, None, lang_config=_lang(args))
        pairs = generate_silver_supporting(docs, args.ratio_neg, seed)
        write_pairs(pairs, args.output)
        meta = {"origin": "silver", "recipe": SILVER_RECIPE, "ratio_neg": args.ratio_neg, "seed": seed,
                "pairs": len(pairs)}
        Path(str(args.output) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
        return

    if not (args.queries and args.articles and args.gold):
        raise CliError("gen-pairs --mode retrieval needs --queries, --articles and --gold")
    tok = _tokenizer(args)
    store = ArticleStore(_texts(args.articles), tok)
    qtexts = _texts(args.queries)
    gold = load_gold(args.gold)
    questions = []
    for qid in sorted(gold):
        if qid not in qtexts:
            raise CliError(f"gold query {qid!r} missing from {args.queries}")
        given = sorted(gold[qid])
        ids = augment_articles(qtexts[qid], given, store, AugmentConfig(args.n_augment))
        questions.append(Question(qid, qtexts[qid], tuple(ids)))
    pairs = generate_retrieval_pairs(questions, store, args.neg_cap)
    if args.window:
        cfg = ChunkConfig(args.window, args.stride)
        chunked = []
        for p in pairs:
            chunks = chunk_article(store.tokens[p.passage_id], cfg, p.passage_id)
            chunked.extend(derive_chunk_labels(p.query_id, p.query_text, p.label, chunks, tok.joiner))
        pairs = chunked
    write_pairs(pairs, args.output)
    log.info("wrote %d pairs (%d positive)", len(pairs), sum(p.label == POSITIVE for p in pairs))


def cmd_self_label(args) -> None:
    pairs = read_pairs(args.pairs)
    predictor = _scorer(args)
    if predictor is None:
        from .scorers import TfidfCosineScorer

        tok = _tokenizer(args)
        texts = sorted({p.passage_text for p in pairs} | {p.query_text for p in pairs})
        stats = build_index((str(i), tokenize(t, tok)) for i, t in enumerate(texts))
        predictor = TfidfCosineScorer(stats, tok)
    config = SelfLabelConfig(args.e1, args.e2, args.threshold, args.iterations)
    try:
        refined = self_label_refine(pairs, predictor, config, jobs=args.jobs)
    finally:
        if hasattr(predictor, "close"):
            predictor.close()
    write_pairs(refined, args.output)


def cmd_paralaw(args) -> None:
    seed = _require_seed(args)
    pool = load_random_pool(args.random_pool)
    examples = []
    for k, bt in enumerate(load_bitext(args.bitext)):
        examples.extend(generate_examples(bt, pool, seed=seed + k, passes=args.passes))
    write_examples(examples, args.output)
    if args.split_ratio is not None:
        train, valid = split_dataset(examples, args.split_ratio, seed)
        stem = str(args.output)
        write_examples(train, stem + ".train.jsonl")
        write_examples(valid, stem + ".valid.jsonl")
    log.info("wrote %d pretraining examples", len(examples))


def cmd_ensemble(args) -> None:
    outputs = load_model_outputs(args.outputs)
    if args.weights:
        weights = load_weights(args.weights)
    elif args.gold:
        weights, f2 = fit_weights(outputs, load_gold(args.gold), args.grid_step, args.decision_threshold,
                                  jobs=args.jobs)
        log.info("fitted weights %s (dev F2 %.4f)", weights.weights, f2)
    else:
        raise CliError("ensemble needs --weights to apply or --gold to fit")
    if args.weights_out:
        save_weights(weights, args.weights_out)
    if args.output:
        records = []
        for qid, outs in outputs.items():
            for cid, score in sorted(combine(outs, weights).items(), key=lambda kv: (-kv[1], kv[0])):
                records.append({"query_id": qid, "candidate_id": cid, "score": score})
        _write_jsonl(args.output, records)


def cmd_eval(args) -> None:
    if args.mode == "accuracy":
        def labels(path):
            return {str(r["id"]): bool(r["label"]) for r in _read_jsonl(path)}

        acc = evaluate_accuracy(labels(args.predictions), labels(args.gold))
        payload = {"accuracy": acc}
        if args.output:
            Path(args.output).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"accuracy\t{acc:.4f}")
        return

    from .report import format_table, plot_eval_report, write_per_query_tsv

    preds: dict[str, set[str]] = {}
    for rec in _read_jsonl(args.predictions):
        preds.setdefault(str(rec["query_id"]), set()).add(str(rec["candidate_id"]))
    report = evaluate_retrieval(preds, load_gold(args.gold))
    table = format_table([(args.name, report)])
    if args.output:
        Path(args.output).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    if args.table:
        Path(args.table).write_text(table, encoding="utf-8")
    if args.tsv:
        write_per_query_tsv(report, args.tsv)
    if args.figure:
        plot_eval_report(report, args.figure)
    sys.stdout.write(table)


# --- parser ----------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of option defaults; flags override it")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1); output never depends on it")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (required by stochastic commands)")
    p.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")


def _corpus_opts(p, tokenizer=True, lang=True) -> None:
    if tokenizer:
        p.add_argument("--tokenizer", choices=("unicode_word", "character"), default="unicode_word",
                       help="token unit (default unicode_word; use character for Japanese)")
    if lang:
        p.add_argument("--no-lang-filter", action="store_true", help="keep French paragraphs")
        p.add_argument("--min-ratio", type=float, default=0.05,
                       help="minimum French stopword ratio to drop a paragraph (default 0.05)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexfuse",
        description="Legal retrieval with BM25/semantic score fusion and training-data generation.",
        epilog=FORMATS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"lexfuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_, epilog=FORMATS,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _common(p)
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "segment a corpus into paragraphs/sentences and filter French text")
    p.add_argument("--corpus", required=True)
    p.add_argument("--kind", choices=SOURCE_KINDS, default=None, help="kind for records without one")
    p.add_argument("--output", required=True)
    _corpus_opts(p, tokenizer=False)

    p = add("index", cmd_index, "build and save a BM25 index snapshot")
    p.add_argument("--corpus", required=True)
    p.add_argument("--kind", choices=SOURCE_KINDS, default=None)
    p.add_argument("--level", choices=("case", "paragraph"), default="case", help="unit granularity (default case)")
    p.add_argument("--output", required=True)
    _corpus_opts(p)

    p = add("retrieve", cmd_retrieve, "rank candidate cases for each query case")
    p.add_argument("--corpus", required=True, help="candidate cases (corpus JSONL)")
    p.add_argument("--queries", required=True, help="query cases (corpus JSONL)")
    p.add_argument("--output", required=True, help="run JSONL")
    p.add_argument("--alpha", type=float, default=0.7, help="semantic weight in the union score (default 0.7)")
    p.add_argument("--prune-k", type=int, default=100, help="BM25 candidates kept before matching (default 100)")
    p.add_argument("--top-n", type=int, default=5, help="answers per query (default 5)")
    p.add_argument("--threshold", type=float, default=None,
                   help="keep answers scoring >= threshold * best (default off)")
    p.add_argument("--normalization", choices=("per_matrix_minmax", "none"), default="per_matrix_minmax",
                   help="lexical channel scaling before fusion (default per_matrix_minmax)")
    p.add_argument("--k1", type=float, default=1.5, help="BM25 k1 (default 1.5)")
    p.add_argument("--b", type=float, default=0.75, help="BM25 b (default 0.75)")
    p.add_argument("--scorer-command", default=None,
                   help="external semantic scorer plugin command (default: built-in tf-idf cosine)")
    p.add_argument("--scorer-timeout", type=float, default=30.0, help="seconds per plugin reply (default 30)")
    p.add_argument("--figure-dir", default=None, help="write score-matrix heatmaps of each query's top case here")
    _corpus_opts(p)

    p = add("chunk", cmd_chunk, "split articles into sliding-window chunks")
    p.add_argument("--articles", required=True)
    p.add_argument("--kind", choices=SOURCE_KINDS, default=None)
    p.add_argument("--window", type=int, default=150, help="window size in tokens (default 150)")
    p.add_argument("--stride", type=int, default=50, help="stride in tokens (default 50)")
    p.add_argument("--output", required=True)
    _corpus_opts(p, lang=False)

    p = add("gen-pairs", cmd_gen_pairs, "generate labeled training pairs")
    p.add_argument("--mode", choices=("retrieval", "silver"), default="retrieval",
                   help="retrieval: gold + tf-idf negatives; silver: sentence pairs from cases (default retrieval)")
    p.add_argument("--queries", help="questions (corpus JSONL, retrieval mode)")
    p.add_argument("--articles", help="articles (corpus JSONL, retrieval mode)")
    p.add_argument("--gold", help="gold JSONL (retrieval mode)")
    p.add_argument("--corpus", help="cases (corpus JSONL, silver mode)")
    p.add_argument("--neg-cap", type=int, default=150, help="max negatives per question (default 150)")
    p.add_argument("--n-augment", type=int, default=0, help="tf-idf augmented articles per question (default 0)")
    p.add_argument("--window", type=int, default=0, help="chunk window; 0 disables chunking (default 0)")
    p.add_argument("--stride", type=int, default=50, help="chunk stride (default 50)")
    p.add_argument("--ratio-neg", type=int, default=1, help="silver negatives per positive (default 1)")
    p.add_argument("--output", required=True)
    _corpus_opts(p)

    p = add("self-label", cmd_self_label, "flip positives the predictor scores below threshold")
    p.add_argument("--pairs", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--threshold", type=float, default=0.5, help="flip threshold (default 0.5)")
    p.add_argument("--iterations", type=int, default=1, help="relabeling passes (default 1)")
    p.add_argument("--e1", type=int, default=2, help="epochs before relabeling, recorded only (default 2)")
    p.add_argument("--e2", type=int, default=1, help="epochs after relabeling, recorded only (default 1)")
    p.add_argument("--scorer-command", default=None, help="predictor plugin command (default: tf-idf cosine)")
    p.add_argument("--scorer-timeout", type=float, default=30.0)
    _corpus_opts(p, lang=False)

    p = add("paralaw", cmd_paralaw, "generate NFSP/NMSP cross-lingual pretraining examples")
    p.add_argument("--bitext", required=True)
    p.add_argument("--random-pool", required=True)
    p.add_argument("--passes", type=int, default=1, help="random-pairing passes (default 1)")
    p.add_argument("--split-ratio", type=float, default=None,
                   help="also write OUTPUT.train.jsonl / OUTPUT.valid.jsonl at this train ratio (e.g. 0.9)")
    p.add_argument("--output", required=True)

    p = add("ensemble", cmd_ensemble, "fit and/or apply min-max weighted model ensembles")
    p.add_argument("--outputs", required=True, help="model outputs JSONL")
    p.add_argument("--gold", help="dev gold JSONL; fits weights when --weights is absent")
    p.add_argument("--weights", help="weights JSON to apply")
    p.add_argument("--weights-out", help="write the used weights here")
    p.add_argument("--grid-step", type=float, default=0.1, help="simplex grid resolution (default 0.1)")
    p.add_argument("--decision-threshold", type=float, default=0.5,
                   help="combined score needed to predict relevant while fitting (default 0.5)")
    p.add_argument("--output", help="combined scores JSONL")

    p = add("eval", cmd_eval, "macro P/R/F2 of a run, or accuracy of binary labels")
    p.add_argument("--mode", choices=("retrieval", "accuracy"), default="retrieval")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--name", default="run", help="row label in the table (default run)")
    p.add_argument("--output", help="report JSON")
    p.add_argument("--table", help="aligned text table")
    p.add_argument("--tsv", help="per-query precision/recall TSV")
    p.add_argument("--figure", help="per-query P/R bar chart (PNG)")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(config) - known)
        if unknown:
            raise CliError(f"unknown config keys for {args.command}: {unknown}")
        subparser.set_defaults(**config)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s",
                            stream=sys.stderr)
        if args.jobs < 1:
            raise CliError("--jobs must be >= 1")
        args.func(args)
    except SystemExit:
        raise
    except Exception as exc:
        msg = str(exc).replace("\n", " ")
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": msg}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
