"""Text, TSV and figure renderings of evaluation reports and score matrices."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import EvalReport  # noqa: E402

TABLE_COLUMNS = ("Run", "Return", "Retrieved", "P", "R", "F2")

# PNG metadata left out so repeated renders are byte-identical
_SAVE_KW = {"dpi": 100, "metadata": {"Software": None}}


def format_table(rows: list[tuple[str, EvalReport]]) -> str:
    """Aligned plain-text table; P/R/F2 in percent with two decimals."""
    cells = [TABLE_COLUMNS] + [
        (name, str(r.return_count), str(r.retrieved_count),
         f"{100 * r.macro_precision:.2f}", f"{100 * r.macro_recall:.2f}", f"{100 * r.f2:.2f}")
        for name, r in rows
    ]
    widths = [max(len(row[i]) for row in cells) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for k, row in enumerate(cells):
        first = row[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join([first, *rest]))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_per_query_tsv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("query_id\tprecision\trecall\n")
        for qid, (p, r) in sorted(report.per_query.items()):
            fh.write(f"{qid}\t{p:.6f}\t{r:.6f}\n")


def plot_eval_report(report: EvalReport, path: str | Path, title: str = "") -> None:
    """Per-query precision/recall bars with the macro means as dashed lines."""
    qids = sorted(report.per_query)
    p = np.array([report.per_query[q][0] for q in qids])
    r = np.array([report.per_query[q][1] for q in qids])
    x = np.arange(len(qids))
    fig, ax = plt.subplots(figsize=(max(6.0, 0.35 * len(qids) + 2), 4))
    ax.bar(x - 0.2, p, width=0.4, label="precision", color="#1b1f8a")
    ax.bar(x + 0.2, r, width=0.4, label="recall", color="#941b22")
    ax.axhline(report.macro_precision, color="#1b1f8a", ls="--", lw=1)
    ax.axhline(report.macro_recall, color="#941b22", ls="--", lw=1)
    ax.set_xticks(x)
    ax.set_xticklabels(qids, rotation=90, fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(title or f"macro P={report.macro_precision:.4f}  R={report.macro_recall:.4f}  F2={report.f2:.4f}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_score_matrices(lexical, semantic, fused, path: str | Path) -> None:
    """Side-by-side heatmaps of one case pair's lexical, semantic and fused channels."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    for ax, m in zip(axes, (lexical, semantic, fused)):
        im = ax.imshow(m.values, aspect="auto", cmap="viridis", interpolation="nearest")
        ax.set_title(m.channel)
        ax.set_xlabel(f"{m.candidate_case_id} paragraph")
        ax.set_ylabel(f"{m.query_case_id} paragraph")
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
