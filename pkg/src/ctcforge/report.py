"""Evaluation report rendering: per-utterance table and summary figure."""

from __future__ import annotations

from pathlib import Path

PER_UTT_COLUMNS = (
    "utt_id",
    "ref_length",
    "top1_errors",
    "top1_wer",
    "oracle_errors",
    "oracle_wer",
    "time_s",
)


def write_per_utterance_tsv(path: str | Path, rows: list[dict]) -> None:
    """One utterance per line, tab-separated, with a header row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(PER_UTT_COLUMNS) + "\n")
        for row in rows:
            fh.write(
                "\t".join(_format(row.get(col)) for col in PER_UTT_COLUMNS) + "\n"
            )


def _format(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def render_report_figure(path: str | Path, summary: dict, rows: list[dict]) -> None:
    """Two panels: per-utterance time vs. WER, and corpus top-1 vs. oracle WER."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_scatter, ax_bars) = plt.subplots(1, 2, figsize=(9, 3.5))

    times = [r["time_s"] for r in rows if r.get("time_s") is not None]
    wers = [r["top1_wer"] for r in rows if r.get("time_s") is not None]
    if times:
        ax_scatter.scatter(times, wers, s=14, alpha=0.7)
        ax_scatter.set_xlabel("decode time per utterance (s)")
    else:
        ax_scatter.hist([r["top1_wer"] for r in rows], bins=20)
        ax_scatter.set_xlabel("per-utterance WER (%)")
    ax_scatter.set_ylabel("WER (%)" if times else "utterances")
    ax_scatter.set_title("per-utterance")

    bars = ["top-1", "oracle"]
    values = [summary["wer"], summary["oracle_wer"]]
    ax_bars.bar(bars, values, color=["#4878d0", "#ee854a"])
    for x, v in enumerate(values):
        ax_bars.text(x, v, f"{v:.2f}", ha="center", va="bottom", fontsize=9)
    ax_bars.set_ylabel("WER (%)")
    ax_bars.set_title(f"corpus ({summary['utterances']} utts)")

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
