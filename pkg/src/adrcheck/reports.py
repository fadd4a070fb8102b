"""Report rendering: JSON documents and Markdown tables."""

from __future__ import annotations

import json
from pathlib import Path

from .labels import LABEL_ORDER
from .metrics import AgreementReport, PerformanceReport

DEGENERATE_KAPPA = "perfect-degenerate"

_ZERO_DIVISION_FOOTER = (
    "Zero-denominator conventions: per-label precision/recall/F1 substitute 0 "
    "(flagged above); a zero MCC denominator yields MCC = 0."
)


def _round6(x: float) -> float:
    return round(x, 6)


def agreement_to_dict(report: AgreementReport) -> dict:
    return {
        "N": report.N,
        "n": report.n,
        "observed_agreement_mean": _round6(report.observed_agreement_mean),
        "expected_agreement": _round6(report.expected_agreement),
        "fleiss_kappa": DEGENERATE_KAPPA if report.degenerate else _round6(report.kappa),
        "per_label_agreement": {
            label.value: _round6(report.per_label_agreement[label]) for label in LABEL_ORDER
        },
        "class_frequency": {
            label.value: _round6(report.class_frequency[label]) for label in LABEL_ORDER
        },
        "pairwise_jaccard": [
            {
                "rater_a": a,
                "rater_b": b,
                "overall": _round6(pj.overall),
                "per_label": {label.value: _round6(v) for label, v in pj.per_label.items()},
            }
            for (a, b), pj in sorted(report.pairwise_jaccard.items())
        ],
    }


def agreement_markdown(report: AgreementReport) -> str:
    kappa = DEGENERATE_KAPPA if report.degenerate else f"{report.kappa:.3f}"
    lines = [
        "## Overall inter-rater agreement (Fleiss' kappa)",
        "",
        "| Metric | Value |",
        "|---|---|",
        f"| Number of items (N) | {report.N} |",
        f"| Number of raters (n) | {report.n} |",
        f"| Mean observed agreement | {report.observed_agreement_mean:.3f} |",
        f"| Expected agreement | {report.expected_agreement:.3f} |",
        f"| Fleiss' kappa | {kappa} |",
        "",
        "Quartile/agreement conventions: per-label agreement decomposes the mean "
        "observed agreement, so the label rows sum to it.",
        "",
        "## Agreement by label with class frequency",
        "",
        "| Label | Average agreement | Class frequency (%) |",
        "|---|---|---|",
    ]
    for label in LABEL_ORDER:
        lines.append(
            f"| {label.value} | {report.per_label_agreement[label]:.3f} "
            f"| {100 * report.class_frequency[label]:.1f} |"
        )
    lines += ["", "## Pairwise Jaccard (overall)", ""]
    raters = sorted({r for pair in report.pairwise_jaccard for r in pair})
    header = "| |" + "|".join(f" {r} " for r in raters) + "|"
    lines += [header, "|---|" + "---|" * len(raters)]
    for a in raters:
        row = [f"| {a} |"]
        for b in raters:
            if a == b:
                row.append(" 1.000 |")
            else:
                pj = report.pairwise_jaccard.get((a, b)) or report.pairwise_jaccard.get((b, a))
                row.append(f" {pj.overall:.3f} |" if pj else " - |")
        lines.append("".join(row))
    lines.append("")
    return "\n".join(lines)


def performance_to_dict(report: PerformanceReport) -> dict:
    return {
        "accuracy": _round6(report.accuracy),
        "mcc": _round6(report.mcc),
        "macro": {
            "precision": _round6(report.macro_precision),
            "recall": _round6(report.macro_recall),
            "f1": _round6(report.macro_f1),
        },
        "micro": {
            "precision": _round6(report.micro_precision),
            "recall": _round6(report.micro_recall),
            "f1": _round6(report.micro_f1),
        },
        "per_label": {
            label.value: {k: _round6(v) for k, v in report.per_label[label].items()}
            for label in LABEL_ORDER
        },
        "confusion_matrix": {
            "labels": [label.value for label in report.confusion.labels],
            "rows_truth_cols_prediction": report.confusion.counts.tolist(),
        },
        "zero_division_flags": list(report.zero_division_labels),
    }


def performance_markdown(report: PerformanceReport, model_id: str = "model") -> str:
    lines = [
        f"## Overall performance ({model_id})",
        "",
        "| Metric | Value |",
        "|---|---|",
        f"| Accuracy | {report.accuracy:.3f} |",
        f"| MCC | {report.mcc:.3f} |",
        f"| P (macro) | {report.macro_precision:.3f} |",
        f"| R (macro) | {report.macro_recall:.3f} |",
        f"| F1 (macro) | {report.macro_f1:.3f} |",
        f"| P (micro) | {report.micro_precision:.3f} |",
        f"| R (micro) | {report.micro_recall:.3f} |",
        f"| F1 (micro) | {report.micro_f1:.3f} |",
        "",
        f"## Class-wise performance ({model_id})",
        "",
        "| Metric | Value |",
        "|---|---|",
    ]
    for label in LABEL_ORDER:
        scores = report.per_label[label]
        lines += [
            f"| P({label.value}) | {scores['precision']:.3f} |",
            f"| R({label.value}) | {scores['recall']:.3f} |",
            f"| F1({label.value}) | {scores['f1']:.3f} |",
        ]
    lines += ["", _ZERO_DIVISION_FOOTER]
    if report.zero_division_labels:
        lines.append("Flagged zero denominators: " + ", ".join(report.zero_division_labels))
    lines.append("")
    return "\n".join(lines)


def write_json(data: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(data, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
