"""Evaluation: exact/parametric matching, Top-k scoring over slot
categories and frequency buckets, and report emission (JSON, aligned text,
CSV, and bar-chart figures)."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field

from .frontend import GroundTruthRecord
from .types_core import PyType, TypeParseError, erase_parameters, parse_type_expr

CATEGORIES = ("argument", "return", "local", "all", "user-defined", "rare", "common")


def exact_match(pred: PyType, truth: PyType) -> bool:
    """Structural equality of normalized trees (Optional/Union and container
    element order are canonicalized at parse time)."""
    return pred == truth


def match_to_parametric(pred: PyType, truth: PyType) -> bool:
    """Equality after erasing every parameter list, at all depths reducing a
    type to its outermost constructor name."""
    return erase_parameters(pred) == erase_parameters(truth)


@dataclass
class Report:
    ks: tuple[int, ...]
    fractions: dict[str, dict[int, dict[str, float]]] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    rare_threshold: float = 0.001
    key_mismatches: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "ks": list(self.ks),
            "rare_threshold": self.rare_threshold,
            "counts": self.counts,
            "metrics": {
                cat: {
                    f"top{k}": self.fractions[cat][k] for k in self.ks
                }
                for cat in self.fractions
            },
            "key_mismatches": self.key_mismatches,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_text(self) -> str:
        header = ["Category", "N"]
        for k in self.ks:
            header += [f"Top-{k} Exact", f"Top-{k} Param"]
        rows = [header]
        for cat in CATEGORIES:
            if cat not in self.fractions:
                continue
            row = [cat, str(self.counts.get(cat, 0))]
            for k in self.ks:
                cell = self.fractions[cat][k]
                row += [f"{cell['exact_match']:.2f}", f"{cell['match_to_parametric']:.2f}"]
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = []
        for i, row in enumerate(rows):
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        header = ["category", "n"]
        for k in self.ks:
            header += [f"top{k}_exact_match", f"top{k}_match_to_parametric"]
        writer.writerow(header)
        for cat in CATEGORIES:
            if cat not in self.fractions:
                continue
            row = [cat, self.counts.get(cat, 0)]
            for k in self.ks:
                cell = self.fractions[cat][k]
                row += [cell["exact_match"], cell["match_to_parametric"]]
            writer.writerow(row)
        return buf.getvalue()


def truth_key(rec: GroundTruthRecord) -> str:
    return f"{rec.function}:{rec.kind}:{rec.name}"


def _parse_or_none(text: str) -> PyType | None:
    try:
        return parse_type_expr(text)
    except TypeParseError:
        return None


def evaluate(
    preds: dict[str, list[str]],
    truths: list[GroundTruthRecord],
    ks: tuple[int, ...] = (1, 3, 5),
    rare_threshold: float = 0.001,
    user_type_names: set[str] | None = None,
) -> Report:
    """Top-k counts a hit when any of the first k ranked candidates matches.
    Slots without predictions count as misses. Buckets: rare = annotation
    whose frequency proportion among the truths is below the threshold;
    user-defined = annotation whose outermost name is a collected user type.
    Prediction keys that match no truth are reported, not fatal."""
    user_type_names = user_type_names or set()
    report = Report(ks=tuple(ks), rare_threshold=rare_threshold)

    freq = Counter(rec.annotation.strip() for rec in truths)
    total = max(len(truths), 1)

    matched_keys = set()
    hits: dict[str, dict[int, dict[str, int]]] = {
        cat: {k: {"exact_match": 0, "match_to_parametric": 0} for k in ks}
        for cat in CATEGORIES
    }
    counts: Counter = Counter()

    for rec in truths:
        truth_type = _parse_or_none(rec.annotation)
        if truth_type is None:
            continue
        key = truth_key(rec)
        matched_keys.add(key)
        proportion = freq[rec.annotation.strip()] / total
        rec.frequency_bucket = "rare" if proportion < rare_threshold else "common"
        cats = [rec.kind, "all", rec.frequency_bucket]
        if erase_parameters(truth_type) in user_type_names:
            cats.append("user-defined")
        ranked = [
            t for t in (_parse_or_none(p) for p in preds.get(key, [])) if t is not None
        ]
        for cat in cats:
            counts[cat] += 1
            for k in ks:
                window = ranked[:k]
                if any(exact_match(p, truth_type) for p in window):
                    hits[cat][k]["exact_match"] += 1
                if any(match_to_parametric(p, truth_type) for p in window):
                    hits[cat][k]["match_to_parametric"] += 1

    report.key_mismatches = sorted(set(preds) - matched_keys)
    for cat in CATEGORIES:
        if counts[cat] == 0:
            continue
        report.counts[cat] = counts[cat]
        report.fractions[cat] = {
            k: {
                metric: hits[cat][k][metric] / counts[cat]
                for metric in ("exact_match", "match_to_parametric")
            }
            for k in ks
        }
    return report


def render_figures(report: Report, path: str) -> None:
    """Grouped bar chart of Top-k fractions per category, written to disk."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cats = [c for c in CATEGORIES if c in report.fractions]
    fig, axes = plt.subplots(1, 2, figsize=(max(8, 2 * len(cats)), 4), sharey=True)
    width = 0.8 / max(len(report.ks), 1)
    for ax, metric, title in zip(
        axes, ("exact_match", "match_to_parametric"), ("Exact Match", "Match to Parametric")
    ):
        for i, k in enumerate(report.ks):
            values = [report.fractions[c][k][metric] for c in cats]
            positions = [j + i * width for j in range(len(cats))]
            ax.bar(positions, values, width=width, label=f"Top-{k}")
        ax.set_xticks([j + width * (len(report.ks) - 1) / 2 for j in range(len(cats))])
        ax.set_xticklabels(cats, rotation=30, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_title(title)
        ax.grid(axis="y", alpha=0.3)
    axes[0].set_ylabel("fraction")
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def load_truths_jsonl(text: str) -> list[GroundTruthRecord]:
    """One JSON object per line: {"function", "kind", "name", "annotation"}."""
    records = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        obj = json.loads(line)
        records.append(
            GroundTruthRecord(
                function=obj["function"],
                kind=obj["kind"],
                name=obj["name"],
                annotation=obj["annotation"],
                line=int(obj.get("line", 0)),
            )
        )
    return records
