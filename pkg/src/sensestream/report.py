"""CSV serialization and aggregation of per-utterance session metrics.

Floats are written with six decimals and LF line endings. Aggregates are
computed from the serialized (rounded) per-utterance values, so aggregating
a metrics file read back from disk gives the same bytes as aggregating the
in-memory results.
"""

from __future__ import annotations

import csv
import io
import math

UTTERANCE_COLUMNS = (
    "utterance_id",
    "policy",
    "gamma",
    "tag",
    "bleu",
    "laal_ideal_s",
    "laal_ca_s",
    "avg_decision_ms",
    "rtf",
    "num_writes",
)
AGGREGATE_COLUMNS = (
    "policy",
    "gamma",
    "tag",
    "n_utterances",
    "mean_bleu",
    "mean_laal_ideal_s",
    "mean_laal_ca_s",
    "mean_avg_decision_ms",
    "mean_rtf",
    "total_writes",
)
_MEANS = ("bleu", "laal_ideal_s", "laal_ca_s", "avg_decision_ms", "rtf")


def fmt(x: float) -> str:
    out = f"{x:.6f}"
    return "0.000000" if out == "-0.000000" else out


def utterance_row(metrics: dict) -> dict:
    """String-valued CSV row for one ``SessionResult.metrics()`` dict."""
    row = {
        "utterance_id": metrics["utterance_id"],
        "policy": metrics["policy"],
        "gamma": "" if metrics["gamma"] is None else fmt(metrics["gamma"]),
        "tag": metrics["tag"] or "",
        "num_writes": str(int(metrics["num_writes"])),
    }
    for key in _MEANS:
        row[key] = fmt(metrics[key])
    return row


def _to_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([row[c] for c in columns])
    return buf.getvalue()


def utterance_csv(rows) -> str:
    return _to_csv(UTTERANCE_COLUMNS, rows)


def aggregate_csv(rows) -> str:
    return _to_csv(AGGREGATE_COLUMNS, rows)


def read_utterance_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != UTTERANCE_COLUMNS:
        raise ValueError(f"expected columns {','.join(UTTERANCE_COLUMNS)}, got {reader.fieldnames}")
    return list(reader)


def aggregate(rows) -> list[dict]:
    """One row per (policy, gamma, tag) in order of first appearance."""
    groups: dict[tuple, list] = {}
    for row in rows:
        groups.setdefault((row["policy"], row["gamma"], row["tag"]), []).append(row)
    out = []
    for (policy, gamma, tag), members in groups.items():
        n = len(members)
        agg = {"policy": policy, "gamma": gamma, "tag": tag, "n_utterances": str(n)}
        for key in _MEANS:
            agg["mean_" + key] = fmt(math.fsum(float(m[key]) for m in members) / n)
        agg["total_writes"] = str(sum(int(m["num_writes"]) for m in members))
        out.append(agg)
    return out
