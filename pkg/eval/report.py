"""Rendering and (de)serialization of metric reports.

Markdown mirrors the published results tables; CSV and JSON carry raw values,
flags and per-attribute breakdowns. Output is a pure function of the document.
"""

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction

from errors import ConfigError, DataError
from eval.pose import PoseReport
from eval.scoring import AttributeScore, DirectionReport, Metric, MetricReport
from schema import AttributePartition, AttributeSchema, Direction, Role, attribute_role

REPORT_FORMATS = ("markdown", "csv", "json")
UNDEFINED = "—"

TABLE_COLUMNS = ("Q_tr ↑", "D ↑", "D_s^A2B ↑", "D_s^B2A ↑", "D_c ↑", "B ↓")


@dataclass
class ReportDocument:
    rows: list[MetricReport]
    dataset: str = ""
    partition_hash: str = ""
    precision: int = 1
    gray_open: str = "<span class=gray>"
    gray_close: str = "</span>"

    def __post_init__(self):
        if self.precision < 1:
            raise ConfigError(f"precision must be at least 1 decimal, got {self.precision}")
        hashes = {r.partition_hash for r in self.rows}
        if self.partition_hash:
            hashes.add(self.partition_hash)
        if len(hashes) > 1:
            raise DataError(f"report rows come from different partitions: {sorted(hashes)}")
        if not self.partition_hash and hashes:
            self.partition_hash = hashes.pop()


def _fmt(value: float | None, precision: int) -> str:
    return UNDEFINED if value is None else f"{value:.{precision}f}"


def _raw(value: float | None) -> str:
    return "" if value is None else repr(value)


def _hits(hits: int | Fraction) -> int | str:
    if isinstance(hits, Fraction):
        return hits.numerator if hits.denominator == 1 else str(hits)
    return hits


# ---------------------------------------------------------------------------
# Main table
# ---------------------------------------------------------------------------

def _table_cells(row: MetricReport, precision: int) -> list[str]:
    return [_fmt(v, precision) for v in (row.q_tr, row.d, row.a2b.d_s, row.b2a.d_s, row.d_c, row.bias)]


def _markdown(doc: ReportDocument) -> str:
    lines = [f"<!-- dataset: {doc.dataset or '-'}; partition: {doc.partition_hash or '-'} -->"]
    lines.append("| Model | " + " | ".join(TABLE_COLUMNS) + " |")
    lines.append("|---" * (len(TABLE_COLUMNS) + 1) + "|")
    for row in doc.rows:
        cells = _table_cells(row, doc.precision)
        if row.low_confidence:
            cells[:-1] = [f"{doc.gray_open}{c}{doc.gray_close}" for c in cells[:-1]]
        lines.append(f"| {row.name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _csv(doc: ReportDocument) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["model", "metric", "direction", "attribute", "value", "hits", "n", "low_confidence"])
    for row in doc.rows:
        flag = str(row.low_confidence).lower()
        for metric, value in (("Q_tr", row.q_tr), ("D", row.d), ("D_c", row.d_c), ("B", row.bias)):
            writer.writerow([row.name, metric, "mean", "", _raw(value), "", "", flag])
        for part in (row.a2b, row.b2a):
            for metric in Metric:
                writer.writerow([row.name, metric.value, part.direction.value, "",
                                 _raw(part.metric(metric)), "", part.n_triplets, flag])
            for s in part.scores:
                writer.writerow([row.name, s.metric.value, s.direction.value, s.name,
                                 _raw(s.value), _hits(s.hits), s.n, flag])
    return out.getvalue()


def emit_report(doc: ReportDocument, fmt: str = "markdown") -> bytes:
    if not doc.rows:
        raise DataError("report has no rows")
    match fmt:
        case "markdown" | "md":
            text = _markdown(doc)
        case "csv":
            text = _csv(doc)
        case "json":
            text = json.dumps(document_to_dict(doc), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        case _:
            raise ConfigError(f"unknown report format {fmt!r}; expected one of {', '.join(REPORT_FORMATS)}")
    return text.encode()


# ---------------------------------------------------------------------------
# Per-attribute table
# ---------------------------------------------------------------------------

_GROUPS = (
    (Role.DOMAIN_SPLITTING, "Domain-splitting"),
    (Role.SHARED, "Content"),
    (Role.SPECIFIC_A, "A-specific"),
    (Role.SPECIFIC_B, "B-specific"),
)


def per_attribute_rows(
    report: MetricReport, schema: AttributeSchema, partition: AttributePartition
) -> list[tuple[str, AttributeScore]]:
    """(group label, score) pairs, grouped by role and in schema order within a group."""
    rows = []
    for role, label in _GROUPS:
        for decl in schema.attributes:
            if attribute_role(partition, decl.index) is not role:
                continue
            for part in (report.a2b, report.b2a):
                for s in part.scores:
                    if s.index == decl.index:
                        rows.append((label, s))
    return rows


def emit_per_attribute_report(
    report: MetricReport,
    schema: AttributeSchema,
    partition: AttributePartition,
    fmt: str = "markdown",
    precision: int = 1,
) -> bytes:
    rows = per_attribute_rows(report, schema, partition)
    if fmt == "json":
        data = [
            {"group": g, "attribute": s.name, "metric": s.metric.value, "direction": s.direction.value,
             "value": s.value, "hits": _hits(s.hits), "n": s.n}
            for g, s in rows
        ]
        return (json.dumps({"model": report.name, "rows": data}, indent=2, ensure_ascii=False) + "\n").encode()
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["group", "attribute", "metric", "direction", "value", "hits", "n"])
        for g, s in rows:
            writer.writerow([g, s.name, s.metric.value, s.direction.value, _raw(s.value), _hits(s.hits), s.n])
        return out.getvalue().encode()

    lines = [f"<!-- model: {report.name}; partition: {report.partition_hash or '-'} -->",
             "| Group | Attribute | Metric | Direction | Score | n |",
             "|---|---|---|---|---|---|"]
    for g, s in rows:
        lines.append(f"| {g} | {s.name} | {s.metric.value} | {s.direction.value} | "
                     f"{_fmt(s.value, precision)} | {s.n} |")
    return ("\n".join(lines) + "\n").encode()


def emit_pose_report(reports: list[PoseReport], fmt: str = "markdown", precision: int = 2) -> bytes:
    if fmt == "json":
        data = [
            {"model": r.name, "attribute": r.attribute, "channel_distance": r.channel_distance,
             "D_p": r.d_p, "PM": r.pm, "n": r.n, "n_pm": r.n_pm}
            for r in reports
        ]
        return (json.dumps(data, indent=2, ensure_ascii=False) + "\n").encode()
    channels = reports[0].channels if reports else ()
    header = ["Model"] + [f"Δ{c} ↓" for c in channels] + ["D_p ↓", "PM ↑"]
    lines = ["| " + " | ".join(header) + " |", "|---" * len(header) + "|"]
    for r in reports:
        cells = [_fmt(r.channel_distance[c], precision) for c in channels]
        cells += [_fmt(r.d_p, precision), _fmt(r.pm, precision)]
        lines.append(f"| {r.name} | " + " | ".join(cells) + " |")
    return ("\n".join(lines) + "\n").encode()


# ---------------------------------------------------------------------------
# JSON round-trip
# ---------------------------------------------------------------------------

def _direction_to_dict(part: DirectionReport) -> dict:
    return {
        "direction": part.direction.value,
        "n_triplets": part.n_triplets,
        "Q_tr": part.q_tr,
        "D_c": part.d_c,
        "D_s": part.d_s,
        "B": part.bias,
        "attributes": [
            {"metric": s.metric.value, "index": s.index, "name": s.name, "hits": _hits(s.hits), "n": s.n,
             "value": s.value}
            for s in part.scores
        ],
    }


def _direction_from_dict(data: dict) -> DirectionReport:
    direction = Direction(data["direction"])
    return DirectionReport(
        direction=direction,
        n_triplets=data["n_triplets"],
        q_tr=data["Q_tr"],
        d_c=data["D_c"],
        d_s=data["D_s"],
        bias=data["B"],
        scores=[
            AttributeScore(
                metric=Metric(s["metric"]),
                direction=direction,
                index=s["index"],
                name=s["name"],
                hits=Fraction(s["hits"]) if isinstance(s["hits"], str) else s["hits"],
                n=s["n"],
            )
            for s in data["attributes"]
        ],
    )


def report_to_dict(report: MetricReport) -> dict:
    return {
        "name": report.name,
        "partition_hash": report.partition_hash,
        "Q_tr": report.q_tr,
        "D_c": report.d_c,
        "D": report.d,
        "B": report.bias,
        "low_confidence": report.low_confidence,
        "bias_threshold": report.bias_threshold,
        "n_triplets": report.n_triplets,
        "A2B": _direction_to_dict(report.a2b),
        "B2A": _direction_to_dict(report.b2a),
    }


def report_from_dict(data: dict) -> MetricReport:
    try:
        return MetricReport(
            name=data["name"],
            partition_hash=data["partition_hash"],
            a2b=_direction_from_dict(data["A2B"]),
            b2a=_direction_from_dict(data["B2A"]),
            q_tr=data["Q_tr"],
            d_c=data["D_c"],
            d=data["D"],
            bias=data["B"],
            low_confidence=data["low_confidence"],
            bias_threshold=data["bias_threshold"],
        )
    except (KeyError, ValueError, TypeError) as e:
        raise DataError(f"malformed report: {e}") from None


def document_to_dict(doc: ReportDocument) -> dict:
    return {
        "dataset": doc.dataset,
        "partition_hash": doc.partition_hash,
        "rows": [report_to_dict(r) for r in doc.rows],
    }


def load_reports(text: str) -> list[MetricReport]:
    """Accept a single report object or a whole document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"report is not JSON: {e.msg}") from None
    if "rows" in data:
        return [report_from_dict(r) for r in data["rows"]]
    return [report_from_dict(data)]
