"""Score arithmetic and table aggregation.

Input rows are (method, variant, concept, metric, value) records from CSV or
JSON. Aggregation groups by (method, variant, metric) and takes the
arithmetic mean over concepts with exact summation in lexicographic concept
order, so the result is permutation invariant. Values stay unrounded
internally; presentation rounds half-to-even at 2 decimals and may rescale
raw cosines by 100 via an explicit scale flag.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from adaptsp.errors import ValidationError
from adaptsp.numerics import cosine

METRICS = ("clip_t_f", "clip_t_p", "clip_i", "dino")
SCORE_CSV_HEADER = ["method", "variant", "concept", "metric", "value"]
SWEEP_CSV_HEADER = ["k", "clip_t", "clip_i"]


def clip_style_score(feat_a, feat_b) -> float:
    """100 * max(0, cosine): the usual presentation scale for alignment scores."""
    return 100.0 * max(0.0, cosine(feat_a, feat_b))


def round_half_even(value: float, places: int = 2) -> str:
    from decimal import ROUND_HALF_EVEN, Decimal

    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_EVEN))


@dataclass(frozen=True)
class ScoreRow:
    method: str
    variant: str
    concept: str
    metric: str
    value: float


@dataclass
class GroupAverage:
    method: str
    variant: str
    metric: str
    concepts: list  # [(concept, value)], concept-sorted
    average: float


def parse_scores_csv(text: str) -> list[ScoreRow]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("score CSV is empty") from None
    if header != SCORE_CSV_HEADER:
        raise ValidationError(
            "score CSV header must be %s, got %s" % (",".join(SCORE_CSV_HEADER), header)
        )
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != 5:
            raise ValidationError("score CSV line %d: expected 5 fields" % lineno)
        rows.append(_score_row(rec[0], rec[1], rec[2], rec[3], rec[4], where="line %d" % lineno))
    return rows


def parse_scores_json(text: str) -> list[ScoreRow]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError("score JSON: %s" % exc) from exc
    if not isinstance(obj, list):
        raise ValidationError("score JSON must be a list of row objects")
    rows = []
    for i, rec in enumerate(obj):
        if not isinstance(rec, dict) or set(rec) != set(SCORE_CSV_HEADER):
            raise ValidationError("score JSON row %d: bad keys" % i)
        rows.append(
            _score_row(
                rec["method"], rec["variant"], rec["concept"], rec["metric"],
                rec["value"], where="row %d" % i,
            )
        )
    return rows


def _score_row(method, variant, concept, metric, value, where) -> ScoreRow:
    if metric not in METRICS:
        raise ValidationError(
            "%s: metric %r not one of %s" % (where, metric, list(METRICS))
        )
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ValidationError("%s: value %r is not a number" % (where, value)) from None
    if not math.isfinite(v):
        raise ValidationError("%s: non-finite value" % where)
    return ScoreRow(method=str(method), variant=str(variant), concept=str(concept),
                    metric=metric, value=v)


def aggregate(rows) -> list[GroupAverage]:
    """Per-(method, variant, metric) averages over concepts.

    Duplicate (method, variant, metric, concept) keys and empty input are
    refused; group order and concept order are lexicographic.
    """
    rows = list(rows)
    if not rows:
        raise ValidationError("empty group: no score rows to aggregate")
    seen = set()
    groups: dict[tuple, list] = {}
    for r in rows:
        key4 = (r.method, r.variant, r.metric, r.concept)
        if key4 in seen:
            raise ValidationError(
                "duplicate key: method=%s variant=%s metric=%s concept=%s"
                % (r.method, r.variant, r.metric, r.concept)
            )
        seen.add(key4)
        groups.setdefault((r.method, r.variant, r.metric), []).append((r.concept, r.value))
    out = []
    for method, variant, metric in sorted(groups):
        concepts = sorted(groups[(method, variant, metric)])
        avg = math.fsum(v for _, v in concepts) / len(concepts)
        out.append(
            GroupAverage(
                method=method, variant=variant, metric=metric,
                concepts=concepts, average=avg,
            )
        )
    return out


def averages_csv(agg: list[GroupAverage], scale: int = 1) -> str:
    _check_scale(scale)
    lines = ["method,variant,metric,average,n_concepts"]
    for g in agg:
        lines.append(
            "%s,%s,%s,%s,%d"
            % (g.method, g.variant, g.metric, round_half_even(g.average * scale), len(g.concepts))
        )
    return "\n".join(lines) + "\n"


def averages_markdown(agg: list[GroupAverage], scale: int = 1) -> str:
    """One pivot table per metric: method/variant rows, concept columns, Average."""
    _check_scale(scale)
    by_metric: dict[str, list[GroupAverage]] = {}
    for g in agg:
        by_metric.setdefault(g.metric, []).append(g)
    chunks = []
    for metric in sorted(by_metric):
        gs = by_metric[metric]
        concepts = sorted({c for g in gs for c, _ in g.concepts})
        head = "| method | variant | " + " | ".join(concepts) + " | Average |"
        rule = "|" + "---|" * (len(concepts) + 3)
        lines = ["### %s" % metric, "", head, rule]
        for g in gs:
            vals = dict(g.concepts)
            cells = [
                round_half_even(vals[c] * scale) if c in vals else ""
                for c in concepts
            ]
            lines.append(
                "| %s | %s | %s | %s |"
                % (g.method, g.variant, " | ".join(cells), round_half_even(g.average * scale))
            )
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"


def _check_scale(scale: int) -> None:
    if scale not in (1, 100):
        raise ValidationError("scale must be 1 or 100, got %r" % (scale,))


def sweep_table(entries) -> str:
    """CSV of per-k scores, sorted ascending by k. Header: k,clip_t,clip_i."""
    items = []
    seen = set()
    for e in entries:
        k = int(e["k"])
        if k < 0:
            raise ValidationError("negative k in sweep entries")
        if k in seen:
            raise ValidationError("duplicate k %d in sweep entries" % k)
        seen.add(k)
        items.append((k, float(e["clip_t"]), float(e["clip_i"])))
    items.sort()
    lines = [",".join(SWEEP_CSV_HEADER)]
    for k, ct, ci in items:
        lines.append("%d,%s,%s" % (k, repr(ct), repr(ci)))
    return "\n".join(lines) + "\n"


def parse_sweep_csv(text: str) -> list[dict]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("sweep CSV is empty") from None
    if header != SWEEP_CSV_HEADER:
        raise ValidationError(
            "sweep CSV header must be %s, got %s" % (",".join(SWEEP_CSV_HEADER), header)
        )
    out = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != 3:
            raise ValidationError("sweep CSV line %d: expected 3 fields" % lineno)
        try:
            out.append({"k": int(rec[0]), "clip_t": float(rec[1]), "clip_i": float(rec[2])})
        except ValueError as exc:
            raise ValidationError("sweep CSV line %d: %s" % (lineno, exc)) from exc
    return out
