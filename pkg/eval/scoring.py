"""Disentanglement metrics over translation triplets. No learned components.

Each metric is a macro-average over attributes of a per-attribute conditional
rate. Counters stay integral (or exact rationals, for expectations) until a
report is finalized, so results do not depend on triplet order or on how the
work was chunked.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import StrEnum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from errors import DataError, MetricUndefinedError
from schema import (
    AttributePartition,
    AttributeSchema,
    Direction,
    ValidationResult,
    Value,
    Vector,
)

log = logging.getLogger(__name__)

DEFAULT_BIAS_THRESHOLD = 30.0


@dataclass(frozen=True)
class TranslationTriplet:
    direction: Direction
    y_a: Vector  # input, source domain
    y_b: Vector  # guidance, target domain
    y_hat: Vector  # attributes predicted on the translated output
    y_a_gt: Vector | None = None
    y_b_gt: Vector | None = None
    input_id: str | None = None
    guidance_id: str | None = None

    def with_ground_truth(self) -> "TranslationTriplet":
        if self.y_a_gt is None or self.y_b_gt is None:
            raise DataError(f"triplet {self.input_id or '?'} has no ground-truth labels")
        return replace(self, y_a=self.y_a_gt, y_b=self.y_b_gt)


def perfect_attributes(
    partition: AttributePartition, direction: Direction, y_a: Vector, y_b: Vector
) -> Vector:
    """Attribute vector of the semantically correct translation of y_a guided by y_b."""
    fixed = partition.fixed_in(direction.target)
    from_guidance = partition.specific(direction.target)
    return tuple(
        fixed[k] if k in fixed else y_b[k] if k in from_guidance else y_a[k]
        for k in range(len(y_a))
    )


def attribute_match(
    schema: AttributeSchema, k: int, v_test: Value, v_ref: Value, v_other: Value | None = None
) -> bool:
    """Categorical: exact equality. Continuous: strictly closer to v_ref than to v_other."""
    decl = schema[k]
    if decl.is_categorical:
        return v_test == v_ref
    if v_other is None:
        raise DataError(f"{decl.name}: continuous comparison needs the competing reference value")
    return decl.distance(v_test, v_ref) < decl.distance(v_test, v_other)


# ---------------------------------------------------------------------------
# Counters and reports
# ---------------------------------------------------------------------------

class Metric(StrEnum):
    Q_TR = "Q_tr"
    D_C = "D_c"
    D_S = "D_s"
    BIAS = "B"


@dataclass(slots=True)
class Tally:
    hits: int | Fraction = 0
    n: int = 0

    def merge(self, other: "Tally"):
        self.hits += other.hits
        self.n += other.n

    @property
    def rate(self) -> Fraction | None:
        return Fraction(self.hits) / self.n if self.n else None


@dataclass(frozen=True)
class AttributeScore:
    metric: Metric
    direction: Direction
    index: int
    name: str
    hits: int | Fraction
    n: int

    @property
    def fraction(self) -> Fraction | None:
        return Fraction(self.hits) / self.n if self.n else None

    @property
    def value(self) -> float | None:
        """Percent; None when the conditioning set is empty."""
        f = self.fraction
        return None if f is None else float(100 * f)


@dataclass
class DirectionReport:
    direction: Direction
    n_triplets: int
    q_tr: float | None
    d_c: float | None
    d_s: float | None
    bias: float | None
    scores: list[AttributeScore] = field(default_factory=list)

    def metric(self, metric: Metric) -> float | None:
        return {
            Metric.Q_TR: self.q_tr,
            Metric.D_C: self.d_c,
            Metric.D_S: self.d_s,
            Metric.BIAS: self.bias,
        }[metric]

    def scores_for(self, metric: Metric) -> list[AttributeScore]:
        return [s for s in self.scores if s.metric is metric]

    def score(self, metric: Metric, attribute: int | str) -> AttributeScore:
        for s in self.scores:
            if s.metric is metric and attribute in (s.index, s.name):
                return s
        raise KeyError(f"{metric} has no score for attribute {attribute!r} in {self.direction}")


@dataclass
class MetricReport:
    name: str
    partition_hash: str
    a2b: DirectionReport
    b2a: DirectionReport
    q_tr: float | None  # mean of the two directions
    d_c: float | None  # mean of the two directions
    d: float | None  # quarter-sum of D_s and D_c over both directions
    bias: float | None
    low_confidence: bool
    bias_threshold: float = DEFAULT_BIAS_THRESHOLD

    @property
    def n_triplets(self) -> int:
        return self.a2b.n_triplets + self.b2a.n_triplets

    def direction(self, direction: Direction) -> DirectionReport:
        return self.a2b if direction is Direction.A2B else self.b2a


def _macro(tallies: Mapping[int, Tally]) -> float | None:
    rates = [t.rate for t in tallies.values() if t.n]
    if not rates:
        return None
    return float(100 * sum(rates, Fraction(0)) / len(rates))


def _mean(values: Sequence[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    return sum(defined) / len(defined) if defined else None


class MetricAccumulator:
    """Per-attribute counters for one translation direction.

    `update` folds an observed triplet; `update_expected` folds a pair with the
    exact per-attribute distribution of the output instead of a sample.
    """

    def __init__(self, schema: AttributeSchema, partition: AttributePartition, direction: Direction):
        self.schema = schema
        self.partition = partition
        self.direction = direction
        self.n_triplets = 0

        split = {partition.domain_splitting} if partition.domain_splitting is not None else set()
        self._fixed = partition.fixed_in(direction.target)
        self._from_guidance = partition.specific(direction.target)
        self.tallies: dict[Metric, dict[int, Tally]] = {
            Metric.Q_TR: {k: Tally() for k in sorted(partition.specific(direction.source) | split)},
            Metric.D_C: {k: Tally() for k in sorted(partition.shared)},
            Metric.D_S: {k: Tally() for k in sorted(self._from_guidance)},
            Metric.BIAS: {d.index: Tally() for d in schema.attributes if d.is_categorical},
        }

    def _perfect(self, y_a: Vector, y_b: Vector) -> Vector:
        fixed, guided = self._fixed, self._from_guidance
        return tuple(
            fixed[k] if k in fixed else y_b[k] if k in guided else y_a[k]
            for k in range(len(y_a))
        )

    def update(self, triplet: TranslationTriplet):
        if triplet.direction is not self.direction:
            raise DataError(f"{triplet.direction} triplet fed to the {self.direction} accumulator")
        y_a, y_b, y_hat = triplet.y_a, triplet.y_b, triplet.y_hat
        y_star = self._perfect(y_a, y_b)
        self.n_triplets += 1

        for k, t in self.tallies[Metric.Q_TR].items():
            if y_a[k] != y_b[k]:
                t.n += 1
                t.hits += y_hat[k] == y_star[k]
        for k, t in self.tallies[Metric.D_C].items():
            if y_a[k] != y_b[k]:
                t.n += 1
                t.hits += attribute_match(self.schema, k, y_hat[k], y_a[k], y_b[k])
        for k, t in self.tallies[Metric.D_S].items():
            if y_a[k] != y_b[k]:
                t.n += 1
                t.hits += y_hat[k] == y_b[k]
        for k, t in self.tallies[Metric.BIAS].items():
            if y_a[k] == y_b[k]:
                t.n += 1
                t.hits += y_hat[k] != y_star[k]

    def update_expected(self, y_a: Vector, y_b: Vector, marginals: Sequence[Mapping[Value, Fraction]]):
        """Fold one (input, guidance) pair given P(ŷ_k = u) for every attribute k."""
        y_star = self._perfect(y_a, y_b)
        self.n_triplets += 1

        def mass(k: int, accept) -> Fraction:
            return sum((p for u, p in marginals[k].items() if accept(u)), Fraction(0))

        for k, t in self.tallies[Metric.Q_TR].items():
            if y_a[k] != y_b[k]:
                t.n += 1
                t.hits += marginals[k].get(y_star[k], Fraction(0))
        for k, t in self.tallies[Metric.D_C].items():
            if y_a[k] != y_b[k]:
                t.n += 1
                t.hits += mass(k, lambda u: attribute_match(self.schema, k, u, y_a[k], y_b[k]))
        for k, t in self.tallies[Metric.D_S].items():
            if y_a[k] != y_b[k]:
                t.n += 1
                t.hits += marginals[k].get(y_b[k], Fraction(0))
        for k, t in self.tallies[Metric.BIAS].items():
            if y_a[k] == y_b[k]:
                t.n += 1
                t.hits += 1 - marginals[k].get(y_star[k], Fraction(0))

    def merge(self, other: "MetricAccumulator") -> "MetricAccumulator":
        if other.direction is not self.direction or other.partition != self.partition:
            raise DataError("cannot merge accumulators for different directions or partitions")
        self.n_triplets += other.n_triplets
        for metric, per_attr in other.tallies.items():
            for k, t in per_attr.items():
                self.tallies[metric][k].merge(t)
        return self

    def finalize(self) -> DirectionReport:
        scores = [
            AttributeScore(metric, self.direction, k, self.schema[k].name, t.hits, t.n)
            for metric, per_attr in self.tallies.items()
            for k, t in per_attr.items()
        ]
        return DirectionReport(
            direction=self.direction,
            n_triplets=self.n_triplets,
            q_tr=_macro(self.tallies[Metric.Q_TR]),
            d_c=_macro(self.tallies[Metric.D_C]),
            d_s=_macro(self.tallies[Metric.D_S]),
            bias=_macro(self.tallies[Metric.BIAS]),
            scores=scores,
        )


# ---------------------------------------------------------------------------
# Single-metric entry points
# ---------------------------------------------------------------------------

@dataclass
class MetricResult:
    metric: Metric
    value: float
    scores: list[AttributeScore]
    direction: Direction | None = None


def _fold_one_direction(
    triplets: Iterable[TranslationTriplet], schema: AttributeSchema, partition: AttributePartition
) -> DirectionReport:
    acc = None
    for t in triplets:
        if acc is None:
            acc = MetricAccumulator(schema, partition, t.direction)
        elif t.direction is not acc.direction:
            raise DataError("triplets for a single metric must share one direction")
        acc.update(t)
    if acc is None:
        raise MetricUndefinedError("no triplets to score")
    return acc.finalize()


def _single(metric: Metric, triplets, partition, schema) -> MetricResult:
    report = _fold_one_direction(triplets, schema, partition)
    value = report.metric(metric)
    if value is None:
        raise MetricUndefinedError(f"{metric} undefined for {report.direction}: every conditioning set is empty")
    return MetricResult(metric, value, report.scores_for(metric), report.direction)


def translation_quality(triplets, partition: AttributePartition, schema: AttributeSchema) -> MetricResult:
    return _single(Metric.Q_TR, triplets, partition, schema)


def content_preservation(triplets, partition: AttributePartition, schema: AttributeSchema) -> MetricResult:
    return _single(Metric.D_C, triplets, partition, schema)


def style_transfer(triplets, partition: AttributePartition, schema: AttributeSchema) -> MetricResult:
    return _single(Metric.D_S, triplets, partition, schema)


def bias(triplets, partition: AttributePartition, schema: AttributeSchema) -> MetricResult:
    """B per direction, then averaged over the directions present."""
    accs: dict[Direction, MetricAccumulator] = {}
    for t in triplets:
        if t.direction not in accs:
            accs[t.direction] = MetricAccumulator(schema, partition, t.direction)
        accs[t.direction].update(t)
    reports = [accs[d].finalize() for d in Direction if d in accs]
    value = _mean([r.bias for r in reports])
    if value is None:
        raise MetricUndefinedError("B undefined: every conditioning set is empty")
    scores = [s for r in reports for s in r.scores_for(Metric.BIAS)]
    return MetricResult(Metric.BIAS, value, scores)


# ---------------------------------------------------------------------------
# Full evaluation
# ---------------------------------------------------------------------------

def aggregate(
    a2b: DirectionReport | None,
    b2a: DirectionReport | None,
    name: str = "",
    bias_threshold: float = DEFAULT_BIAS_THRESHOLD,
    partition_hash: str = "",
) -> MetricReport:
    """Combine the two directional reports. D_c is the plain mean of the two directions."""
    if a2b is None or b2a is None or a2b.n_triplets == 0 or b2a.n_triplets == 0:
        missing = [d for d, r in ((Direction.A2B, a2b), (Direction.B2A, b2a)) if r is None or r.n_triplets == 0]
        raise DataError(f"aggregate needs both directions; missing {', '.join(missing)}")

    four = (a2b.d_s, b2a.d_s, a2b.d_c, b2a.d_c)
    d = None if any(v is None for v in four) else sum(four) / 4
    b = _mean([a2b.bias, b2a.bias])
    return MetricReport(
        name=name,
        partition_hash=partition_hash,
        a2b=a2b,
        b2a=b2a,
        q_tr=_mean([a2b.q_tr, b2a.q_tr]),
        d_c=_mean([a2b.d_c, b2a.d_c]),
        d=d,
        bias=b,
        low_confidence=b is not None and b > bias_threshold,
        bias_threshold=bias_threshold,
    )


def _fold_all(
    triplets: Iterable[TranslationTriplet], schema: AttributeSchema, partition: AttributePartition
) -> dict[Direction, MetricAccumulator]:
    accs = {d: MetricAccumulator(schema, partition, d) for d in Direction}
    for t in triplets:
        accs[t.direction].update(t)
    return accs


def evaluate(
    triplets: Iterable[TranslationTriplet],
    schema: AttributeSchema,
    partition: AttributePartition,
    name: str = "",
    bias_threshold: float = DEFAULT_BIAS_THRESHOLD,
    partition_hash: str = "",
    use_ground_truth: bool = False,
) -> MetricReport:
    if use_ground_truth:
        triplets = (t.with_ground_truth() for t in triplets)
    accs = _fold_all(triplets, schema, partition)
    report = aggregate(
        accs[Direction.A2B].finalize(),
        accs[Direction.B2A].finalize(),
        name=name,
        bias_threshold=bias_threshold,
        partition_hash=partition_hash,
    )
    log.info("[%s] %d triplets: Q_tr=%s D=%s B=%s", name, report.n_triplets, report.q_tr, report.d, report.bias)
    return report


def evaluate_parallel(
    triplets: Sequence[TranslationTriplet],
    schema: AttributeSchema,
    partition: AttributePartition,
    name: str = "",
    bias_threshold: float = DEFAULT_BIAS_THRESHOLD,
    partition_hash: str = "",
    workers: int = 4,
    chunk_size: int = 10_000,
) -> MetricReport:
    """Same result as `evaluate`, folding chunks in a thread pool and merging the counters."""
    chunks = [triplets[i:i + chunk_size] for i in range(0, len(triplets), chunk_size)] or [[]]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        partials = list(pool.map(lambda chunk: _fold_all(chunk, schema, partition), chunks))

    merged = partials[0]
    for part in partials[1:]:
        for d in Direction:
            merged[d].merge(part[d])
    return aggregate(
        merged[Direction.A2B].finalize(),
        merged[Direction.B2A].finalize(),
        name=name,
        bias_threshold=bias_threshold,
        partition_hash=partition_hash,
    )


def binomial_sigma(expected: DirectionReport, observed: DirectionReport, metric: Metric) -> float:
    """Standard error (percent) of observed's macro-average if expected's rates are the truth.

    Averages per-attribute standard errors, which bounds the error of the mean
    from above for correlated attributes.
    """
    sds = []
    for e in expected.scores_for(metric):
        o = observed.score(metric, e.index)
        p = e.fraction
        if p is None or o.n == 0:
            continue
        sds.append(math.sqrt(float(p * (1 - p)) / o.n))
    return 100 * sum(sds) / len(sds) if sds else 0.0


def check_triplets(
    triplets: Iterable[TranslationTriplet], schema: AttributeSchema, partition: AttributePartition
) -> ValidationResult:
    """Report triplets whose vectors are malformed or whose input/guidance sit in the wrong domain."""
    result = ValidationResult()
    for i, t in enumerate(triplets):
        where = t.input_id or f"triplet {i}"
        for label, vec in (("y_a", t.y_a), ("y_b", t.y_b), ("y_hat", t.y_hat)):
            problems = schema.check_vector(vec)
            if problems:
                result.add("malformed", f"{where}: {label} {'; '.join(problems)}", example_id=where)
        for label, vec, domain in (("input", t.y_a, t.direction.source), ("guidance", t.y_b, t.direction.target)):
            if len(vec) != len(schema):
                continue
            for k in partition.membership_failures(domain, vec):
                result.add(
                    "membership",
                    f"{where}: {label} has {schema[k].name}={schema[k].render(vec[k])!r}, not fixed value of {domain}",
                    attribute=k,
                    example_id=where,
                )
    if result.violations:
        log.warning("%d triplet membership/shape problems", len(result.violations))
    return result
