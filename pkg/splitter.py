"""Split one attribute-labeled corpus into the two domains of a partition."""

import logging
from dataclasses import dataclass, field
from typing import Iterable

from errors import DataError
from schema import (
    AttributePartition,
    AttributeSchema,
    Domain,
    Role,
    ValidationResult,
    Value,
    attribute_role,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class LabeledExample:
    id: str
    values: tuple[Value, ...]


@dataclass(frozen=True)
class Provenance:
    source: str
    filtered_at: str
    partition_hash: str


@dataclass
class DomainManifest:
    domain: Domain
    partition_hash: str
    examples: list[LabeledExample] = field(default_factory=list)
    provenance: Provenance | None = None

    def __len__(self) -> int:
        return len(self.examples)


@dataclass
class SplitOutcome:
    a: DomainManifest
    b: DomainManifest
    # ids matching both membership predicates; listed in both manifests
    overlaps: list[str] = field(default_factory=list)
    prefilter_drops: list[int] = field(default_factory=list)
    seen: int = 0


def split_corpus(
    corpus: Iterable[LabeledExample],
    schema: AttributeSchema,
    partition: AttributePartition,
    partition_hash: str = "",
    provenance: Provenance | None = None,
) -> SplitOutcome:
    """Stream the corpus once, routing each example by the membership predicates."""
    fixed_a = list(partition.fixed_in(Domain.A).items())
    fixed_b = list(partition.fixed_in(Domain.B).items())
    outcome = SplitOutcome(
        a=DomainManifest(Domain.A, partition_hash, provenance=provenance),
        b=DomainManifest(Domain.B, partition_hash, provenance=provenance),
        prefilter_drops=[0] * len(partition.prefilters),
    )

    for example in corpus:
        outcome.seen += 1
        problems = schema.check_vector(example.values)
        if problems:
            raise DataError(f"example {example.id}: {'; '.join(problems)}")

        dropped = False
        for i, rule in enumerate(partition.prefilters):
            if not rule.accepts(example.values):
                outcome.prefilter_drops[i] += 1
                dropped = True
                break
        if dropped:
            continue

        in_a = all(example.values[k] == v for k, v in fixed_a)
        in_b = all(example.values[k] == v for k, v in fixed_b)
        if in_a and in_b:
            outcome.overlaps.append(example.id)
        if in_a:
            outcome.a.examples.append(example)
        if in_b:
            outcome.b.examples.append(example)

    if outcome.overlaps:
        log.warning("%d examples match both domains and were placed in both", len(outcome.overlaps))
    for manifest in (outcome.a, outcome.b):
        if not manifest.examples:
            log.warning("domain %s is empty after filtering %d examples", manifest.domain, outcome.seen)
    log.info("split %d examples: |A|=%d |B|=%d", outcome.seen, len(outcome.a), len(outcome.b))
    return outcome


def build_split(
    corpus: Iterable[LabeledExample],
    schema: AttributeSchema,
    partition: AttributePartition,
    partition_hash: str = "",
    provenance: Provenance | None = None,
) -> tuple[DomainManifest, DomainManifest]:
    outcome = split_corpus(corpus, schema, partition, partition_hash, provenance)
    return outcome.a, outcome.b


def verify_manifest(
    manifest: DomainManifest,
    schema: AttributeSchema,
    partition: AttributePartition,
) -> ValidationResult:
    result = ValidationResult()
    fixed = partition.fixed_in(manifest.domain)
    seen: set[str] = set()
    for example in manifest.examples:
        if example.id in seen:
            result.add("duplicate_id", f"duplicate id {example.id}", example_id=example.id)
        seen.add(example.id)

        problems = schema.check_vector(example.values)
        if problems:
            result.add("malformed", f"{example.id}: {'; '.join(problems)}", example_id=example.id)
            continue
        for k, v in fixed.items():
            if example.values[k] != v:
                decl = schema[k]
                result.add(
                    "membership",
                    f"{example.id}: {decl.name}={decl.render(example.values[k])!r}, "
                    f"domain {manifest.domain} requires {decl.render(v)!r}",
                    attribute=k,
                    example_id=example.id,
                )
    return result


# ---------------------------------------------------------------------------
# Variation summary
# ---------------------------------------------------------------------------

@dataclass
class AttributeVariation:
    index: int
    name: str
    role: Role
    observed_a: list[Value]
    observed_b: list[Value]

    @property
    def varies_a(self) -> bool:
        return len(self.observed_a) > 1

    @property
    def varies_b(self) -> bool:
        return len(self.observed_b) > 1


@dataclass
class VariationSummary:
    attributes: list[AttributeVariation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


# role -> (should vary in A, should vary in B)
_EXPECTED_VARIATION = {
    Role.DOMAIN_SPLITTING: (False, False),
    Role.SHARED: (True, True),
    Role.SPECIFIC_A: (True, False),
    Role.SPECIFIC_B: (False, True),
}

_ROLE_WORDS = {
    Role.DOMAIN_SPLITTING: "domain-splitting",
    Role.SHARED: "shared",
    Role.SPECIFIC_A: "A-specific",
    Role.SPECIFIC_B: "B-specific",
}


def _observed(manifest: DomainManifest, k: int) -> list[Value]:
    values = {e.values[k] for e in manifest.examples}
    return sorted(values)


def split_stats(
    manifest_a: DomainManifest,
    manifest_b: DomainManifest,
    schema: AttributeSchema,
    partition: AttributePartition,
) -> VariationSummary:
    summary = VariationSummary()
    for decl in schema.attributes:
        role = attribute_role(partition, decl.index)
        row = AttributeVariation(
            index=decl.index,
            name=decl.name,
            role=role,
            observed_a=_observed(manifest_a, decl.index),
            observed_b=_observed(manifest_b, decl.index),
        )
        summary.attributes.append(row)

        want_a, want_b = _EXPECTED_VARIATION[role]
        for domain, want, got, manifest in (
            (Domain.A, want_a, row.varies_a, manifest_a),
            (Domain.B, want_b, row.varies_b, manifest_b),
        ):
            if not manifest.examples or want == got:
                continue
            state = "constant" if want else "varying"
            summary.warnings.append(f"{decl.name}: declared {_ROLE_WORDS[role]} but {state} in {domain}")

    for message in summary.warnings:
        log.warning(message)
    return summary
