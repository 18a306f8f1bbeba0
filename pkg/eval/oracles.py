"""Attribute-space translators used as baselines and as verification oracles.

Each oracle maps (direction, input attributes, guidance attributes) to output
attributes. Besides sampling an output, every oracle can report the exact
per-attribute distribution of its output, which `expected_metrics_bruteforce`
enumerates to get exact metric expectations.
"""

import itertools
import logging
from dataclasses import dataclass
from enum import StrEnum
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from errors import ConfigError, DataError
from eval.scoring import (
    DEFAULT_BIAS_THRESHOLD,
    MetricAccumulator,
    MetricReport,
    TranslationTriplet,
    aggregate,
)
from schema import AttributePartition, AttributeSchema, Direction, Domain, Value, Vector
from splitter import DomainManifest

log = logging.getLogger(__name__)

DEFAULT_SEED = 20210611
BRUTEFORCE_CAP = 10**6

Marginals = list[dict[Value, Fraction]]


class OracleKind(StrEnum):
    CONTENT_IDENTITY = "content-identity"
    GUIDANCE_IDENTITY = "guidance-identity"
    RANDOM_TARGET = "random-target"
    RANDOM_TRIPLETS = "random-triplets"
    STYLE_COPIER = "style-copier"
    CONSTANT_OUTPUT = "constant-output"
    COMPOSITE = "composite"


class Pairing(StrEnum):
    UNIFORM = "uniform"
    EXHAUSTIVE = "exhaustive"


class DistributionMode(StrEnum):
    JOINT = "joint"
    MARGINALS = "marginals"


@dataclass(frozen=True)
class OracleSpec:
    kind: OracleKind
    # None means "the target-specific attributes of whichever direction runs"
    copied: frozenset[int] | None = None
    constant: Vector | None = None
    epsilon: float = 0.0
    inner: "OracleSpec | None" = None
    seed: int = DEFAULT_SEED

    @property
    def label(self) -> str:
        if self.kind is OracleKind.COMPOSITE and self.inner is not None:
            return f"{self.inner.label}+noise({self.epsilon:g})"
        return self.kind.value

    @property
    def samples_domains(self) -> bool:
        if self.kind is OracleKind.COMPOSITE and self.inner is not None:
            return self.inner.samples_domains
        return self.kind in (OracleKind.RANDOM_TARGET, OracleKind.RANDOM_TRIPLETS)


def pair_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Counter-based generator for one pair: keyed by (seed, stream), positioned by pair index.

    Any pair can be regenerated alone, so chunked or parallel generation gives
    the same draws as a serial run.
    """
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must fit in 64 bits, got {seed}")
    bitgen = np.random.Philox(
        key=np.array([seed, stream], dtype=np.uint64),
        counter=np.array([0, index, 0, 0], dtype=np.uint64),
    )
    return np.random.Generator(bitgen)


# ---------------------------------------------------------------------------
# Domain distributions
# ---------------------------------------------------------------------------

class DomainDistribution:
    """Empirical distribution of one domain's attribute vectors.

    Joint mode draws whole observed vectors (with their multiplicity); marginal
    mode draws every attribute independently from its own empirical marginal.
    """

    def __init__(self, domain: Domain, vectors: Sequence[Vector], mode: DistributionMode = DistributionMode.JOINT):
        if not vectors:
            raise DataError(f"cannot estimate a distribution for empty domain {domain}")
        self.domain = domain
        self.mode = DistributionMode(mode)
        self.total = len(vectors)

        counts: dict[Vector, int] = {}
        for v in vectors:
            counts[v] = counts.get(v, 0) + 1
        self.vectors = list(counts)
        self.counts = list(counts.values())
        self._cumulative = np.cumsum(self.counts)

        self._marginals: list[tuple[list[Value], list[int], np.ndarray]] = []
        for k in range(len(vectors[0])):
            column: dict[Value, int] = {}
            for v in vectors:
                column[v[k]] = column.get(v[k], 0) + 1
            self._marginals.append((list(column), list(column.values()), np.cumsum(list(column.values()))))

    def marginal(self, k: int) -> dict[Value, Fraction]:
        values, counts, _ = self._marginals[k]
        return {v: Fraction(c, self.total) for v, c in zip(values, counts)}

    def probability(self, vector: Vector) -> Fraction:
        if self.mode is DistributionMode.JOINT:
            try:
                return Fraction(self.counts[self.vectors.index(vector)], self.total)
            except ValueError:
                return Fraction(0)
        p = Fraction(1)
        for k, v in enumerate(vector):
            p *= self.marginal(k).get(v, Fraction(0))
        return p

    def sample(self, rng: np.random.Generator) -> Vector:
        if self.mode is DistributionMode.JOINT:
            i = int(np.searchsorted(self._cumulative, rng.integers(self.total), side="right"))
            return self.vectors[i]
        return tuple(
            values[int(np.searchsorted(cumulative, rng.integers(self.total), side="right"))]
            for values, _, cumulative in self._marginals
        )


def estimate_distribution(
    manifest: DomainManifest, mode: DistributionMode = DistributionMode.JOINT
) -> DomainDistribution:
    return DomainDistribution(manifest.domain, [e.values for e in manifest.examples], mode)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def _point_mass(vector: Vector) -> Marginals:
    return [{v: Fraction(1)} for v in vector]


class Oracle:
    name = "oracle"

    def translate(self, direction: Direction, y_a: Vector, y_b: Vector, rng: np.random.Generator) -> Vector:
        raise NotImplementedError

    def attribute_marginals(self, direction: Direction, y_a: Vector, y_b: Vector) -> Marginals:
        """Exact distribution of each output attribute given the pair."""
        raise NotImplementedError


class ContentIdentity(Oracle):
    name = OracleKind.CONTENT_IDENTITY

    def translate(self, direction, y_a, y_b, rng):
        return y_a

    def attribute_marginals(self, direction, y_a, y_b):
        return _point_mass(y_a)


class GuidanceIdentity(Oracle):
    name = OracleKind.GUIDANCE_IDENTITY

    def translate(self, direction, y_a, y_b, rng):
        return y_b

    def attribute_marginals(self, direction, y_a, y_b):
        return _point_mass(y_b)


class StyleCopier(Oracle):
    """Copies the chosen attributes from the guidance, keeps the rest from the input,
    then pins everything the target domain holds fixed."""

    name = OracleKind.STYLE_COPIER

    def __init__(self, partition: AttributePartition, copied: frozenset[int] | None = None):
        self.partition = partition
        self.copied = copied
        self._fixed = {d: partition.fixed_in(d) for d in Domain}

    def translate(self, direction, y_a, y_b, rng=None):
        copied = self.partition.specific(direction.target) if self.copied is None else self.copied
        out = [y_b[k] if k in copied else y_a[k] for k in range(len(y_a))]
        for k, v in self._fixed[direction.target].items():
            out[k] = v
        return tuple(out)

    def attribute_marginals(self, direction, y_a, y_b):
        return _point_mass(self.translate(direction, y_a, y_b))


class ConstantOutput(Oracle):
    name = OracleKind.CONSTANT_OUTPUT

    def __init__(self, vector: Vector):
        self.vector = tuple(vector)

    def translate(self, direction, y_a, y_b, rng):
        return self.vector

    def attribute_marginals(self, direction, y_a, y_b):
        return _point_mass(self.vector)


class RandomTarget(Oracle):
    """A random realistic example of the target domain."""

    name = OracleKind.RANDOM_TARGET

    def __init__(self, distributions: Mapping[Domain, DomainDistribution]):
        self.distributions = distributions
        self._marginals = {
            d: [dist.marginal(k) for k in range(len(dist.vectors[0]))] for d, dist in distributions.items()
        }

    def translate(self, direction, y_a, y_b, rng):
        return self.distributions[direction.target].sample(rng)

    def attribute_marginals(self, direction, y_a, y_b):
        return self._marginals[direction.target]


class RandomTriplets(Oracle):
    """A random realistic example of a random domain."""

    name = OracleKind.RANDOM_TRIPLETS

    def __init__(self, distributions: Mapping[Domain, DomainDistribution]):
        self.distributions = distributions
        a, b = distributions[Domain.A], distributions[Domain.B]
        self._pooled = []
        for k in range(len(a.vectors[0])):
            mixed: dict[Value, Fraction] = {}
            for dist in (a, b):
                for v, p in dist.marginal(k).items():
                    mixed[v] = mixed.get(v, Fraction(0)) + p / 2
            self._pooled.append(mixed)

    def translate(self, direction, y_a, y_b, rng):
        domain = Domain.A if rng.integers(2) == 0 else Domain.B
        return self.distributions[domain].sample(rng)

    def attribute_marginals(self, direction, y_a, y_b):
        return self._pooled


class Composite(Oracle):
    """Wraps another oracle and replaces each categorical output attribute, with
    probability epsilon, by a uniformly chosen different value.

    Continuous attributes pass through from the inner oracle untouched.
    """

    name = OracleKind.COMPOSITE

    def __init__(self, inner: Oracle, epsilon: float, schema: AttributeSchema):
        self.inner = inner
        self.epsilon = epsilon
        self._eps = Fraction(repr(epsilon))
        self._cards = {d.index: d.cardinality for d in schema.attributes if d.is_categorical}

    def translate(self, direction, y_a, y_b, rng):
        out = self.inner.translate(direction, y_a, y_b, rng)
        if self.epsilon == 0:
            return out
        out = list(out)
        for k, card in self._cards.items():
            if rng.random() < self.epsilon:
                r = int(rng.integers(card - 1))
                out[k] = r if r < out[k] else r + 1
        return tuple(out)

    def attribute_marginals(self, direction, y_a, y_b):
        marginals = self.inner.attribute_marginals(direction, y_a, y_b)
        if self._eps == 0:
            return marginals
        eps = self._eps
        noisy = list(marginals)
        for k, card in self._cards.items():
            p = marginals[k]
            noisy[k] = {
                u: (1 - eps) * p.get(u, Fraction(0)) + eps * (1 - p.get(u, Fraction(0))) / (card - 1)
                for u in range(card)
            }
        return noisy


def validate_spec(spec: OracleSpec, schema: AttributeSchema):
    m = len(schema)
    if spec.copied is not None and any(not 0 <= k < m for k in spec.copied):
        raise ConfigError(f"style-copier copies attributes outside 0..{m - 1}")
    if not 0.0 <= spec.epsilon <= 1.0:
        raise ConfigError(f"epsilon must be within [0, 1], got {spec.epsilon}")
    if spec.kind is OracleKind.CONSTANT_OUTPUT:
        if spec.constant is None:
            raise ConfigError("constant-output needs a vector")
        problems = schema.check_vector(spec.constant)
        if problems:
            raise ConfigError(f"constant-output vector: {'; '.join(problems)}")
    if spec.kind is OracleKind.COMPOSITE:
        if spec.inner is None:
            raise ConfigError("composite oracle needs an inner oracle")
        validate_spec(spec.inner, schema)


def make_oracle(
    spec: OracleSpec,
    schema: AttributeSchema,
    partition: AttributePartition,
    distributions: Mapping[Domain, DomainDistribution] | None = None,
) -> Oracle:
    validate_spec(spec, schema)
    if spec.samples_domains and not distributions:
        raise DataError(f"{spec.label} needs domain distributions")
    match spec.kind:
        case OracleKind.CONTENT_IDENTITY:
            return ContentIdentity()
        case OracleKind.GUIDANCE_IDENTITY:
            return GuidanceIdentity()
        case OracleKind.STYLE_COPIER:
            return StyleCopier(partition, spec.copied)
        case OracleKind.CONSTANT_OUTPUT:
            return ConstantOutput(spec.constant)
        case OracleKind.RANDOM_TARGET:
            return RandomTarget(distributions)
        case OracleKind.RANDOM_TRIPLETS:
            if Domain.A not in distributions or Domain.B not in distributions:
                raise DataError("random-triplets needs distributions for both domains")
            return RandomTriplets(distributions)
        case OracleKind.COMPOSITE:
            return Composite(make_oracle(spec.inner, schema, partition, distributions), spec.epsilon, schema)
    raise ConfigError(f"unknown oracle kind {spec.kind}")


def apply_oracle(
    spec: OracleSpec,
    direction: Direction,
    y_a: Vector,
    y_b: Vector,
    distributions: Mapping[Domain, DomainDistribution] | None,
    rng: np.random.Generator,
    *,
    schema: AttributeSchema,
    partition: AttributePartition,
) -> Vector:
    return make_oracle(spec, schema, partition, distributions).translate(direction, y_a, y_b, rng)


def parse_oracle(text: str, schema: AttributeSchema, epsilon: float = 0.0, seed: int = DEFAULT_SEED) -> OracleSpec:
    """Parse `kind[:args]`.

    style-copier takes attribute names or `@family` groups (e.g. `@color`);
    constant-output takes one value per attribute, channels joined with `/`.
    A nonzero epsilon wraps the result in the noise oracle.
    """
    kind_text, _, args = text.partition(":")
    try:
        kind = OracleKind(kind_text.strip())
    except ValueError:
        kinds = ", ".join(k.value for k in OracleKind if k is not OracleKind.COMPOSITE)
        raise ConfigError(f"unknown oracle {kind_text!r}; expected one of {kinds}") from None
    if kind is OracleKind.COMPOSITE:
        raise ConfigError("use --epsilon to add noise to an oracle")

    spec = OracleSpec(kind=kind, seed=seed)
    if kind is OracleKind.STYLE_COPIER and args:
        spec = OracleSpec(kind=kind, copied=_parse_copied(args, schema), seed=seed)
    elif kind is OracleKind.CONSTANT_OUTPUT:
        spec = OracleSpec(kind=kind, constant=_parse_constant(args, schema), seed=seed)

    if epsilon:
        spec = OracleSpec(kind=OracleKind.COMPOSITE, epsilon=epsilon, inner=spec, seed=seed)
    validate_spec(spec, schema)
    return spec


def _parse_copied(args: str, schema: AttributeSchema) -> frozenset[int]:
    copied: set[int] = set()
    for token in filter(None, (t.strip() for t in args.split(","))):
        if token.startswith("@"):
            family = schema.family(token[1:])
            if not family:
                raise ConfigError(f"no attributes in family {token[1:]!r}")
            copied |= family
        else:
            try:
                copied.add(schema.index_of(token))
            except DataError as e:
                raise ConfigError(str(e)) from None
    return frozenset(copied)


def _parse_constant(args: str, schema: AttributeSchema) -> Vector:
    tokens = [t.strip() for t in args.split(",")] if args else []
    if len(tokens) != len(schema):
        raise ConfigError(f"constant-output needs {len(schema)} values, got {len(tokens)}")
    try:
        return tuple(
            decl.parse(tok.split("/") if decl.channels else tok)
            for decl, tok in zip(schema.attributes, tokens)
        )
    except DataError as e:
        raise ConfigError(f"constant-output: {e}") from None


# ---------------------------------------------------------------------------
# Triplet generation and exact expectations
# ---------------------------------------------------------------------------

def domain_distributions(
    manifest_a: DomainManifest, manifest_b: DomainManifest, mode: DistributionMode = DistributionMode.JOINT
) -> dict[Domain, DomainDistribution]:
    return {m.domain: estimate_distribution(m, mode) for m in (manifest_a, manifest_b)}


def _require_examples(*manifests: DomainManifest):
    for m in manifests:
        if not m.examples:
            raise DataError(f"domain {m.domain} manifest is empty")


def generate_triplets(
    spec: OracleSpec,
    schema: AttributeSchema,
    partition: AttributePartition,
    manifest_a: DomainManifest,
    manifest_b: DomainManifest,
    n_pairs: int,
    pairing: Pairing = Pairing.UNIFORM,
    seed: int | None = None,
    distribution_mode: DistributionMode = DistributionMode.JOINT,
) -> list[TranslationTriplet]:
    """Triplets for both directions; A2B first, then B2A, each in pair-index order.

    Uniform pairing draws input and guidance with replacement. Exhaustive
    pairing walks the full cross product and treats n_pairs as its cap.
    """
    if n_pairs < 1:
        raise ConfigError(f"n_pairs must be positive, got {n_pairs}")
    _require_examples(manifest_a, manifest_b)
    seed = spec.seed if seed is None else seed
    distributions = domain_distributions(manifest_a, manifest_b, distribution_mode) if spec.samples_domains else None
    oracle = make_oracle(spec, schema, partition, distributions)
    manifests = {manifest_a.domain: manifest_a, manifest_b.domain: manifest_b}

    triplets = []
    for direction in Direction:
        src = manifests[direction.source].examples
        tgt = manifests[direction.target].examples
        if pairing is Pairing.EXHAUSTIVE:
            total = len(src) * len(tgt)
            if total > n_pairs:
                raise DataError(f"exhaustive pairing needs {total} pairs per direction, above the cap of {n_pairs}")
            pairs = itertools.product(src, tgt)
        else:
            pairs = None

        for i in range(len(src) * len(tgt) if pairs is not None else n_pairs):
            rng = pair_rng(seed, direction.stream, i)
            if pairs is not None:
                a, b = next(pairs)
            else:
                a = src[int(rng.integers(len(src)))]
                b = tgt[int(rng.integers(len(tgt)))]
            triplets.append(TranslationTriplet(
                direction=direction,
                y_a=a.values,
                y_b=b.values,
                y_hat=tuple(oracle.translate(direction, a.values, b.values, rng)),
                input_id=a.id,
                guidance_id=b.id,
            ))
    log.info("generated %d triplets with %s (%s pairing, seed %d)", len(triplets), spec.label, pairing, seed)
    return triplets


def expected_metrics_bruteforce(
    spec: OracleSpec,
    schema: AttributeSchema,
    partition: AttributePartition,
    manifest_a: DomainManifest,
    manifest_b: DomainManifest,
    cap: int = BRUTEFORCE_CAP,
    distribution_mode: DistributionMode = DistributionMode.JOINT,
    name: str = "",
    bias_threshold: float = DEFAULT_BIAS_THRESHOLD,
    partition_hash: str = "",
) -> MetricReport:
    """Exact metric expectations over every (input, guidance) pair and every oracle outcome."""
    _require_examples(manifest_a, manifest_b)
    pairs = len(manifest_a) * len(manifest_b)
    if pairs > cap:
        raise DataError(f"brute force would enumerate {pairs} pairs per direction, above the cap of {cap}")

    distributions = domain_distributions(manifest_a, manifest_b, distribution_mode) if spec.samples_domains else None
    oracle = make_oracle(spec, schema, partition, distributions)
    manifests = {manifest_a.domain: manifest_a, manifest_b.domain: manifest_b}

    reports = {}
    for direction in Direction:
        acc = MetricAccumulator(schema, partition, direction)
        for a in manifests[direction.source].examples:
            for b in manifests[direction.target].examples:
                acc.update_expected(a.values, b.values, oracle.attribute_marginals(direction, a.values, b.values))
        reports[direction] = acc.finalize()
    return aggregate(
        reports[Direction.A2B],
        reports[Direction.B2A],
        name=name or spec.label,
        bias_threshold=bias_threshold,
        partition_hash=partition_hash,
    )
