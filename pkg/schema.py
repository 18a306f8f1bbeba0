"""Attribute vocabularies and the four-way role partition.

A schema declares every attribute of a labeled corpus; a partition assigns
each attribute exactly one role (domain-splitting, shared, A-specific,
B-specific) and pins the values that stay constant in each domain. Both are
read from TOML files and written back in a canonical form.
"""

import hashlib
import json
import logging
import math
import tomllib
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any, Sequence

from errors import AttributeLookupError, ConfigError, DataError

log = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "configs"

# categorical code, scalar reading, or a tuple of per-channel readings
Value = int | float | tuple[float, ...]
Vector = tuple[Value, ...]


class Kind(StrEnum):
    CATEGORICAL = "categorical"
    CONTINUOUS = "continuous"


class Role(StrEnum):
    DOMAIN_SPLITTING = "domain_splitting"
    SHARED = "shared"
    SPECIFIC_A = "specific_a"
    SPECIFIC_B = "specific_b"


class Domain(StrEnum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "Domain":
        return Domain.B if self is Domain.A else Domain.A


class Direction(StrEnum):
    A2B = "A2B"
    B2A = "B2A"

    @property
    def source(self) -> Domain:
        return Domain.A if self is Direction.A2B else Domain.B

    @property
    def target(self) -> Domain:
        return self.source.other

    @property
    def stream(self) -> int:
        """Random stream id used when sampling pairs for this direction."""
        return 0 if self is Direction.A2B else 1


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttributeDecl:
    name: str
    kind: Kind
    index: int
    cardinality: int | None = None
    labels: tuple[str, ...] = ()
    channels: tuple[str, ...] = ()
    unit: str = ""
    # "color", "geometry" or "presence"; used to select attribute groups
    family: str = ""

    @property
    def is_categorical(self) -> bool:
        return self.kind is Kind.CATEGORICAL

    def parse(self, raw: Any) -> Value:
        """Convert a raw file value (label, int, float or list) to its stored form.

        Text that matches a label always resolves to that label, so text files
        carrying codes for a schema with numeric labels are read as labels.
        Range checks are left to `is_valid`; only conversion failures raise.
        """
        if self.is_categorical:
            if isinstance(raw, bool):
                return int(raw)
            if isinstance(raw, int):
                return raw
            if isinstance(raw, float) and raw.is_integer():
                return int(raw)
            if isinstance(raw, str):
                text = raw.strip()
                if text in self.labels:
                    return self.labels.index(text)
                try:
                    return int(text)
                except ValueError:
                    pass
            raise DataError(f"{self.name}: cannot read {raw!r} as a categorical value")

        try:
            if self.channels:
                if isinstance(raw, str) or not isinstance(raw, Sequence):
                    raise TypeError
                return tuple(float(v) for v in raw)
            return float(raw)
        except (TypeError, ValueError):
            raise DataError(f"{self.name}: cannot read {raw!r} as a continuous value") from None

    def is_valid(self, value: Value) -> bool:
        if self.is_categorical:
            return (
                isinstance(value, int)
                and not isinstance(value, bool)
                and 0 <= value < (self.cardinality or 0)
            )
        if self.channels:
            return (
                isinstance(value, tuple)
                and len(value) == len(self.channels)
                and all(isinstance(v, float) and math.isfinite(v) for v in value)
            )
        return isinstance(value, float) and math.isfinite(value)

    def render(self, value: Value) -> Any:
        """Inverse of `parse` for config files: labels where the schema has them."""
        if self.is_categorical and self.labels and 0 <= value < len(self.labels):
            return self.labels[value]
        if isinstance(value, tuple):
            return list(value)
        return value

    def distance(self, u: Value, v: Value) -> float:
        """Absolute difference; mean of per-channel differences for pose-like attributes."""
        if self.channels:
            return sum(abs(a - b) for a, b in zip(u, v)) / len(self.channels)
        return abs(u - v)


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[AttributeDecl, ...]
    dataset: str = ""
    _by_name: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise DataError(f"duplicate attribute names: {dupes}")
        for position, attr in enumerate(self.attributes):
            if attr.index != position:
                raise DataError(f"attribute {attr.name} has index {attr.index}, expected {position}")
        object.__setattr__(self, "_by_name", {n: i for i, n in enumerate(names)})

    def __len__(self) -> int:
        return len(self.attributes)

    def __getitem__(self, k: int) -> AttributeDecl:
        return self.attributes[k]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def index_of(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise AttributeLookupError(f"unknown attribute: {name}") from None

    def family(self, family: str) -> frozenset[int]:
        return frozenset(a.index for a in self.attributes if a.family == family)

    def check_vector(self, values: Sequence[Value]) -> list[str]:
        """Return human-readable problems with a vector; empty when it conforms."""
        if len(values) != len(self):
            return [f"expected {len(self)} values, got {len(values)}"]
        return [
            f"{a.name}={v!r} invalid"
            for a, v in zip(self.attributes, values)
            if not a.is_valid(v)
        ]


def _q(text: str) -> str:
    return json.dumps(text)


def _toml_value(value: Any) -> str:
    if isinstance(value, str):
        return _q(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return repr(value)


def parse_schema(text: str) -> AttributeSchema:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"schema: {e}") from None
    attrs = []
    for i, entry in enumerate(data.get("attribute", [])):
        try:
            kind = Kind(entry.get("kind", "categorical"))
            attrs.append(AttributeDecl(
                name=entry["name"],
                kind=kind,
                index=i,
                cardinality=entry.get("cardinality", len(entry.get("labels", [])) or None)
                if kind is Kind.CATEGORICAL else None,
                labels=tuple(entry.get("labels", [])),
                channels=tuple(entry.get("channels", [])),
                unit=entry.get("unit", ""),
                family=entry.get("family", ""),
            ))
        except (KeyError, ValueError) as e:
            raise ConfigError(f"schema attribute #{i}: {e}") from None
    return AttributeSchema(tuple(attrs), dataset=data.get("dataset", ""))


def dump_schema(schema: AttributeSchema) -> str:
    lines = []
    if schema.dataset:
        lines += [f"dataset = {_q(schema.dataset)}", ""]
    for a in schema.attributes:
        lines.append("[[attribute]]")
        lines.append(f"name = {_q(a.name)}")
        lines.append(f"kind = {_q(a.kind.value)}")
        if a.is_categorical:
            lines.append(f"cardinality = {a.cardinality}")
        if a.labels:
            lines.append(f"labels = {_toml_value(list(a.labels))}")
        if a.channels:
            lines.append(f"channels = {_toml_value(list(a.channels))}")
        if a.unit:
            lines.append(f"unit = {_q(a.unit)}")
        if a.family:
            lines.append(f"family = {_q(a.family)}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Partition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Prefilter:
    """Corpus filter applied before domain membership (e.g. one hair color asserted)."""

    kind: str
    attributes: tuple[int, ...]

    def accepts(self, values: Sequence[Value]) -> bool:
        if self.kind == "exactly_one":
            return sum(1 for k in self.attributes if values[k] == 1) == 1
        raise ConfigError(f"unknown prefilter kind: {self.kind}")


@dataclass(frozen=True)
class AttributePartition:
    shared: frozenset[int]
    specific_a: frozenset[int]
    specific_b: frozenset[int]
    domain_splitting: int | None = None
    fixed_split_values: tuple[int, int] | None = None  # (q^A, q^B)
    fixed_in_b: dict[int, Value] = field(default_factory=dict)  # k in Z_s^A -> t_k^B
    fixed_in_a: dict[int, Value] = field(default_factory=dict)  # k in Z_s^B -> t_k^A
    prefilters: tuple[Prefilter, ...] = ()
    dataset: str = ""

    @property
    def size(self) -> int:
        split = {self.domain_splitting} if self.domain_splitting is not None else set()
        return len(split | self.shared | self.specific_a | self.specific_b)

    def specific(self, domain: Domain) -> frozenset[int]:
        return self.specific_a if domain is Domain.A else self.specific_b

    def fixed_in(self, domain: Domain) -> dict[int, Value]:
        """Every attribute pinned in `domain`, domain-splitting attribute included."""
        fixed = {}
        if self.domain_splitting is not None and self.fixed_split_values is not None:
            q_a, q_b = self.fixed_split_values
            fixed[self.domain_splitting] = q_a if domain is Domain.A else q_b
        fixed.update(self.fixed_in_a if domain is Domain.A else self.fixed_in_b)
        return fixed

    def membership_failures(self, domain: Domain, values: Sequence[Value]) -> list[int]:
        return [k for k, v in self.fixed_in(domain).items() if values[k] != v]


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    attribute: int | None = None
    example_id: str | None = None

    def __str__(self) -> str:
        return self.message


@dataclass
class ValidationResult:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, rule: str, message: str, **where):
        self.violations.append(Violation(rule, message, **where))


def validate_partition(schema: AttributeSchema, partition: AttributePartition) -> ValidationResult:
    result = ValidationResult()
    m = len(schema)

    groups: list[tuple[Role, frozenset[int]]] = [
        (Role.SHARED, partition.shared),
        (Role.SPECIFIC_A, partition.specific_a),
        (Role.SPECIFIC_B, partition.specific_b),
    ]
    if partition.domain_splitting is not None:
        groups.insert(0, (Role.DOMAIN_SPLITTING, frozenset({partition.domain_splitting})))

    assigned: dict[int, list[Role]] = {}
    for role, members in groups:
        for k in sorted(members):
            if not 0 <= k < m:
                result.add("out_of_range", f"attribute {k} ({role}) is outside 0..{m - 1}", attribute=k)
                continue
            assigned.setdefault(k, []).append(role)

    for k, roles in sorted(assigned.items()):
        if len(roles) > 1:
            result.add("multiple_roles", f"attribute {k} assigned two roles: {', '.join(roles)}", attribute=k)
    for k in range(m):
        if k not in assigned:
            result.add("unassigned", f"attribute {k} ({schema[k].name}) has no role", attribute=k)

    for k, roles in sorted(assigned.items()):
        decl = schema[k]
        if decl.is_categorical and (decl.cardinality or 0) < 2:
            result.add("constant_attribute",
                       f"attribute {k} ({decl.name}) has cardinality {decl.cardinality} and cannot vary",
                       attribute=k)
        if not decl.is_categorical and any(r is not Role.SHARED for r in roles):
            result.add("continuous_role",
                       f"attribute {k} ({decl.name}) is continuous and may only be shared",
                       attribute=k)

    z_d = partition.domain_splitting
    if (z_d is None) != (partition.fixed_split_values is None):
        result.add("split_values", "domain-splitting attribute and its fixed values must be given together",
                   attribute=z_d)
    elif z_d is not None and 0 <= z_d < m:
        q_a, q_b = partition.fixed_split_values
        if q_a == q_b:
            result.add("split_values_equal", f"attribute {z_d}: q^A and q^B are both {q_a!r}", attribute=z_d)
        for q in (q_a, q_b):
            if not schema[z_d].is_valid(q):
                result.add("fixed_invalid", f"attribute {z_d}: {q!r} is not a valid value", attribute=z_d)

    for label, fixed, expected in (
        ("fixed_in_b", partition.fixed_in_b, partition.specific_a),
        ("fixed_in_a", partition.fixed_in_a, partition.specific_b),
    ):
        for k in sorted(expected - fixed.keys()):
            result.add("fixed_missing", f"attribute {k} needs a value in {label}", attribute=k)
        for k in sorted(fixed.keys() - expected):
            result.add("fixed_extra", f"attribute {k} in {label} is not specific to the other domain",
                       attribute=k)
        for k, v in sorted(fixed.items()):
            if 0 <= k < m and not schema[k].is_valid(v):
                result.add("fixed_invalid", f"attribute {k} ({schema[k].name}): {v!r} is not a valid value",
                           attribute=k)

    for rule in partition.prefilters:
        if rule.kind != "exactly_one":
            result.add("prefilter", f"unknown prefilter kind {rule.kind!r}")
        for k in rule.attributes:
            if not 0 <= k < m or not schema[k].is_categorical or schema[k].cardinality != 2:
                result.add("prefilter", f"prefilter attribute {k} must be a binary categorical", attribute=k)

    for v in result.violations:
        log.debug("partition violation: %s", v.message)
    return result


def attribute_role(partition: AttributePartition, k: int) -> Role:
    if k == partition.domain_splitting:
        return Role.DOMAIN_SPLITTING
    if k in partition.shared:
        return Role.SHARED
    if k in partition.specific_a:
        return Role.SPECIFIC_A
    if k in partition.specific_b:
        return Role.SPECIFIC_B
    raise AttributeLookupError(f"attribute {k} out of range 0..{partition.size - 1}")


def fixed_value(partition: AttributePartition, domain: Domain, k: int) -> Value:
    fixed = partition.fixed_in(domain)
    if k not in fixed:
        raise AttributeLookupError(f"attribute {k} is not fixed in this domain ({domain})")
    return fixed[k]


def parse_partition(text: str, schema: AttributeSchema) -> AttributePartition:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"partition: {e}") from None

    def idx(name: str) -> int:
        try:
            return schema.index_of(name)
        except AttributeLookupError as e:
            raise ConfigError(f"partition: {e}") from None

    def values(table: dict) -> dict[int, Value]:
        return {idx(name): schema[idx(name)].parse(raw) for name, raw in table.items()}

    z_d, split_values = None, None
    if split := data.get("domain_splitting"):
        z_d = idx(split["attribute"])
        decl = schema[z_d]
        split_values = (decl.parse(split["a"]), decl.parse(split["b"]))

    return AttributePartition(
        shared=frozenset(idx(n) for n in data.get("shared", [])),
        specific_a=frozenset(idx(n) for n in data.get("specific_a", [])),
        specific_b=frozenset(idx(n) for n in data.get("specific_b", [])),
        domain_splitting=z_d,
        fixed_split_values=split_values,
        fixed_in_b=values(data.get("fixed_in_b", {})),
        fixed_in_a=values(data.get("fixed_in_a", {})),
        prefilters=tuple(
            Prefilter(kind=p.get("kind", "exactly_one"), attributes=tuple(idx(n) for n in p["attributes"]))
            for p in data.get("prefilter", [])
        ),
        dataset=data.get("dataset", ""),
    )


def dump_partition(partition: AttributePartition, schema: AttributeSchema) -> str:
    """Canonical text form: attributes in schema order, labels where available."""

    def names(members) -> str:
        return _toml_value([schema[k].name for k in sorted(members)])

    lines = []
    if partition.dataset:
        lines.append(f"dataset = {_q(partition.dataset)}")
    lines.append(f"shared = {names(partition.shared)}")
    lines.append(f"specific_a = {names(partition.specific_a)}")
    lines.append(f"specific_b = {names(partition.specific_b)}")

    if partition.domain_splitting is not None and partition.fixed_split_values is not None:
        decl = schema[partition.domain_splitting]
        q_a, q_b = partition.fixed_split_values
        lines += [
            "",
            "[domain_splitting]",
            f"attribute = {_q(decl.name)}",
            f"a = {_toml_value(decl.render(q_a))}",
            f"b = {_toml_value(decl.render(q_b))}",
        ]

    for section, fixed in (("fixed_in_a", partition.fixed_in_a), ("fixed_in_b", partition.fixed_in_b)):
        lines += ["", f"[{section}]"]
        for k in sorted(fixed):
            lines.append(f"{_q(schema[k].name)} = {_toml_value(schema[k].render(fixed[k]))}")

    for rule in partition.prefilters:
        lines += [
            "",
            "[[prefilter]]",
            f"kind = {_q(rule.kind)}",
            f"attributes = {_toml_value([schema[k].name for k in rule.attributes])}",
        ]
    return "\n".join(lines) + "\n"


def partition_hash(schema: AttributeSchema, partition: AttributePartition) -> str:
    canonical = dump_schema(schema) + "\n" + dump_partition(partition, schema)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def load_schema(path: str | Path) -> AttributeSchema:
    return parse_schema(Path(path).read_text())


def load_partition(path: str | Path, schema: AttributeSchema) -> AttributePartition:
    return parse_partition(Path(path).read_text(), schema)


def load_dataset(name: str) -> tuple[AttributeSchema, AttributePartition]:
    """Load a shipped schema + partition pair from configs/."""
    schema_path = CONFIG_DIR / f"{name}.schema"
    if not schema_path.exists():
        shipped = sorted(p.stem for p in CONFIG_DIR.glob("*.schema"))
        raise ConfigError(f"unknown dataset {name!r}; shipped: {', '.join(shipped)}")
    schema = load_schema(schema_path)
    return schema, load_partition(CONFIG_DIR / f"{name}.partition", schema)
