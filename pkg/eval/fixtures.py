"""Built-in synthetic data: the 3D-Shapes factor grid, toy partitions and sampled manifests."""

import itertools
from typing import Iterator

import numpy as np

from errors import ConfigError
from schema import (
    AttributeDecl,
    AttributePartition,
    AttributeSchema,
    Domain,
    Kind,
    load_dataset,
    partition_hash,
)
from splitter import DomainManifest, LabeledExample

BUILTIN_CORPORA = ("3dshapes",)

# stream id for fixture sampling; 0 and 1 belong to the translation directions
_FIXTURE_STREAM = 2


def shapes3d_grid(schema: AttributeSchema) -> Iterator[LabeledExample]:
    """Every combination of the 3D-Shapes factors (480,000 records), in row-major schema order."""
    ranges = [range(d.cardinality) for d in schema.attributes]
    for i, values in enumerate(itertools.product(*ranges)):
        yield LabeledExample(f"{i:06d}", values)


def builtin_corpus(name: str) -> tuple[AttributeSchema, AttributePartition, Iterator[LabeledExample]]:
    if name != "3dshapes":
        raise ConfigError(f"no built-in corpus {name!r}")
    schema, partition = load_dataset(name)
    return schema, partition, shapes3d_grid(schema)


# ---------------------------------------------------------------------------
# Toy fixtures
# ---------------------------------------------------------------------------

def toy_schema() -> AttributeSchema:
    """Four categorical attributes: splitter (2), content (10), A-specific (10), B-specific (10)."""
    return AttributeSchema((
        AttributeDecl("domain", Kind.CATEGORICAL, 0, cardinality=2),
        AttributeDecl("content", Kind.CATEGORICAL, 1, cardinality=10),
        AttributeDecl("style_a", Kind.CATEGORICAL, 2, cardinality=10, family="color"),
        AttributeDecl("style_b", Kind.CATEGORICAL, 3, cardinality=10, family="color"),
    ), dataset="toy")


def toy_partition() -> AttributePartition:
    return AttributePartition(
        shared=frozenset({1}),
        specific_a=frozenset({2}),
        specific_b=frozenset({3}),
        domain_splitting=0,
        fixed_split_values=(0, 1),
        fixed_in_b={2: 8},
        fixed_in_a={3: 2},
        dataset="toy",
    )


def uniform4() -> tuple[AttributeSchema, AttributePartition, DomainManifest, DomainManifest]:
    """One shared attribute uniform over 4 values in both domains."""
    schema = AttributeSchema((AttributeDecl("value", Kind.CATEGORICAL, 0, cardinality=4),), dataset="uniform4")
    partition = AttributePartition(shared=frozenset({0}), specific_a=frozenset(), specific_b=frozenset())
    digest = partition_hash(schema, partition)
    a = DomainManifest(Domain.A, digest, [LabeledExample(f"a{v}", (v,)) for v in range(4)])
    b = DomainManifest(Domain.B, digest, [LabeledExample(f"b{v}", (v,)) for v in range(4)])
    return schema, partition, a, b


def pose_schema() -> AttributeSchema:
    return AttributeSchema((
        AttributeDecl("identity", Kind.CATEGORICAL, 0, cardinality=4),
        AttributeDecl("background", Kind.CATEGORICAL, 1, cardinality=4, family="color"),
        AttributeDecl("pose", Kind.CONTINUOUS, 2, channels=("yaw", "pitch", "roll"), unit="degrees"),
    ), dataset="pose-toy")


def pose_partition() -> AttributePartition:
    return AttributePartition(
        shared=frozenset({2}),
        specific_a=frozenset({1}),
        specific_b=frozenset({0}),
        fixed_in_b={1: 0},
        fixed_in_a={0: 0},
        dataset="pose-toy",
    )


def synthetic_manifests(
    schema: AttributeSchema,
    partition: AttributePartition,
    n: int,
    seed: int = 0,
    spread: float = 40.0,
) -> tuple[DomainManifest, DomainManifest]:
    """Sample n valid examples per domain.

    Varying categorical attributes are uniform; continuous channels are uniform
    in [-spread, spread] rounded to 0.01; exactly-one prefilter groups get a
    single asserted member.
    """
    digest = partition_hash(schema, partition)
    manifests = []
    for stream, domain in enumerate(Domain):
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, _FIXTURE_STREAM + stream], dtype=np.uint64)))
        fixed = partition.fixed_in(domain)
        examples = []
        for i in range(n):
            values = []
            for d in schema.attributes:
                if d.index in fixed:
                    values.append(fixed[d.index])
                elif d.is_categorical:
                    values.append(int(rng.integers(d.cardinality)))
                elif d.channels:
                    values.append(tuple(round(float(x), 2) for x in rng.uniform(-spread, spread, len(d.channels))))
                else:
                    values.append(round(float(rng.uniform(-spread, spread)), 2))
            for rule in partition.prefilters:
                forced = [k for k in rule.attributes if fixed.get(k) == 1]
                free = [k for k in rule.attributes if k not in fixed]
                chosen = forced[0] if forced else free[int(rng.integers(len(free)))]
                for k in rule.attributes:
                    if k not in fixed:
                        values[k] = int(k == chosen)
            examples.append(LabeledExample(f"{domain.value.lower()}{i:05d}", tuple(values)))
        manifests.append(DomainManifest(domain, digest, examples))
    return manifests[0], manifests[1]
