import pytest

from errors import AttributeLookupError, ConfigError, DataError
from schema import (
    AttributeDecl,
    AttributePartition,
    Direction,
    Domain,
    Kind,
    Role,
    attribute_role,
    dump_partition,
    dump_schema,
    fixed_value,
    load_dataset,
    parse_partition,
    parse_schema,
    partition_hash,
    validate_partition,
)


def _rules(result):
    return [v.rule for v in result.violations]


# ---------------------------------------------------------------------------
# Attribute declarations
# ---------------------------------------------------------------------------

def test_parse_label_and_code():
    decl = AttributeDecl("hue", Kind.CATEGORICAL, 0, cardinality=3, labels=("red", "green", "blue"))
    assert decl.parse("green") == 1
    assert decl.parse(2) == 2
    assert decl.parse("0") == 0
    assert decl.parse(1.0) == 1


def test_parse_rejects_garbage():
    decl = AttributeDecl("hue", Kind.CATEGORICAL, 0, cardinality=3, labels=("red", "green", "blue"))
    with pytest.raises(DataError, match="hue"):
        decl.parse("violet")


def test_multichannel_distance_is_channel_mean():
    decl = AttributeDecl("pose", Kind.CONTINUOUS, 0, channels=("yaw", "pitch", "roll"))
    assert decl.parse(["1", "2", "3"]) == (1.0, 2.0, 3.0)
    assert decl.distance((0.0, 0.0, 0.0), (3.0, -3.0, 6.0)) == 4.0


def test_duplicate_names_rejected():
    with pytest.raises(DataError, match="duplicate"):
        parse_schema('[[attribute]]\nname = "x"\ncardinality = 2\n[[attribute]]\nname = "x"\ncardinality = 2\n')


# ---------------------------------------------------------------------------
# Partition validation
# ---------------------------------------------------------------------------

def test_toy_partition_validates(toy):
    schema, partition = toy
    assert validate_partition(schema, partition).ok


@pytest.mark.parametrize("name", ["3dshapes", "synaction", "celeba_d"])
def test_shipped_partitions_validate(name):
    schema, partition = load_dataset(name)
    result = validate_partition(schema, partition)
    assert result.ok, [v.message for v in result.violations]
    assert partition.size == len(schema)


def test_overlapping_roles(toy):
    schema, partition = toy
    broken = AttributePartition(
        shared=frozenset({1, 2}),
        specific_a=partition.specific_a,
        specific_b=partition.specific_b,
        domain_splitting=0,
        fixed_split_values=(0, 1),
        fixed_in_b=partition.fixed_in_b,
        fixed_in_a=partition.fixed_in_a,
    )
    result = validate_partition(schema, broken)
    assert "multiple_roles" in _rules(result)
    assert any("attribute 2 assigned two roles" in v.message for v in result.violations)


def test_unassigned_and_missing_fixed_values(toy):
    schema, _ = toy
    partition = AttributePartition(
        shared=frozenset({1}),
        specific_a=frozenset({2}),
        specific_b=frozenset(),
        domain_splitting=0,
        fixed_split_values=(0, 1),
    )
    rules = _rules(validate_partition(schema, partition))
    assert "unassigned" in rules
    assert "fixed_missing" in rules


def test_equal_split_values(toy):
    schema, partition = toy
    same = AttributePartition(
        shared=partition.shared,
        specific_a=partition.specific_a,
        specific_b=partition.specific_b,
        domain_splitting=0,
        fixed_split_values=(1, 1),
        fixed_in_b=partition.fixed_in_b,
        fixed_in_a=partition.fixed_in_a,
    )
    assert "split_values_equal" in _rules(validate_partition(schema, same))


def test_continuous_attribute_must_be_shared():
    schema, _ = load_dataset("synaction")
    pose = schema.index_of("pose")
    partition = AttributePartition(
        shared=frozenset(),
        specific_a=frozenset({schema.index_of("background"), pose}),
        specific_b=frozenset({schema.index_of("identity")}),
        fixed_in_b={schema.index_of("background"): 0, pose: 0.0},
        fixed_in_a={schema.index_of("identity"): 0},
    )
    assert "continuous_role" in _rules(validate_partition(schema, partition))


# ---------------------------------------------------------------------------
# Role and fixed-value lookups
# ---------------------------------------------------------------------------

def test_roles_on_shipped_partitions(shapes):
    schema, partition = shapes
    assert attribute_role(partition, schema.index_of("shape")) is Role.SHARED
    assert attribute_role(partition, schema.index_of("floor_hue")) is Role.SPECIFIC_A
    celeba_schema, celeba = load_dataset("celeba_d")
    assert attribute_role(celeba, celeba_schema.index_of("Male")) is Role.DOMAIN_SPLITTING


def test_role_out_of_range(shapes):
    schema, partition = shapes
    with pytest.raises(AttributeLookupError, match="out of range"):
        attribute_role(partition, len(schema))


def test_fixed_values(shapes):
    schema, partition = shapes
    floor = schema[schema.index_of("floor_hue")]
    assert floor.render(fixed_value(partition, Domain.B, floor.index)) == "red"
    orientation = schema[schema.index_of("orientation")]
    assert orientation.render(fixed_value(partition, Domain.A, orientation.index)) == "-30.0"
    size = schema[schema.index_of("size")]
    assert size.render(fixed_value(partition, Domain.A, size.index)) == "5"


def test_fixed_value_of_varying_attribute(shapes):
    schema, partition = shapes
    with pytest.raises(AttributeLookupError, match="not fixed in this domain"):
        fixed_value(partition, Domain.A, schema.index_of("shape"))


def test_direction_domains():
    assert Direction.A2B.source is Domain.A
    assert Direction.B2A.target is Domain.A
    assert Direction.A2B.stream != Direction.B2A.stream


# ---------------------------------------------------------------------------
# TOML round trip and hashing
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["3dshapes", "synaction", "celeba_d"])
def test_canonical_form_is_stable(name):
    schema, partition = load_dataset(name)
    schema_text = dump_schema(schema)
    assert dump_schema(parse_schema(schema_text)) == schema_text
    text = dump_partition(partition, schema)
    assert dump_partition(parse_partition(text, schema), schema) == text
    assert parse_partition(text, schema) == partition


def test_unknown_attribute_in_partition(shapes):
    schema, _ = shapes
    with pytest.raises(ConfigError, match="unknown attribute"):
        parse_partition('shared = ["colour"]\n', schema)


def test_partition_hash_tracks_content(shapes):
    schema, partition = shapes
    digest = partition_hash(schema, partition)
    assert digest == partition_hash(schema, partition)
    assert len(digest) == 16
    moved = AttributePartition(
        shared=partition.shared,
        specific_a=partition.specific_a,
        specific_b=partition.specific_b,
        fixed_in_b={**partition.fixed_in_b, schema.index_of("floor_hue"): 3},
        fixed_in_a=partition.fixed_in_a,
        dataset=partition.dataset,
    )
    assert partition_hash(schema, moved) != digest


def test_unknown_dataset():
    with pytest.raises(ConfigError, match="unknown dataset"):
        load_dataset("mnist")
