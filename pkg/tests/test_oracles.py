from fractions import Fraction

import pytest

from errors import ConfigError, DataError
from eval.cases import ALL_CASES, CheckContext, table_row
from eval.fixtures import pose_partition, pose_schema, shapes3d_grid, synthetic_manifests, uniform4
from eval.oracles import (
    Composite,
    ContentIdentity,
    DistributionMode,
    DomainDistribution,
    OracleKind,
    OracleSpec,
    Pairing,
    StyleCopier,
    estimate_distribution,
    expected_metrics_bruteforce,
    generate_triplets,
    pair_rng,
    parse_oracle,
)
from eval.pose import pose_report
from eval.scoring import Metric, binomial_sigma, evaluate, perfect_attributes
from schema import Direction, Domain, load_dataset
from splitter import DomainManifest, build_split

A2B = Direction.A2B


def test_content_identity_returns_input():
    rng = pair_rng(0, 0, 0)
    assert ContentIdentity().translate(A2B, (0, 5, 7, 2), (1, 9, 8, 4), rng) == (0, 5, 7, 2)


def test_style_copier_is_the_perfect_translator(toy):
    _, partition = toy
    copier = StyleCopier(partition, partition.specific_b)
    y_a, y_b = (0, 5, 7, 2), (1, 9, 8, 4)
    assert copier.translate(A2B, y_a, y_b) == perfect_attributes(partition, A2B, y_a, y_b)


def test_noise_marginal_spreads_evenly(toy):
    schema, partition = toy
    noisy = Composite(ContentIdentity(), 0.1, schema)
    marginals = noisy.attribute_marginals(A2B, (0, 5, 7, 2), (1, 9, 8, 4))
    assert marginals[1][5] == Fraction(9, 10)
    assert marginals[1][0] == Fraction(1, 90)
    assert sum(marginals[1].values()) == 1
    assert marginals[0] == {0: Fraction(9, 10), 1: Fraction(1, 10)}


def test_noise_leaves_continuous_attributes_alone():
    schema = pose_schema()
    noisy = Composite(ContentIdentity(), 1.0, schema)
    y_a = (0, 2, (10.0, -5.0, 0.5))
    out = noisy.translate(A2B, y_a, (3, 1, (0.0, 0.0, 0.0)), pair_rng(0, 0, 4))
    assert out[0] != 0 and out[1] != 2
    assert out[2] == (10.0, -5.0, 0.5)


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

def test_joint_distribution_of_two_vectors():
    dist = DomainDistribution(Domain.A, [(0, 1), (1, 0)])
    assert dist.probability((0, 1)) == Fraction(1, 2)
    assert dist.probability((1, 0)) == Fraction(1, 2)
    assert dist.probability((1, 1)) == 0


def test_marginal_mode_factorizes():
    dist = DomainDistribution(Domain.A, [(0, 1), (1, 0)], DistributionMode.MARGINALS)
    assert dist.probability((1, 1)) == Fraction(1, 4)


def test_empty_distribution():
    with pytest.raises(DataError, match="empty"):
        DomainDistribution(Domain.B, [])


def test_shapes_domain_a_marginals(shapes):
    schema, partition = shapes
    a, _ = build_split(shapes3d_grid(schema), schema, partition)
    dist = estimate_distribution(a)
    assert dist.marginal(schema.index_of("shape")) == {v: Fraction(1, 4) for v in range(4)}
    assert dist.marginal(schema.index_of("floor_hue")) == {v: Fraction(1, 10) for v in range(10)}
    assert dist.marginal(schema.index_of("size")) == {4: Fraction(1)}


# ---------------------------------------------------------------------------
# Triplet generation
# ---------------------------------------------------------------------------

def test_guidance_identity_triplets(toy, toy_manifests):
    schema, partition = toy
    a, b = toy_manifests
    triplets = generate_triplets(OracleSpec(OracleKind.GUIDANCE_IDENTITY), schema, partition, a, b, 100)
    assert len(triplets) == 200
    assert sum(t.direction is A2B for t in triplets) == 100
    assert all(t.y_hat == t.y_b for t in triplets)
    assert all(t.input_id and t.guidance_id for t in triplets)


def test_same_seed_same_triplets(toy, toy_manifests):
    schema, partition = toy
    a, b = toy_manifests
    spec = parse_oracle("random-triplets", schema, epsilon=0.2)
    first = generate_triplets(spec, schema, partition, a, b, 300, seed=99)
    second = generate_triplets(spec, schema, partition, a, b, 300, seed=99)
    other = generate_triplets(spec, schema, partition, a, b, 300, seed=100)
    assert first == second
    assert first != other


def test_exhaustive_pairing(toy):
    schema, partition = toy
    a, b = synthetic_manifests(schema, partition, 3, seed=4)
    spec = OracleSpec(OracleKind.CONTENT_IDENTITY)
    triplets = generate_triplets(spec, schema, partition, a, b, 9, Pairing.EXHAUSTIVE)
    assert sum(t.direction is A2B for t in triplets) == 9
    assert len({(t.input_id, t.guidance_id) for t in triplets if t.direction is A2B}) == 9
    with pytest.raises(DataError, match="cap"):
        generate_triplets(spec, schema, partition, a, b, 8, Pairing.EXHAUSTIVE)


def test_sampling_oracle_needs_examples(toy):
    schema, partition = toy
    empty = DomainManifest(Domain.A, "")
    _, b = synthetic_manifests(schema, partition, 3)
    with pytest.raises(DataError, match="empty"):
        generate_triplets(OracleSpec(OracleKind.RANDOM_TARGET), schema, partition, empty, b, 10)


def test_pair_rng_is_positional():
    assert pair_rng(5, 0, 17).random() == pair_rng(5, 0, 17).random()
    assert pair_rng(5, 0, 17).random() != pair_rng(5, 1, 17).random()
    with pytest.raises(ConfigError):
        pair_rng(-1, 0, 0)


# ---------------------------------------------------------------------------
# Oracle strings
# ---------------------------------------------------------------------------

def test_parse_style_copier_family(shapes):
    schema, _ = shapes
    spec = parse_oracle("style-copier:@color", schema)
    assert spec.copied == frozenset(schema.index_of(n) for n in ("floor_hue", "wall_hue", "object_hue"))


def test_parse_constant_output(shapes):
    schema, _ = shapes
    spec = parse_oracle("constant-output:red,blue,red,5,cube,-30.0", schema)
    assert spec.constant == (0, 7, 0, 4, 0, 0)


def test_parse_with_noise_wraps(toy):
    schema, _ = toy
    spec = parse_oracle("guidance-identity", schema, epsilon=0.04)
    assert spec.kind is OracleKind.COMPOSITE
    assert spec.inner.kind is OracleKind.GUIDANCE_IDENTITY
    assert spec.label == "guidance-identity+noise(0.04)"


@pytest.mark.parametrize("text", ["mirror", "constant-output:1,2", "style-copier:@texture", "composite"])
def test_parse_rejects(toy, text):
    schema, _ = toy
    with pytest.raises(ConfigError):
        parse_oracle(text, schema)


# ---------------------------------------------------------------------------
# Exact expectations
# ---------------------------------------------------------------------------

def test_uniform4_random_target_content():
    schema, partition, a, b = uniform4()
    exact = expected_metrics_bruteforce(OracleSpec(OracleKind.RANDOM_TARGET), schema, partition, a, b)
    assert exact.d_c == 25.0
    assert exact.a2b.score(Metric.D_C, "value").n == 12


def test_exact_matches_exhaustive_for_deterministic_oracle(toy):
    schema, partition = toy
    a, b = synthetic_manifests(schema, partition, 6, seed=8)
    spec = parse_oracle("constant-output:0,3,8,2", schema)
    exact = expected_metrics_bruteforce(spec, schema, partition, a, b)
    triplets = generate_triplets(spec, schema, partition, a, b, 36, Pairing.EXHAUSTIVE)
    assert table_row(evaluate(triplets, schema, partition)) == table_row(exact)


def test_sampled_estimate_within_tolerance(toy):
    schema, partition = toy
    a, b = synthetic_manifests(schema, partition, 10, seed=2)
    spec = parse_oracle("random-target", schema, epsilon=0.1)
    exact = expected_metrics_bruteforce(spec, schema, partition, a, b)
    observed = evaluate(generate_triplets(spec, schema, partition, a, b, 50_000), schema, partition)
    for metric in Metric:
        want, got = exact.a2b.metric(metric), observed.a2b.metric(metric)
        if want is None:
            continue
        assert abs(got - want) <= 3 * binomial_sigma(exact.a2b, observed.a2b, metric) + 1e-9


def test_bruteforce_cap(toy, toy_manifests):
    schema, partition = toy
    a, b = toy_manifests
    with pytest.raises(DataError, match="cap"):
        expected_metrics_bruteforce(OracleSpec(OracleKind.CONTENT_IDENTITY), schema, partition, a, b, cap=10)


@pytest.mark.parametrize("name", ["3dshapes", "synaction", "celeba_d"])
def test_perfect_translator_on_shipped_partitions(name):
    schema, partition = load_dataset(name)
    a, b = synthetic_manifests(schema, partition, 15, seed=6)
    report = expected_metrics_bruteforce(OracleSpec(OracleKind.STYLE_COPIER), schema, partition, a, b)
    assert table_row(report) == {
        "q_tr": 100.0, "d": 100.0, "d_s_a2b": 100.0, "d_s_b2a": 100.0, "d_c": 100.0, "bias": 0.0,
    }
    assert not report.low_confidence


def test_color_copier_signature(shapes):
    schema, partition = shapes
    a, b = synthetic_manifests(schema, partition, 20, seed=9)
    exact = expected_metrics_bruteforce(parse_oracle("style-copier:@color", schema), schema, partition, a, b)
    assert exact.b2a.score(Metric.D_S, "floor_hue").value > 90
    assert exact.b2a.score(Metric.D_S, "wall_hue").value > 90
    assert exact.a2b.score(Metric.D_C, "object_hue").value < 30


# ---------------------------------------------------------------------------
# Pose
# ---------------------------------------------------------------------------

def test_pose_identity_and_guidance():
    schema, partition = pose_schema(), pose_partition()
    a, b = synthetic_manifests(schema, partition, 40, seed=12)
    same = pose_report(generate_triplets(OracleSpec(OracleKind.CONTENT_IDENTITY), schema, partition, a, b, 500),
                       schema, "pose")
    assert (same.d_p, same.pm) == (0.0, 1.0)
    swapped = pose_report(generate_triplets(OracleSpec(OracleKind.GUIDANCE_IDENTITY), schema, partition, a, b, 500),
                          schema, "pose")
    assert swapped.pm == 0.0


def test_pose_random_pairs():
    schema, partition = pose_schema(), pose_partition()
    a, b = synthetic_manifests(schema, partition, 500, seed=13)
    triplets = generate_triplets(OracleSpec(OracleKind.RANDOM_TRIPLETS), schema, partition, a, b, 5_000)
    assert pose_report(triplets, schema, "pose").pm == pytest.approx(0.5, abs=0.02)


def test_pose_needs_multichannel_attribute():
    schema, partition = pose_schema(), pose_partition()
    a, b = synthetic_manifests(schema, partition, 4)
    triplets = generate_triplets(OracleSpec(OracleKind.CONTENT_IDENTITY), schema, partition, a, b, 4)
    with pytest.raises(DataError):
        pose_report(triplets, schema, "identity")


# ---------------------------------------------------------------------------
# Self-check cases
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("case", [c for c in ALL_CASES if c.category != "splits"], ids=lambda c: c.id)
def test_selfcheck_case(case):
    ctx = CheckContext(pairs=5_000)
    assert ctx.streamed_pairs == 50_000
    assert case.check(ctx) == []
