"""Self-check cases (15 total) across 5 categories.

Every case builds its own fixtures, runs the pipeline and returns a list of
failure reasons; an empty list is a pass.
"""

from dataclasses import dataclass, field
from typing import Callable

from eval.fixtures import (
    pose_partition,
    pose_schema,
    shapes3d_grid,
    synthetic_manifests,
    toy_partition,
    toy_schema,
    uniform4,
)
from eval.oracles import (
    DEFAULT_SEED,
    OracleKind,
    OracleSpec,
    Pairing,
    expected_metrics_bruteforce,
    generate_triplets,
    parse_oracle,
)
from eval.pose import pose_report
from eval.scoring import Metric, MetricReport, binomial_sigma, evaluate
from schema import Direction, load_dataset
from splitter import build_split


@dataclass
class CheckContext:
    pairs: int = 20_000
    seed: int = DEFAULT_SEED
    sigmas: float = 3.0
    # floor for the brute-force comparisons: 50k pairs per direction, 10^5 triplets
    min_streamed_pairs: int = 50_000

    @property
    def streamed_pairs(self) -> int:
        return max(self.pairs, self.min_streamed_pairs)


@dataclass
class SelfCheckCase:
    id: str
    category: str
    description: str
    check: Callable[[CheckContext], list[str]] = field(repr=False)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def table_row(report: MetricReport) -> dict[str, float | None]:
    return {
        "q_tr": report.q_tr,
        "d": report.d,
        "d_s_a2b": report.a2b.d_s,
        "d_s_b2a": report.b2a.d_s,
        "d_c": report.d_c,
        "bias": report.bias,
    }


def _compare_exact(label: str, report: MetricReport, expected: dict[str, float]) -> list[str]:
    row = table_row(report)
    return [
        f"{label}: {name} = {row[name]}, expected {want}"
        for name, want in expected.items()
        if row[name] != want
    ]


def _compare_streamed(label: str, exact: MetricReport, streamed: MetricReport, sigmas: float) -> list[str]:
    reasons = []
    for direction in Direction:
        e, o = exact.direction(direction), streamed.direction(direction)
        for metric in Metric:
            want, got = e.metric(metric), o.metric(metric)
            if want is None or got is None:
                if (want is None) != (got is None):
                    reasons.append(f"{label} {metric} {direction}: defined mismatch ({got} vs {want})")
                continue
            tolerance = sigmas * binomial_sigma(e, o, metric) + 1e-9
            if abs(got - want) > tolerance:
                reasons.append(f"{label} {metric} {direction}: {got:.3f} vs exact {want:.3f} (±{tolerance:.3f})")
    return reasons


# ---------------------------------------------------------------------------
# Category: poles
# Identity baselines must land exactly on their table rows.
# ---------------------------------------------------------------------------

CONTENT_POLE = {"q_tr": 0.0, "d": 50.0, "d_s_a2b": 0.0, "d_s_b2a": 0.0, "d_c": 100.0, "bias": 0.0}
GUIDANCE_POLE = {"q_tr": 100.0, "d": 50.0, "d_s_a2b": 100.0, "d_s_b2a": 100.0, "d_c": 0.0, "bias": 0.0}


def _pole(kind: OracleKind, expected: dict) -> Callable[[CheckContext], list[str]]:
    def check(ctx: CheckContext) -> list[str]:
        schema, partition = toy_schema(), toy_partition()
        a, b = synthetic_manifests(schema, partition, 12, seed=ctx.seed)
        spec = OracleSpec(kind, seed=ctx.seed)
        streamed = evaluate(generate_triplets(spec, schema, partition, a, b, ctx.pairs), schema, partition)
        exact = expected_metrics_bruteforce(spec, schema, partition, a, b)
        return _compare_exact("streamed", streamed, expected) + _compare_exact("exact", exact, expected)
    return check


def _noisy_guidance(ctx: CheckContext) -> list[str]:
    schema, partition = toy_schema(), toy_partition()
    a, b = synthetic_manifests(schema, partition, 20, seed=ctx.seed)
    spec = parse_oracle("guidance-identity", schema, epsilon=0.04, seed=ctx.seed)
    report = evaluate(generate_triplets(spec, schema, partition, a, b, 10_000), schema, partition)
    if not 94.0 <= report.q_tr <= 98.0:
        return [f"Q_tr = {report.q_tr:.2f} outside [94, 98] at epsilon 0.04"]
    return []


POLES = [
    SelfCheckCase("pole_content", "poles", "content-identity reproduces 0/50/0/0/100/0",
                  _pole(OracleKind.CONTENT_IDENTITY, CONTENT_POLE)),
    SelfCheckCase("pole_guidance", "poles", "guidance-identity reproduces 100/50/100/100/0/0",
                  _pole(OracleKind.GUIDANCE_IDENTITY, GUIDANCE_POLE)),
    SelfCheckCase("pole_guidance_noise", "poles", "guidance-identity with 4% label noise keeps Q_tr in [94, 98]",
                  _noisy_guidance),
]


# ---------------------------------------------------------------------------
# Category: bruteforce
# Streamed estimates agree with exact enumeration.
# ---------------------------------------------------------------------------

def _streamed_vs_exact(oracle: str, epsilon: float = 0.0) -> Callable[[CheckContext], list[str]]:
    def check(ctx: CheckContext) -> list[str]:
        schema, partition = toy_schema(), toy_partition()
        a, b = synthetic_manifests(schema, partition, 15, seed=ctx.seed)
        spec = parse_oracle(oracle, schema, epsilon=epsilon, seed=ctx.seed)
        exact = expected_metrics_bruteforce(spec, schema, partition, a, b)
        deterministic = not spec.samples_domains and epsilon == 0
        if deterministic:
            triplets = generate_triplets(spec, schema, partition, a, b, len(a) * len(b), Pairing.EXHAUSTIVE)
            return _compare_exact(oracle, evaluate(triplets, schema, partition), table_row(exact))
        triplets = generate_triplets(spec, schema, partition, a, b, ctx.streamed_pairs)
        return _compare_streamed(oracle, exact, evaluate(triplets, schema, partition), ctx.sigmas)
    return check


def _uniform4_random_target(ctx: CheckContext) -> list[str]:
    schema, partition, a, b = uniform4()
    spec = OracleSpec(OracleKind.RANDOM_TARGET, seed=ctx.seed)
    exact = expected_metrics_bruteforce(spec, schema, partition, a, b)
    reasons = [] if exact.d_c == 25.0 else [f"exact D_c = {exact.d_c}, expected 25.0"]
    streamed = evaluate(generate_triplets(spec, schema, partition, a, b, ctx.streamed_pairs), schema, partition)
    return reasons + _compare_streamed("random-target", exact, streamed, ctx.sigmas)


BRUTEFORCE = [
    SelfCheckCase("bf_content", "bruteforce", "content-identity exact under exhaustive pairing",
                  _streamed_vs_exact("content-identity")),
    SelfCheckCase("bf_style_copier", "bruteforce", "style-copier exact under exhaustive pairing",
                  _streamed_vs_exact("style-copier")),
    SelfCheckCase("bf_constant", "bruteforce", "constant-output exact under exhaustive pairing",
                  _streamed_vs_exact("constant-output:0,3,8,2")),
    SelfCheckCase("bf_random_target", "bruteforce", "random-target within binomial tolerance",
                  _streamed_vs_exact("random-target")),
    SelfCheckCase("bf_random_triplets", "bruteforce", "random-triplets within binomial tolerance",
                  _streamed_vs_exact("random-triplets")),
    SelfCheckCase("bf_noise", "bruteforce", "style-copier with 10% noise within binomial tolerance",
                  _streamed_vs_exact("style-copier", epsilon=0.1)),
    SelfCheckCase("bf_uniform4", "bruteforce", "random-target on a uniform-4 shared attribute gives D_c = 25",
                  _uniform4_random_target),
]


# ---------------------------------------------------------------------------
# Category: optimum
# ---------------------------------------------------------------------------

PERFECT = {"q_tr": 100.0, "d": 100.0, "d_s_a2b": 100.0, "d_s_b2a": 100.0, "d_c": 100.0, "bias": 0.0}


def _perfect_on_shipped(ctx: CheckContext) -> list[str]:
    reasons = []
    for name in ("3dshapes", "synaction", "celeba_d"):
        schema, partition = load_dataset(name)
        a, b = synthetic_manifests(schema, partition, 20, seed=ctx.seed)
        exact = expected_metrics_bruteforce(OracleSpec(OracleKind.STYLE_COPIER), schema, partition, a, b)
        reasons += _compare_exact(name, exact, PERFECT)
    return reasons


def _color_copier(ctx: CheckContext) -> list[str]:
    schema, partition = load_dataset("3dshapes")
    a, b = synthetic_manifests(schema, partition, 20, seed=ctx.seed)
    spec = parse_oracle("style-copier:@color", schema)
    exact = expected_metrics_bruteforce(spec, schema, partition, a, b)
    reasons = []
    for attr in ("floor_hue", "wall_hue"):
        value = exact.b2a.score(Metric.D_S, attr).value
        if value is None or value <= 90:
            reasons.append(f"{attr} D_s = {value}, expected > 90")
    for direction in Direction:
        value = exact.direction(direction).score(Metric.D_C, "object_hue").value
        if value is None or value >= 30:
            reasons.append(f"object_hue D_c {direction} = {value}, expected < 30")
    return reasons


OPTIMUM = [
    SelfCheckCase("perfect_translator", "optimum", "style-copier of target-specific attributes scores the optimum",
                  _perfect_on_shipped),
    SelfCheckCase("color_copier", "optimum", "copying all colors transfers floor/wall hue but loses object hue",
                  _color_copier),
]


# ---------------------------------------------------------------------------
# Category: splits
# ---------------------------------------------------------------------------

def _shapes_split(ctx: CheckContext) -> list[str]:
    schema, partition = load_dataset("3dshapes")
    a, b = build_split(shapes3d_grid(schema), schema, partition)
    if (len(a), len(b)) != (4000, 4800):
        return [f"|A|={len(a)} |B|={len(b)}, expected 4000/4800"]
    return []


SPLITS = [
    SelfCheckCase("split_3dshapes", "splits", "full factor grid splits into 4000 / 4800", _shapes_split),
]


# ---------------------------------------------------------------------------
# Category: pose
# ---------------------------------------------------------------------------

def _pose_random_pairs(ctx: CheckContext) -> list[str]:
    schema, partition = pose_schema(), pose_partition()
    a, b = synthetic_manifests(schema, partition, 500, seed=ctx.seed)
    spec = OracleSpec(OracleKind.RANDOM_TRIPLETS, seed=ctx.seed)
    triplets = generate_triplets(spec, schema, partition, a, b, 5_000)
    report = pose_report(triplets, schema, "pose")
    if report.pm is None or abs(report.pm - 0.5) > 0.02:
        return [f"PM = {report.pm}, expected 0.50 ± 0.02"]
    return []


def _pose_identity(ctx: CheckContext) -> list[str]:
    schema, partition = pose_schema(), pose_partition()
    a, b = synthetic_manifests(schema, partition, 50, seed=ctx.seed)
    triplets = generate_triplets(OracleSpec(OracleKind.CONTENT_IDENTITY), schema, partition, a, b, 1_000)
    report = pose_report(triplets, schema, "pose")
    if report.d_p != 0.0 or report.pm != 1.0:
        return [f"D_p = {report.d_p}, PM = {report.pm}; expected 0 and 1"]
    return []


POSE = [
    SelfCheckCase("pose_random_pairs", "pose", "random pairs match the input pose half the time", _pose_random_pairs),
    SelfCheckCase("pose_identity", "pose", "returning the input gives D_p = 0 and PM = 1", _pose_identity),
]


CATEGORIES = {
    "poles": POLES,
    "bruteforce": BRUTEFORCE,
    "optimum": OPTIMUM,
    "splits": SPLITS,
    "pose": POSE,
}

ALL_CASES = [case for cases in CATEGORIES.values() for case in cases]
