"""disentangle-bench: build two-domain splits, simulate baselines, score translations.

    dbench split     --dataset 3dshapes --corpus builtin:3dshapes --out out/shapes
    dbench simulate  --dataset 3dshapes --manifests out/shapes/domain_A.jsonl out/shapes/domain_B.jsonl \
                     --oracle guidance-identity --triplets out/shapes/guidance.jsonl
    dbench eval      --dataset 3dshapes --triplets out/shapes/guidance.jsonl --format markdown,json
    dbench report    --reports out/a/report.json out/b/report.json --format markdown
    dbench selfcheck
"""

import argparse
import json
import logging
import os
import sys
import tomllib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from errors import BenchError, ConfigError, DataError, MetricUndefinedError
from eval.cases import CheckContext
from eval.fixtures import BUILTIN_CORPORA, builtin_corpus
from eval.oracles import (
    BRUTEFORCE_CAP,
    DEFAULT_SEED,
    DistributionMode,
    Pairing,
    expected_metrics_bruteforce,
    generate_triplets,
    parse_oracle,
)
from eval.pose import pose_report
from eval.report import (
    REPORT_FORMATS,
    ReportDocument,
    emit_per_attribute_report,
    emit_pose_report,
    emit_report,
    load_reports,
    report_to_dict,
)
from eval.runner import run_selfcheck
from eval.scoring import DEFAULT_BIAS_THRESHOLD, check_triplets, evaluate
from schema import (
    AttributePartition,
    AttributeSchema,
    load_dataset,
    load_partition,
    load_schema,
    partition_hash,
    validate_partition,
)
from splitter import DomainManifest, Provenance, split_corpus, split_stats, verify_manifest
from store import CORPUS_FORMATS, iter_corpus, read_manifest, read_triplets, write_id_list, write_manifest
from store import write_triplets, write_triplets_csv

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
log = logging.getLogger(__name__)

SUBCOMMANDS = ("split", "simulate", "eval", "report", "selfcheck")
DEFAULT_CONFIG = Path("dbench.toml")
FORMAT_SUFFIX = {"markdown": "md", "csv": "csv", "json": "json"}


def load_config(path: str | None = None) -> dict:
    """Read the TOML config named by --config, else ./dbench.toml, else nothing."""
    if path:
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigError(f"config file not found: {config_path}")
    else:
        config_path = DEFAULT_CONFIG
        if not config_path.exists():
            return {}
    try:
        return tomllib.loads(config_path.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{config_path}: {e}") from None


@dataclass
class RunConfig:
    subcommand: str
    schema: Path | None = None
    partition: Path | None = None
    dataset: str | None = None
    corpus: str | None = None
    corpus_format: str = "csv"
    manifests: list[Path] = field(default_factory=list)
    triplets: Path | None = None
    reports: list[Path] = field(default_factory=list)
    out: Path = Path("out")
    formats: list[str] = field(default_factory=lambda: ["markdown"])
    oracle: str = "guidance-identity"
    pairs: int = 10_000
    seed: int = DEFAULT_SEED
    epsilon: float = 0.0
    bias_threshold: float = DEFAULT_BIAS_THRESHOLD
    pairing: Pairing = Pairing.UNIFORM
    distribution_mode: DistributionMode = DistributionMode.JOINT
    bruteforce_cap: int = BRUTEFORCE_CAP
    exact: bool = False
    use_ground_truth: bool = False
    name: str | None = None
    pose_attribute: str | None = None
    precision: int = 1
    gray_open: str = "<span class=gray>"
    gray_close: str = "</span>"
    category: str | None = None
    case: str | None = None
    output: str | None = None


def _pick(flag, configured, default):
    if flag is not None:
        return flag
    if configured is not None:
        return configured
    return default


def _oracle_from_table(table: dict) -> str | None:
    kind = table.get("kind")
    if not kind:
        return None
    if table.get("copied"):
        return f"{kind}:{','.join(table['copied'])}"
    if table.get("constant"):
        return f"{kind}:{','.join(str(v) for v in table['constant'])}"
    return kind


def resolve_config(args: argparse.Namespace, config: dict) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    run = config.get("run", {})
    paths = config.get("paths", {})
    oracle = config.get("oracle", {})
    report = config.get("report", {})
    defaults = RunConfig(subcommand=args.subcommand)

    def path(value) -> Path | None:
        return Path(value) if value else None

    out = _pick(args.out, run.get("out_dir"), os.environ.get("DBENCH_OUT_DIR") or defaults.out)
    formats = _pick(args.format, report.get("formats"), defaults.formats)
    if isinstance(formats, str):
        formats = [f.strip() for f in formats.split(",") if f.strip()]
    try:
        pairing = Pairing(_pick(args.pairing, run.get("pairing"), defaults.pairing))
        mode = DistributionMode(_pick(args.distribution_mode, run.get("distribution_mode"), defaults.distribution_mode))
    except ValueError as e:
        raise ConfigError(str(e)) from None

    cfg = RunConfig(
        subcommand=args.subcommand,
        schema=path(_pick(args.schema, paths.get("schema"), None)),
        partition=path(_pick(args.partition, paths.get("partition"), None)),
        dataset=_pick(args.dataset, config.get("dataset"), None),
        corpus=_pick(args.corpus, paths.get("corpus"), None),
        corpus_format=_pick(args.corpus_format, paths.get("corpus_format"), defaults.corpus_format),
        manifests=[Path(p) for p in (args.manifests or paths.get("manifests", []))],
        triplets=path(_pick(args.triplets, paths.get("triplets"), None)),
        reports=[Path(p) for p in (args.reports or [])],
        out=Path(out),
        formats=formats,
        oracle=_pick(args.oracle, _oracle_from_table(oracle), defaults.oracle),
        pairs=int(_pick(args.pairs, run.get("pairs"), defaults.pairs)),
        seed=int(_pick(args.seed, run.get("seed"), defaults.seed)),
        epsilon=float(_pick(args.epsilon, oracle.get("epsilon", run.get("epsilon")), defaults.epsilon)),
        bias_threshold=float(_pick(args.bias_threshold, run.get("bias_threshold"), defaults.bias_threshold)),
        pairing=pairing,
        distribution_mode=mode,
        bruteforce_cap=int(run.get("bruteforce_cap", defaults.bruteforce_cap)),
        exact=args.exact,
        use_ground_truth=args.use_ground_truth,
        name=args.name,
        pose_attribute=args.pose_attribute,
        precision=int(report.get("precision", defaults.precision)),
        gray_open=report.get("gray_open", defaults.gray_open),
        gray_close=report.get("gray_close", defaults.gray_close),
        category=args.category,
        case=args.case,
        output=args.output,
    )
    if args.subcommand == "selfcheck" and args.pairs is None and "pairs" not in run:
        cfg.pairs = CheckContext.pairs
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    needs_partition = cfg.subcommand in ("split", "simulate", "eval")
    if needs_partition and not cfg.dataset and not (cfg.schema and cfg.partition):
        raise ConfigError(f"{cfg.subcommand} needs --dataset or both --schema and --partition")
    if cfg.subcommand == "split" and not cfg.corpus:
        raise ConfigError("split needs --corpus")
    if cfg.subcommand == "simulate" and not cfg.corpus and len(cfg.manifests) != 2:
        raise ConfigError("simulate needs --manifests A B or --corpus")
    if cfg.subcommand == "eval" and not cfg.triplets:
        raise ConfigError("eval needs --triplets")
    if cfg.subcommand == "report" and not cfg.reports:
        raise ConfigError("report needs --reports")
    for p in (cfg.schema, cfg.partition, *cfg.manifests, *cfg.reports):
        if p is not None and not p.exists():
            raise ConfigError(f"file not found: {p}")
    if cfg.subcommand == "eval" and not cfg.triplets.exists():
        raise ConfigError(f"file not found: {cfg.triplets}")
    if cfg.corpus and not cfg.corpus.startswith("builtin:") and cfg.corpus_format not in CORPUS_FORMATS:
        raise ConfigError(f"unknown corpus format {cfg.corpus_format!r}")
    unknown = [f for f in cfg.formats if f not in REPORT_FORMATS]
    if unknown or not cfg.formats:
        raise ConfigError(f"unknown report format(s) {unknown}; expected {', '.join(REPORT_FORMATS)}")
    if cfg.pairs < 1:
        raise ConfigError(f"--pairs must be positive, got {cfg.pairs}")
    if not 0.0 <= cfg.epsilon <= 1.0:
        raise ConfigError(f"--epsilon must be within [0, 1], got {cfg.epsilon}")
    if cfg.precision < 1:
        raise ConfigError("report precision must be at least 1 decimal")


# ---------------------------------------------------------------------------
# Shared loading
# ---------------------------------------------------------------------------

def _load_partition(cfg: RunConfig) -> tuple[AttributeSchema, AttributePartition, str]:
    if cfg.schema and cfg.partition:
        schema = load_schema(cfg.schema)
        partition = load_partition(cfg.partition, schema)
    else:
        schema, partition = load_dataset(cfg.dataset)
    result = validate_partition(schema, partition)
    if not result.ok:
        raise ConfigError("invalid partition:\n  " + "\n  ".join(v.message for v in result.violations))
    return schema, partition, partition_hash(schema, partition)


def _filtered_at() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = datetime.fromtimestamp(int(epoch), tz=timezone.utc) if epoch else datetime.now(timezone.utc)
    return moment.replace(microsecond=0).isoformat()


def _split(cfg: RunConfig, schema: AttributeSchema, partition: AttributePartition, digest: str):
    if cfg.corpus.startswith("builtin:"):
        name = cfg.corpus.split(":", 1)[1]
        if name not in BUILTIN_CORPORA:
            raise ConfigError(f"unknown built-in corpus {name!r}; available: {', '.join(BUILTIN_CORPORA)}")
        grid_schema, _, examples = builtin_corpus(name)
        if grid_schema != schema:
            raise ConfigError(f"built-in corpus {name} needs the {name} schema")
    else:
        stream = iter_corpus(cfg.corpus, cfg.corpus_format, schema)
        next(stream)
        examples = stream
    provenance = Provenance(source=cfg.corpus, filtered_at=_filtered_at(), partition_hash=digest)
    return split_corpus(examples, schema, partition, digest, provenance)


def _verified(manifest: DomainManifest, schema, partition) -> DomainManifest:
    result = verify_manifest(manifest, schema, partition)
    if not result.ok:
        shown = "\n  ".join(v.message for v in result.violations[:10])
        raise DataError(f"manifest for domain {manifest.domain} fails verification:\n  {shown}")
    return manifest


def _write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    log.info("wrote %s", path)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_split(cfg: RunConfig) -> int:
    schema, partition, digest = _load_partition(cfg)
    outcome = _split(cfg, schema, partition, digest)
    for manifest in (outcome.a, outcome.b):
        _verified(manifest, schema, partition)
        write_manifest(cfg.out / f"domain_{manifest.domain}.jsonl", manifest)
        write_id_list(cfg.out / f"domain_{manifest.domain}.ids", manifest)

    stats = split_stats(outcome.a, outcome.b, schema, partition)
    lines = ["| Attribute | Role | Varies in A | Varies in B | Values in A | Values in B |",
             "|---|---|---|---|---|---|"]
    for row in stats.attributes:
        lines.append(f"| {row.name} | {row.role} | {'yes' if row.varies_a else 'no'} | "
                     f"{'yes' if row.varies_b else 'no'} | {len(row.observed_a)} | {len(row.observed_b)} |")
    table = "\n".join(lines) + "\n"
    _write(cfg.out / "split_stats.md", table.encode())

    summary = {
        "partition_hash": digest,
        "source": cfg.corpus,
        "seen": outcome.seen,
        "A": len(outcome.a),
        "B": len(outcome.b),
        "overlaps": outcome.overlaps,
        "prefilter_drops": outcome.prefilter_drops,
        "warnings": stats.warnings,
    }
    _write(cfg.out / "split_report.json", (json.dumps(summary, indent=2, sort_keys=True) + "\n").encode())
    print(f"|A| = {len(outcome.a)}  |B| = {len(outcome.b)}  (from {outcome.seen} examples)")
    print(table)
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    schema, partition, digest = _load_partition(cfg)
    if cfg.manifests:
        loaded = {m.domain: m for m in (read_manifest(p, schema) for p in cfg.manifests)}
        if len(loaded) != 2:
            raise DataError("--manifests must name one manifest per domain")
        manifest_a, manifest_b = loaded["A"], loaded["B"]
    else:
        outcome = _split(cfg, schema, partition, digest)
        manifest_a, manifest_b = outcome.a, outcome.b
    for m in (manifest_a, manifest_b):
        _verified(m, schema, partition)

    spec = parse_oracle(cfg.oracle, schema, epsilon=cfg.epsilon, seed=cfg.seed)
    triplets = generate_triplets(
        spec, schema, partition, manifest_a, manifest_b,
        n_pairs=cfg.pairs, pairing=cfg.pairing, seed=cfg.seed, distribution_mode=cfg.distribution_mode,
    )
    target = cfg.triplets or cfg.out / "triplets.jsonl"
    if target.suffix == ".csv":
        target.parent.mkdir(parents=True, exist_ok=True)
        write_triplets_csv(target, triplets, schema)
    else:
        header = {
            "oracle": spec.label,
            "seed": cfg.seed,
            "pairs": cfg.pairs,
            "pairing": cfg.pairing.value,
            "distribution_mode": cfg.distribution_mode.value,
            "partition_hash": digest,
        }
        write_triplets(target, triplets, header)
    print(f"{len(triplets)} triplets from {spec.label} -> {target}")

    if cfg.exact:
        exact = expected_metrics_bruteforce(
            spec, schema, partition, manifest_a, manifest_b,
            cap=cfg.bruteforce_cap, distribution_mode=cfg.distribution_mode,
            name=cfg.name or spec.label, bias_threshold=cfg.bias_threshold, partition_hash=digest,
        )
        path = target.with_name(target.stem + ".expected.json")
        _write(path, (json.dumps(report_to_dict(exact), indent=2, sort_keys=True) + "\n").encode())
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    schema, partition, digest = _load_partition(cfg)
    triplets, header = read_triplets(cfg.triplets, schema)
    if header.get("partition_hash") and header["partition_hash"] != digest:
        log.warning("triplets were generated under partition %s, evaluating under %s",
                    header["partition_hash"], digest)
    diagnostics = check_triplets(triplets, schema, partition)
    for v in diagnostics.violations[:20]:
        log.warning("%s", v.message)

    name = cfg.name or header.get("oracle") or cfg.triplets.stem
    report = evaluate(
        triplets, schema, partition,
        name=name, bias_threshold=cfg.bias_threshold, partition_hash=digest,
        use_ground_truth=cfg.use_ground_truth,
    )
    doc = ReportDocument(
        [report], dataset=partition.dataset or schema.dataset, partition_hash=digest,
        precision=cfg.precision, gray_open=cfg.gray_open, gray_close=cfg.gray_close,
    )
    _write(cfg.out / "report.json", (json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n").encode())
    for fmt in cfg.formats:
        suffix = FORMAT_SUFFIX[fmt]
        _write(cfg.out / f"table.{suffix}", emit_report(doc, fmt))
        _write(cfg.out / f"per_attribute.{suffix}",
               emit_per_attribute_report(report, schema, partition, fmt, cfg.precision))
    if cfg.pose_attribute:
        pose = pose_report(triplets, schema, cfg.pose_attribute, name=name)
        fmt = "json" if cfg.formats == ["json"] else "markdown"
        _write(cfg.out / f"pose.{FORMAT_SUFFIX[fmt]}", emit_pose_report([pose], fmt))

    sys.stdout.write(emit_report(doc, "markdown").decode())
    if report.d is None:
        raise MetricUndefinedError("D is undefined: some direction has no usable conditioning set")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    rows = [r for p in cfg.reports for r in load_reports(p.read_text())]
    doc = ReportDocument(
        rows, dataset=cfg.dataset or "", precision=cfg.precision,
        gray_open=cfg.gray_open, gray_close=cfg.gray_close,
    )
    for fmt in cfg.formats:
        _write(cfg.out / f"report.{FORMAT_SUFFIX[fmt]}", emit_report(doc, fmt))
    sys.stdout.write(emit_report(doc, "markdown").decode())
    return 0


def cmd_selfcheck(cfg: RunConfig) -> int:
    run_selfcheck(CheckContext(pairs=cfg.pairs, seed=cfg.seed), cfg.category, cfg.case, cfg.output)
    return 0


COMMANDS = {
    "split": cmd_split,
    "simulate": cmd_simulate,
    "eval": cmd_eval,
    "report": cmd_report,
    "selfcheck": cmd_selfcheck,
}


def run(cfg: RunConfig) -> int:
    log.debug("running %s with %s", cfg.subcommand, cfg)
    return COMMANDS[cfg.subcommand](cfg)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config (default: ./dbench.toml if present)")
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    common.add_argument("--dataset", help="Shipped dataset config: 3dshapes, synaction, celeba_d")
    common.add_argument("--schema", help="Attribute schema TOML")
    common.add_argument("--partition", help="Attribute partition TOML")
    common.add_argument("--corpus", help="Corpus file, or builtin:3dshapes")
    common.add_argument("--corpus-format", choices=CORPUS_FORMATS)
    common.add_argument("--manifests", nargs=2, metavar=("A", "B"), help="Domain manifests from split")
    common.add_argument("--triplets", help="Triplet file (output of simulate, input of eval)")
    common.add_argument("--reports", nargs="+", help="report.json files to merge")
    common.add_argument("--out", help="Output directory (env DBENCH_OUT_DIR)")
    common.add_argument("--format", help="Comma-separated: markdown,csv,json")
    common.add_argument("--oracle", help="content-identity, guidance-identity, random-target, random-triplets, "
                                         "style-copier[:attrs|@family], constant-output:v1,...")
    common.add_argument("--pairs", type=int, help="Pairs per direction (cap for exhaustive pairing)")
    common.add_argument("--seed", type=int, help=f"Random seed (default {DEFAULT_SEED})")
    common.add_argument("--epsilon", type=float, help="Per-attribute output noise rate")
    common.add_argument("--bias-threshold", type=float, help="B above this marks a row low-confidence")
    common.add_argument("--pairing", choices=[p.value for p in Pairing])
    common.add_argument("--distribution-mode", choices=[m.value for m in DistributionMode])
    common.add_argument("--exact", action="store_true", help="Also write brute-force expected metrics")
    common.add_argument("--use-ground-truth", action="store_true", help="Score with y_a_gt/y_b_gt labels")
    common.add_argument("--name", help="Row name in the report")
    common.add_argument("--pose-attribute", help="Multi-channel attribute for the pose table")
    common.add_argument("--category", help="selfcheck: run only this category")
    common.add_argument("--case", help="selfcheck: run only this case")
    common.add_argument("--output", help="selfcheck: save results to JSON")

    parser = argparse.ArgumentParser(prog="dbench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main_cli(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    try:
        return run(resolve_config(args, load_config(args.config)))
    except BenchError as e:
        log.error("%s", e)
        sys.exit(e.exit_code)


if __name__ == "__main__":
    main_cli()
