import json

import pytest

from dbench import build_parser, load_config, main_cli, resolve_config
from errors import ConfigError
from eval.fixtures import synthetic_manifests
from eval.scoring import TranslationTriplet
from schema import Direction, dump_partition, dump_schema, partition_hash
from store import write_manifest, write_triplets


@pytest.fixture
def toy_files(tmp_path, toy):
    schema, partition = toy
    (tmp_path / "toy.schema").write_text(dump_schema(schema))
    (tmp_path / "toy.partition").write_text(dump_partition(partition, schema))
    a, b = synthetic_manifests(schema, partition, 12, seed=3)
    write_manifest(tmp_path / "domain_A.jsonl", a)
    write_manifest(tmp_path / "domain_B.jsonl", b)
    return tmp_path


def _toy_args(root):
    return ["--schema", str(root / "toy.schema"), "--partition", str(root / "toy.partition")]


def _exit_code(argv):
    with pytest.raises(SystemExit) as info:
        main_cli(argv)
    return info.value.code


def test_split_builtin_shapes(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1623369600")
    out = tmp_path / "shapes"
    assert main_cli(["split", "--dataset", "3dshapes", "--corpus", "builtin:3dshapes", "--out", str(out)]) == 0
    assert "|A| = 4000  |B| = 4800" in capsys.readouterr().out

    summary = json.loads((out / "split_report.json").read_text())
    assert (summary["A"], summary["B"], summary["seen"]) == (4000, 4800, 480_000)
    assert len(summary["overlaps"]) == 40
    assert summary["warnings"] == []
    header = json.loads((out / "domain_B.jsonl").read_text().splitlines()[0])["header"]
    assert header["filtered_at"] == "2021-06-11T00:00:00+00:00"
    assert header["count"] == 4800
    assert len((out / "domain_A.ids").read_text().splitlines()) == 4000


def test_simulate_then_eval_reproduces_guidance_pole(toy_files):
    triplets = toy_files / "guidance.jsonl"
    out = toy_files / "eval"
    assert main_cli(["simulate", *_toy_args(toy_files),
                     "--manifests", str(toy_files / "domain_A.jsonl"), str(toy_files / "domain_B.jsonl"),
                     "--oracle", "guidance-identity", "--pairs", "400", "--triplets", str(triplets), "--exact"]) == 0
    assert (toy_files / "guidance.expected.json").exists()

    assert main_cli(["eval", *_toy_args(toy_files), "--triplets", str(triplets), "--out", str(out),
                     "--format", "markdown,json"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["name"] == "guidance-identity"
    assert (report["Q_tr"], report["D"], report["D_c"], report["B"]) == (100.0, 50.0, 0.0, 0.0)
    assert (report["A2B"]["D_s"], report["B2A"]["D_s"]) == (100.0, 100.0)
    assert (out / "table.md").exists() and (out / "per_attribute.json").exists()


def test_eval_exits_4_when_d_undefined(toy_files, toy):
    schema, partition = toy
    path = toy_files / "same_content.jsonl"
    # content never differs between input and guidance: D_c has no conditioning set
    write_triplets(path, [
        TranslationTriplet(Direction.A2B, (0, 4, 1, 2), (1, 4, 8, 3), (1, 4, 8, 3)),
        TranslationTriplet(Direction.B2A, (1, 4, 8, 3), (0, 4, 1, 2), (0, 4, 1, 2)),
    ], {"partition_hash": partition_hash(schema, partition)})
    code = _exit_code(["eval", *_toy_args(toy_files), "--triplets", str(path), "--out", str(toy_files / "e")])
    assert code == 4
    assert (toy_files / "e" / "report.json").exists()


def test_report_merges_rows(toy_files, capsys):
    for oracle in ("content-identity", "style-copier"):
        triplets = toy_files / f"{oracle}.jsonl"
        main_cli(["simulate", *_toy_args(toy_files),
                  "--manifests", str(toy_files / "domain_A.jsonl"), str(toy_files / "domain_B.jsonl"),
                  "--oracle", oracle, "--pairs", "200", "--triplets", str(triplets)])
        main_cli(["eval", *_toy_args(toy_files), "--triplets", str(triplets), "--out", str(toy_files / oracle)])
    capsys.readouterr()

    merged = toy_files / "merged"
    assert main_cli(["report", "--reports", str(toy_files / "content-identity" / "report.json"),
                     str(toy_files / "style-copier" / "report.json"), "--out", str(merged)]) == 0
    table = (merged / "report.md").read_text()
    assert "| content-identity | 0.0 | 50.0 | 0.0 | 0.0 | 100.0 | 0.0 |" in table
    assert "| style-copier | 100.0 | 100.0 | 100.0 | 100.0 | 100.0 | 0.0 |" in table


def test_missing_inputs_exit_2(toy_files):
    assert _exit_code(["eval", *_toy_args(toy_files)]) == 2
    assert _exit_code(["split", "--dataset", "3dshapes"]) == 2
    assert _exit_code(["eval", "--dataset", "nowhere", "--triplets", str(toy_files / "toy.schema")]) == 2
    assert _exit_code(["simulate", *_toy_args(toy_files), "--corpus", "builtin:3dshapes", "--epsilon", "1.5"]) == 2


def test_bad_manifest_exit_3(toy_files):
    broken = toy_files / "broken.jsonl"
    broken.write_text('{"header": {"domain": "A"}}\n{"id": "x", "values": [0, 1, 2]}\n')
    code = _exit_code(["simulate", *_toy_args(toy_files), "--manifests", str(broken),
                       str(toy_files / "domain_B.jsonl")])
    assert code == 3


def test_selfcheck_single_case():
    assert main_cli(["selfcheck", "--case", "pole_content", "--pairs", "2000"]) == 0


def test_selfcheck_unknown_case():
    assert _exit_code(["selfcheck", "--case", "no_such_case"]) == 2


# ---------------------------------------------------------------------------
# Configuration precedence
# ---------------------------------------------------------------------------

def _resolve(argv, config):
    return resolve_config(build_parser().parse_args(argv), config)


def test_defaults_then_file_then_flags(toy_files):
    config = {"run": {"pairs": 123, "seed": 9}, "oracle": {"kind": "style-copier", "copied": ["style_b"]}}
    cfg = _resolve(["simulate", *_toy_args(toy_files), "--corpus", "x.csv", "--seed", "4"], config)
    assert cfg.pairs == 123
    assert cfg.seed == 4
    assert cfg.oracle == "style-copier:style_b"
    assert cfg.formats == ["markdown"]


def test_out_dir_from_environment(toy_files, monkeypatch):
    monkeypatch.setenv("DBENCH_OUT_DIR", str(toy_files / "env-out"))
    cfg = _resolve(["selfcheck"], {})
    assert cfg.out == toy_files / "env-out"
    assert cfg.pairs == 20_000


def test_config_file_lookup(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert load_config() == {}
    (tmp_path / "dbench.toml").write_text("[run]\npairs = 77\n")
    assert load_config() == {"run": {"pairs": 77}}
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.toml"))
    (tmp_path / "broken.toml").write_text("[run\n")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "broken.toml"))


def test_unknown_report_format(toy_files):
    with pytest.raises(ConfigError, match="report format"):
        _resolve(["eval", *_toy_args(toy_files), "--triplets", str(toy_files / "toy.schema"), "--format", "pdf"], {})
