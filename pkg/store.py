"""File ingestion and emission: corpora, domain manifests and triplet files.

Everything is line-oriented (CSV or JSONL) so large corpora stream.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterator

from errors import ConfigError, DataError, ParseError
from eval.scoring import TranslationTriplet
from schema import AttributeDecl, AttributeSchema, Direction, Domain, Kind, Value
from splitter import DomainManifest, LabeledExample, Provenance

log = logging.getLogger(__name__)

CORPUS_FORMATS = ("csv", "jsonl", "celeba-attr")


def _raw(value: Value) -> Any:
    return list(value) if isinstance(value, tuple) else value


def _parse_vector(schema: AttributeSchema, raw: list, path, line: int) -> tuple[Value, ...]:
    if not isinstance(raw, list) or len(raw) != len(schema):
        raise ParseError(path, line, f"expected a list of {len(schema)} values")
    try:
        values = tuple(decl.parse(v) for decl, v in zip(schema.attributes, raw))
    except DataError as e:
        raise ParseError(path, line, str(e)) from None
    problems = schema.check_vector(values)
    if problems:
        raise ParseError(path, line, "; ".join(problems))
    return values


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

def infer_schema(header: list[str], rows: list[list[str]], dataset: str = "") -> AttributeSchema:
    """Guess a schema from column names and a sample of raw string rows.

    Columns named `name.channel` become one multi-channel continuous attribute.
    Integer-valued columns are categorical with cardinality max+1; other numeric
    columns are continuous; anything else is categorical over its sorted labels.
    """
    groups: dict[str, list[int]] = {}
    for col, name in enumerate(header):
        groups.setdefault(name.split(".", 1)[0], []).append(col)

    attrs = []
    for index, (name, cols) in enumerate(groups.items()):
        if len(cols) > 1 or "." in header[cols[0]]:
            channels = tuple(header[c].split(".", 1)[1] for c in cols)
            attrs.append(AttributeDecl(name, Kind.CONTINUOUS, index, channels=channels))
            continue
        sample = [row[cols[0]] for row in rows]
        try:
            codes = [int(v) for v in sample]
            attrs.append(AttributeDecl(name, Kind.CATEGORICAL, index, cardinality=max(codes, default=0) + 1))
            continue
        except ValueError:
            pass
        try:
            for v in sample:
                float(v)
            attrs.append(AttributeDecl(name, Kind.CONTINUOUS, index))
        except ValueError:
            labels = tuple(sorted(set(sample)))
            attrs.append(AttributeDecl(name, Kind.CATEGORICAL, index, cardinality=len(labels), labels=labels))
    return AttributeSchema(tuple(attrs), dataset=dataset)


def _columns_for(schema: AttributeSchema, header: list[str], path) -> list[list[int]]:
    """Map every schema attribute to the header columns holding it."""
    where = {name: i for i, name in enumerate(header)}
    columns = []
    for decl in schema.attributes:
        names = [f"{decl.name}.{c}" for c in decl.channels] if decl.channels else [decl.name]
        missing = [n for n in names if n not in where]
        if missing:
            raise DataError(f"{path}: schema mismatch, missing columns {missing}")
        columns.append([where[n] for n in names])
    return columns


def _rows_to_examples(path, schema, header, rows: Iterator[tuple[int, str, list[str]]]):
    columns = _columns_for(schema, header, path)
    for line, example_id, row in rows:
        raw = [row[c[0]] if len(c) == 1 and not decl.channels else [row[i] for i in c]
               for decl, c in zip(schema.attributes, columns)]
        yield LabeledExample(example_id, _parse_vector(schema, raw, path, line))


def _iter_csv(path: Path, schema: AttributeSchema | None):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or "id" not in header:
            raise ParseError(path, 1, "CSV corpus needs a header row with an id column")
        id_col = header.index("id")
        attr_header = [h for i, h in enumerate(header) if i != id_col]

        def rows():
            for line, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ParseError(path, line, f"expected {len(header)} columns, got {len(row)}")
                yield line, row[id_col], [v for i, v in enumerate(row) if i != id_col]

        if schema is None:
            buffered = list(rows())
            schema = infer_schema(attr_header, [r for _, _, r in buffered])
            yield schema
            yield from _rows_to_examples(path, schema, attr_header, iter(buffered))
        else:
            yield schema
            yield from _rows_to_examples(path, schema, attr_header, rows())


def _iter_celeba(path: Path, schema: AttributeSchema | None):
    """Public list_attr_celeba.txt layout: count line, names line, `id ±1 ...` rows."""
    with open(path) as f:
        first = f.readline()
        try:
            int(first.strip())
        except ValueError:
            raise ParseError(path, 1, "expected the image count") from None
        names = f.readline().split()
        if not names:
            raise ParseError(path, 2, "expected attribute names")
        if schema is None:
            schema = AttributeSchema(tuple(
                AttributeDecl(n, Kind.CATEGORICAL, i, cardinality=2) for i, n in enumerate(names)
            ))

        def rows():
            for line, text in enumerate(f, start=3):
                parts = text.split()
                if not parts:
                    continue
                if len(parts) != len(names) + 1:
                    raise ParseError(path, line, f"expected {len(names) + 1} fields, got {len(parts)}")
                coded = []
                for name, token in zip(names, parts[1:]):
                    if token == "1":
                        coded.append("1")
                    elif token == "-1":
                        coded.append("0")
                    else:
                        raise ParseError(path, line, f"{name}: {token!r} is not +1 or -1")
                yield line, parts[0], coded

        yield schema
        yield from _rows_to_examples(path, schema, names, rows())


def _iter_jsonl(path: Path, schema: AttributeSchema | None):
    if schema is None:
        raise ConfigError("JSONL corpora need a schema (--schema)")
    yield schema
    with open(path) as f:
        for line, text in enumerate(f, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as e:
                raise ParseError(path, line, e.msg) from None
            if "header" in obj:
                continue
            values = obj.get("values")
            if isinstance(values, dict):
                try:
                    values = [values[name] for name in schema.names]
                except KeyError as e:
                    raise ParseError(path, line, f"missing attribute {e.args[0]}") from None
            if "id" not in obj:
                raise ParseError(path, line, "missing id")
            yield LabeledExample(str(obj["id"]), _parse_vector(schema, values, path, line))


def iter_corpus(path: str | Path, fmt: str = "csv", schema: AttributeSchema | None = None):
    """Yield the effective schema first, then every LabeledExample in file order."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"corpus not found: {path}")
    match fmt:
        case "csv":
            return _iter_csv(path, schema)
        case "jsonl":
            return _iter_jsonl(path, schema)
        case "celeba-attr":
            return _iter_celeba(path, schema)
    raise ConfigError(f"unknown corpus format {fmt!r}; expected one of {', '.join(CORPUS_FORMATS)}")


def load_corpus(
    path: str | Path, fmt: str = "csv", schema: AttributeSchema | None = None
) -> tuple[AttributeSchema, list[LabeledExample]]:
    stream = iter_corpus(path, fmt, schema)
    effective = next(stream)
    examples = list(stream)
    log.info("loaded %d examples from %s", len(examples), path)
    return effective, examples


def write_corpus(path: str | Path, examples, schema: AttributeSchema):
    """Write examples as JSONL with values keyed by attribute name."""
    with open(path, "w") as f:
        for e in examples:
            values = {decl.name: _raw(v) for decl, v in zip(schema.attributes, e.values)}
            f.write(json.dumps({"id": e.id, "values": values}) + "\n")


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

def write_manifest(path: str | Path, manifest: DomainManifest):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "domain": manifest.domain.value,
        "partition_hash": manifest.partition_hash,
        "count": len(manifest.examples),
    }
    if manifest.provenance:
        header["source"] = manifest.provenance.source
        header["filtered_at"] = manifest.provenance.filtered_at
    with open(path, "w") as f:
        f.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for e in manifest.examples:
            f.write(json.dumps({"id": e.id, "values": [_raw(v) for v in e.values]}) + "\n")


def write_id_list(path: str | Path, manifest: DomainManifest):
    Path(path).write_text("".join(f"{e.id}\n" for e in manifest.examples))


def read_manifest(path: str | Path, schema: AttributeSchema) -> DomainManifest:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    manifest = None
    with open(path) as f:
        for line, text in enumerate(f, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as e:
                raise ParseError(path, line, e.msg) from None
            if "header" in obj:
                h = obj["header"]
                provenance = None
                if "source" in h:
                    provenance = Provenance(h["source"], h.get("filtered_at", ""), h.get("partition_hash", ""))
                manifest = DomainManifest(Domain(h["domain"]), h.get("partition_hash", ""), provenance=provenance)
                continue
            if manifest is None:
                raise ParseError(path, line, "manifest header line missing")
            manifest.examples.append(LabeledExample(str(obj["id"]), _parse_vector(schema, obj["values"], path, line)))
    if manifest is None:
        raise DataError(f"{path}: empty manifest file")
    return manifest


# ---------------------------------------------------------------------------
# Triplets
# ---------------------------------------------------------------------------

def _triplet_to_dict(t) -> dict:
    d = {
        "direction": t.direction.value,
        "y_a": [_raw(v) for v in t.y_a],
        "y_b": [_raw(v) for v in t.y_b],
        "y_hat": [_raw(v) for v in t.y_hat],
    }
    if t.y_a_gt is not None:
        d["y_a_gt"] = [_raw(v) for v in t.y_a_gt]
    if t.y_b_gt is not None:
        d["y_b_gt"] = [_raw(v) for v in t.y_b_gt]
    if t.input_id is not None:
        d["input_id"] = t.input_id
    if t.guidance_id is not None:
        d["guidance_id"] = t.guidance_id
    return d


def write_triplets(path: str | Path, triplets, header: dict | None = None):
    """JSONL triplet file; an optional first line `{"header": {...}}` records how it was made."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        if header is not None:
            f.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for t in triplets:
            f.write(json.dumps(_triplet_to_dict(t)) + "\n")


def _read_triplets_jsonl(path: Path, schema: AttributeSchema):
    header: dict = {}
    triplets = []
    with open(path) as f:
        for line, text in enumerate(f, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as e:
                raise ParseError(path, line, e.msg) from None
            if "header" in obj:
                header = obj["header"]
                continue
            try:
                direction = Direction(obj["direction"])
                vectors = {k: _parse_vector(schema, obj[k], path, line) for k in ("y_a", "y_b", "y_hat")}
            except (KeyError, ValueError) as e:
                raise ParseError(path, line, f"bad triplet field: {e}") from None
            triplets.append(TranslationTriplet(
                direction=direction,
                y_a_gt=_parse_vector(schema, obj["y_a_gt"], path, line) if "y_a_gt" in obj else None,
                y_b_gt=_parse_vector(schema, obj["y_b_gt"], path, line) if "y_b_gt" in obj else None,
                input_id=obj.get("input_id"),
                guidance_id=obj.get("guidance_id"),
                **vectors,
            ))
    return triplets, header


_CSV_PREFIXES = {"y_a": "a_", "y_b": "b_", "y_hat": "hat_", "y_a_gt": "agt_", "y_b_gt": "bgt_"}


def _csv_names(schema: AttributeSchema, prefix: str) -> list[list[str]]:
    return [
        [f"{prefix}{d.name}.{c}" for c in d.channels] if d.channels else [f"{prefix}{d.name}"]
        for d in schema.attributes
    ]


def write_triplets_csv(path: str | Path, triplets, schema: AttributeSchema):
    present = [field_ for field_ in _CSV_PREFIXES
               if field_ in ("y_a", "y_b", "y_hat") or any(getattr(t, field_) is not None for t in triplets)]
    header = ["direction", "input_id", "guidance_id"]
    for field_ in present:
        header += [n for names in _csv_names(schema, _CSV_PREFIXES[field_]) for n in names]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for t in triplets:
            row = [t.direction.value, t.input_id or "", t.guidance_id or ""]
            for field_ in present:
                # text cells resolve against labels before integer codes
                for decl, v in zip(schema.attributes, getattr(t, field_)):
                    cell = decl.render(v)
                    row += cell if isinstance(cell, list) else [cell]
            writer.writerow(row)


def _read_triplets_csv(path: Path, schema: AttributeSchema):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None) or []
        where = {name: i for i, name in enumerate(header)}
        if "direction" not in where:
            raise ParseError(path, 1, "missing direction column")
        layout = {}
        for field_, prefix in _CSV_PREFIXES.items():
            names = _csv_names(schema, prefix)
            flat = [n for group in names for n in group]
            if all(n in where for n in flat):
                layout[field_] = [[where[n] for n in group] for group in names]
            elif field_ in ("y_a", "y_b", "y_hat"):
                missing = [n for n in flat if n not in where]
                raise DataError(f"{path}: schema mismatch, missing columns {missing[:5]}")

        triplets = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, line, f"expected {len(header)} fields, got {len(row)}")
            vectors = {}
            for field_, groups in layout.items():
                raw = [
                    [row[i] for i in cols] if decl.channels else row[cols[0]]
                    for decl, cols in zip(schema.attributes, groups)
                ]
                vectors[field_] = _parse_vector(schema, raw, path, line)
            try:
                direction = Direction(row[where["direction"]])
            except ValueError:
                raise ParseError(path, line, f"bad direction {row[where['direction']]!r}") from None
            triplets.append(TranslationTriplet(
                direction=direction,
                input_id=row[where["input_id"]] or None if "input_id" in where else None,
                guidance_id=row[where["guidance_id"]] or None if "guidance_id" in where else None,
                **vectors,
            ))
    return triplets, {}


def read_triplets(path: str | Path, schema: AttributeSchema, fmt: str | None = None):
    """Return (triplets, header). Format is taken from the suffix unless given."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"triplet file not found: {path}")
    fmt = fmt or ("csv" if path.suffix == ".csv" else "jsonl")
    triplets, header = (_read_triplets_csv if fmt == "csv" else _read_triplets_jsonl)(path, schema)
    log.info("loaded %d triplets from %s", len(triplets), path)
    return triplets, header
