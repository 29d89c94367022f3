import io
import json
import logging
import re
from dataclasses import fields
from datetime import date
from pathlib import Path

import pandas as pd

from errors import InputSyntaxError, SchemaError
from findings import Finding
from threat_enums import (ElementKind, ProgramCategory, ProgramVariant, Severity,
                          StrideCategory, ThreatStatus, Validity, parse_enum)
from threat_model import (DataFlow, Element, SecurityControl, Threat, ThreatActor,
                          ThreatModel, TrustBoundary)

logger = logging.getLogger(__name__)

# --- Threat model schema ---
# Each entity kind maps field name -> (expected type, required). Lists are
# JSON arrays of strings. Serialization writes every field in this order.
MODEL_KEYS = ("model_id", "name", "version", "elements", "flows", "boundaries", "actors", "controls", "threats")
MODEL_SCHEMA = {
    "elements": {"id": (str, True), "name": (str, True), "kind": (str, True), "description": (str, False)},
    "flows": {"id": (str, True), "source": (str, True), "target": (str, True),
              "label": (str, False), "crosses": (list, False)},
    "boundaries": {"id": (str, True), "name": (str, True), "members": (list, True)},
    "actors": {"id": (str, True), "name": (str, True), "capabilities": (list, False), "targets": (list, False)},
    "controls": {"id": (str, True), "name": (str, True), "protects": (list, True), "mitigates": (list, True)},
    "threats": {"threat_id": (str, True), "subject": (str, True), "category": (str, True),
                "description": (str, False), "status": (str, True)},
}

# --- Findings schema ---
FINDING_FIELDS = tuple(f.name for f in fields(Finding))
FINDING_REQUIRED = ("finding_id", "submitted", "severity", "title", "program_variant", "validity")
FINDING_LIST_FIELDS = ("swc_tags", "scsvs_tags", "linked_subjects")
LIST_SEPARATOR = ";"


def _decode(raw: bytes, encoding: str = "utf-8") -> str:
    try:
        return raw.decode(encoding)
    except UnicodeDecodeError as e:
        raise InputSyntaxError(f"input is not valid UTF-8: {e.reason}", offset=e.start) from e


def _check_keys(record: dict, allowed, required, path: str, line: int | None = None):
    """Rejects unknown and missing fields, naming the first offender."""
    if not isinstance(record, dict):
        raise SchemaError("expected a JSON object", path=path, line=line)
    for key in record:
        if key not in allowed:
            raise SchemaError("unknown field", path=f"{path}.{key}" if path else key, line=line)
    for key in required:
        if key not in record:
            raise SchemaError("missing required field", path=f"{path}.{key}" if path else key, line=line)


def _string_list(value, path: str, line: int | None = None) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SchemaError("expected a list of strings", path=path, line=line)
    return tuple(value)


def _enum(enum_cls, value, path: str, line: int | None = None):
    try:
        return parse_enum(enum_cls, value)
    except ValueError as e:
        raise SchemaError(str(e), path=path, line=line) from e


# ============================================================
# Threat model
# ============================================================

def _entity_records(doc: dict, kind: str) -> list[dict]:
    """Checks one entity list against MODEL_SCHEMA and fills optional defaults."""
    records = doc[kind]
    if not isinstance(records, list):
        raise SchemaError("expected a list", path=kind)
    schema = MODEL_SCHEMA[kind]
    required = [name for name, (_, is_required) in schema.items() if is_required]
    checked = []
    for index, record in enumerate(records):
        path = f"{kind}[{index}]"
        _check_keys(record, schema, required, path)
        values = {}
        for name, (expected, _) in schema.items():
            value = record.get(name, [] if expected is list else "")
            if expected is list:
                value = _string_list(value, f"{path}.{name}")
            elif not isinstance(value, str):
                raise SchemaError("expected a string", path=f"{path}.{name}")
            values[name] = value
        checked.append(values)
    return checked


def model_from_dict(doc: dict) -> ThreatModel:
    """
    Builds a ThreatModel from its decoded JSON form.

    Structural rules (dangling references, ID patterns, orphans) are left
    to `validate_model`; this only enforces the schema.

    Raises:
        SchemaError: With the path of the first unknown, missing or mistyped field.
    """
    _check_keys(doc, MODEL_KEYS, MODEL_KEYS, "")
    for key in ("model_id", "name", "version"):
        if not isinstance(doc[key], str):
            raise SchemaError("expected a string", path=key)

    elements = tuple(
        Element(r["id"], r["name"], _enum(ElementKind, r["kind"], f"elements[{i}].kind"), r["description"])
        for i, r in enumerate(_entity_records(doc, "elements"))
    )
    flows = tuple(
        DataFlow(r["id"], r["source"], r["target"], r["label"], r["crosses"])
        for r in _entity_records(doc, "flows")
    )
    boundaries = tuple(TrustBoundary(r["id"], r["name"], r["members"]) for r in _entity_records(doc, "boundaries"))
    actors = tuple(
        ThreatActor(r["id"], r["name"], r["capabilities"], r["targets"])
        for r in _entity_records(doc, "actors")
    )
    controls = tuple(
        SecurityControl(r["id"], r["name"], r["protects"], frozenset(
            _enum(StrideCategory, c, f"controls[{i}].mitigates") for c in r["mitigates"]
        ))
        for i, r in enumerate(_entity_records(doc, "controls"))
    )
    threats = tuple(
        Threat(r["threat_id"], r["subject"],
               _enum(StrideCategory, r["category"], f"threats[{i}].category"),
               r["description"],
               _enum(ThreatStatus, r["status"], f"threats[{i}].status"))
        for i, r in enumerate(_entity_records(doc, "threats"))
    )
    return ThreatModel(doc["model_id"], doc["name"], doc["version"],
                       elements, flows, boundaries, actors, controls, threats)


def threat_to_dict(threat: Threat) -> dict:
    return {"threat_id": threat.threat_id, "subject": threat.subject, "category": threat.category.value,
            "description": threat.description, "status": threat.status.value}


def model_to_dict(model: ThreatModel) -> dict:
    """Inverse of `model_from_dict`; mitigated categories are written in STRIDE order."""
    return {
        "model_id": model.model_id,
        "name": model.name,
        "version": model.version,
        "elements": [{"id": e.id, "name": e.name, "kind": e.kind.value, "description": e.description}
                     for e in model.elements],
        "flows": [{"id": f.id, "source": f.source, "target": f.target, "label": f.label,
                   "crosses": list(f.crosses)} for f in model.flows],
        "boundaries": [{"id": b.id, "name": b.name, "members": list(b.members)} for b in model.boundaries],
        "actors": [{"id": a.id, "name": a.name, "capabilities": list(a.capabilities), "targets": list(a.targets)}
                   for a in model.actors],
        "controls": [{"id": c.id, "name": c.name, "protects": list(c.protects),
                      "mitigates": [m.value for m in sorted(c.mitigates, key=lambda m: m.order)]}
                     for c in model.controls],
        "threats": [threat_to_dict(t) for t in model.threats],
    }


def parse_model(raw: bytes, fmt: str = "json") -> ThreatModel:
    """
    Parses a threat model file.

    Args:
        raw: The file contents.
        fmt: Only "json" is supported.

    Returns:
        The model, with entity order preserved.

    Raises:
        InputSyntaxError: Malformed UTF-8 or JSON, with the byte offset.
        SchemaError: Unknown or missing fields, with the field path.
    """
    if fmt != "json":
        raise SchemaError(f"unsupported model format {fmt!r}")
    text = _decode(raw)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputSyntaxError(f"malformed JSON: {e.msg}", offset=len(text[:e.pos].encode("utf-8"))) from e
    return model_from_dict(doc)


def serialize_model(model: ThreatModel) -> bytes:
    return (json.dumps(model_to_dict(model), indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def load_model(file_path: str | Path) -> ThreatModel:
    """Reads and parses a threat model file from disk."""
    logger.info("Loading threat model from: %s", file_path)
    model = parse_model(Path(file_path).read_bytes())
    logger.info("Model %s: %d element(s), %d flow(s), %d threat(s)",
                model.model_id, len(model.elements), len(model.flows), len(model.threats))
    return model


def save_model(model: ThreatModel, file_path: str | Path):
    Path(file_path).write_bytes(serialize_model(model))


# ============================================================
# Findings
# ============================================================

def finding_from_record(record: dict, line: int) -> Finding:
    """
    Builds a Finding from one decoded record.

    List fields may be JSON arrays or `;`-separated strings (the CSV form).

    Raises:
        SchemaError: With the record's line number and the offending field.
    """
    _check_keys(record, FINDING_FIELDS, FINDING_REQUIRED, "", line=line)
    values = {}
    for name in ("finding_id", "title", "team", "reporter"):
        value = record.get(name, "")
        if not isinstance(value, str):
            raise SchemaError("expected a string", path=name, line=line)
        values[name] = value

    raw_date = record["submitted"]
    try:
        values["submitted"] = date.fromisoformat(str(raw_date).strip())
    except ValueError as e:
        raise SchemaError(f"date {raw_date!r} is not YYYY-MM-DD", path="submitted", line=line) from e

    values["severity"] = _enum(Severity, record["severity"], "severity", line)
    values["program_variant"] = _enum(ProgramVariant, record["program_variant"], "program_variant", line)
    values["validity"] = _enum(Validity, record["validity"], "validity", line)
    category = record.get("program_category")
    values["program_category"] = _enum(ProgramCategory, category, "program_category", line) if category else None

    for name in FINDING_LIST_FIELDS:
        value = record.get(name, [])
        if isinstance(value, str):
            value = [part.strip() for part in value.split(LIST_SEPARATOR) if part.strip()]
        elif not isinstance(value, list):
            # Parquet list columns arrive as numpy arrays.
            value = list(value) if hasattr(value, "__iter__") else value
        values[name] = _string_list(value, name, line)

    if not values["finding_id"].strip():
        raise SchemaError("finding_id must not be empty", path="finding_id", line=line)
    return Finding(**values)


def finding_to_record(finding: Finding) -> dict:
    record = {
        "finding_id": finding.finding_id,
        "submitted": finding.submitted.isoformat(),
        "severity": finding.severity.value,
        "title": finding.title,
        "program_variant": finding.program_variant.value,
        "validity": finding.validity.value,
        "swc_tags": list(finding.swc_tags),
        "scsvs_tags": list(finding.scsvs_tags),
        "linked_subjects": list(finding.linked_subjects),
        "team": finding.team,
        "reporter": finding.reporter,
    }
    if finding.program_category is not None:
        record["program_category"] = finding.program_category.value
    return record


def _parse_jsonl(text: str) -> list[Finding]:
    findings = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise InputSyntaxError(f"malformed JSON: {e.msg}", line=line_number) from e
        findings.append(finding_from_record(record, line_number))
    return findings


def _frame_to_findings(df: pd.DataFrame, first_line: int) -> list[Finding]:
    """Converts a findings table to records; row i is reported as line first_line + i."""
    for column in df.columns:
        if column not in FINDING_FIELDS:
            raise SchemaError("unknown column", path=str(column), line=1)
    findings = []
    for position, row in enumerate(df.to_dict(orient="records")):
        # Empty cells in optional columns mean "not given".
        record = {k: v for k, v in row.items() if not (k not in FINDING_REQUIRED and _is_blank(v))}
        findings.append(finding_from_record(record, first_line + position))
    return findings


def _is_blank(value) -> bool:
    if value is None:
        return True
    if isinstance(value, str):
        return value == ""
    try:
        return bool(pd.isna(value))
    except (TypeError, ValueError):
        return False


def _parse_csv(text: str) -> list[Finding]:
    if not text.strip():
        return []
    try:
        df = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return []
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise InputSyntaxError(f"malformed CSV: {e}", line=int(match.group(1)) if match else None) from e
    # Header is line 1; data rows start at line 2.
    return _frame_to_findings(df, first_line=2)


def _parse_parquet(raw: bytes) -> list[Finding]:
    if not raw:
        return []
    try:
        df = pd.read_parquet(io.BytesIO(raw))
    except Exception as e:
        raise InputSyntaxError(f"unreadable Parquet data: {e}") from e
    if "submitted" in df.columns:
        df["submitted"] = df["submitted"].astype(str).str.slice(0, 10)
    df.reset_index(drop=True, inplace=True)
    return _frame_to_findings(df, first_line=1)


def parse_findings(raw: bytes, fmt: str) -> list[Finding]:
    """
    Parses a findings file, one Finding per record, in record order.

    Invalid and Duplicate submissions are kept; they carry triage
    statistics and are filtered later by `link_findings`.

    Args:
        raw: The file contents.
        fmt: "jsonl", "csv" or "parquet".

    Raises:
        InputSyntaxError: Malformed records, with the line number.
        SchemaError: Unknown/missing fields or bad enum values, with line and field.
    """
    fmt = fmt.lower()
    if fmt == "parquet":
        findings = _parse_parquet(raw)
    elif fmt == "jsonl":
        findings = _parse_jsonl(_decode(raw))
    elif fmt == "csv":
        findings = _parse_csv(_decode(raw, "utf-8-sig"))
    else:
        raise SchemaError(f"unsupported findings format {fmt!r}")
    logger.info("Parsed %d finding record(s) from %s input", len(findings), fmt)
    return findings


def serialize_findings(findings: list[Finding], fmt: str = "jsonl") -> bytes:
    """Writes findings as JSONL (one object per line) or CSV (`;`-joined list cells)."""
    records = [finding_to_record(f) for f in findings]
    if fmt == "jsonl":
        return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records).encode("utf-8")
    if fmt == "csv":
        columns = [name for name in FINDING_FIELDS
                   if name != "program_category" or any("program_category" in r for r in records)]
        df = pd.DataFrame(records, columns=columns)
        for name in FINDING_LIST_FIELDS:
            df[name] = df[name].map(LIST_SEPARATOR.join)
        return df.to_csv(index=False).encode("utf-8")
    raise SchemaError(f"unsupported findings format {fmt!r}")


def findings_format_for(file_path: str | Path) -> str:
    suffix = Path(file_path).suffix.lower()
    return {".csv": "csv", ".parquet": "parquet"}.get(suffix, "jsonl")


def load_findings(file_path: str | Path) -> list[Finding]:
    """Reads a findings file, inferring the format from its suffix (.jsonl/.csv/.parquet)."""
    logger.info("Loading findings from: %s", file_path)
    return parse_findings(Path(file_path).read_bytes(), findings_format_for(file_path))
