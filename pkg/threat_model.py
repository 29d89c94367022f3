"""
Threat model data structure: the DFD as data, its validation rules, and
STRIDE-per-element threat enumeration.

All types are frozen dataclasses holding tuples, so a model can be shared
between threads and compared by value.
"""
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

from errors import InvalidModel, InvalidTransition, SchemaError
from threat_enums import DiagnosticLevel, ElementKind, StrideCategory, ThreatStatus

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent / "data"
BUNDLED_APPLICABILITY = DATA_DIR / "stride_applicability.json"

# Zero-padded two-digit minimum: A01, not A1.
ID_PATTERNS = {
    "element": re.compile(r"A\d{2,}"),
    "flow": re.compile(r"F\d{2,}"),
    "boundary": re.compile(r"B\d{2,}"),
    "actor": re.compile(r"TA\d{2,}"),
    "control": re.compile(r"C\d{2,}"),
    "threat": re.compile(r"T\d{2,}"),
}

# Applicability key used for data flows in the applicability table.
FLOW_KIND = "DataFlow"


@dataclass(frozen=True)
class Element:
    id: str
    name: str
    kind: ElementKind
    description: str = ""


@dataclass(frozen=True)
class DataFlow:
    id: str
    source: str
    target: str
    label: str = ""
    crosses: tuple[str, ...] = ()


@dataclass(frozen=True)
class TrustBoundary:
    id: str
    name: str
    members: tuple[str, ...] = ()


@dataclass(frozen=True)
class ThreatActor:
    id: str
    name: str
    capabilities: tuple[str, ...] = ()
    targets: tuple[str, ...] = ()


@dataclass(frozen=True)
class SecurityControl:
    id: str
    name: str
    protects: tuple[str, ...] = ()
    mitigates: frozenset[StrideCategory] = frozenset()


@dataclass(frozen=True)
class Threat:
    threat_id: str
    subject: str
    category: StrideCategory
    description: str = ""
    status: ThreatStatus = ThreatStatus.PREDICTED

    def transition(self, new_status: ThreatStatus) -> "Threat":
        """
        Returns a copy of this threat in `new_status`.

        Raises:
            InvalidTransition: Unless moving from Predicted to Confirmed or Retired.
        """
        if self.status is not ThreatStatus.PREDICTED or new_status is ThreatStatus.PREDICTED:
            raise InvalidTransition(
                f"{self.threat_id}: cannot move from {self.status.value} to {new_status.value}"
            )
        return replace(self, status=new_status)

    @property
    def pair(self) -> tuple[str, StrideCategory]:
        return (self.subject, self.category)


@dataclass(frozen=True)
class ThreatModel:
    """
    A complete threat model.

    The entity lists keep the order they were declared in; every operation
    that needs a canonical order sorts explicitly.
    """
    model_id: str
    name: str
    version: str
    elements: tuple[Element, ...] = ()
    flows: tuple[DataFlow, ...] = ()
    boundaries: tuple[TrustBoundary, ...] = ()
    actors: tuple[ThreatActor, ...] = ()
    controls: tuple[SecurityControl, ...] = ()
    threats: tuple[Threat, ...] = ()

    @property
    def element_ids(self) -> set[str]:
        return {e.id for e in self.elements}

    @property
    def flow_ids(self) -> set[str]:
        return {f.id for f in self.flows}

    @property
    def subject_ids(self) -> set[str]:
        """IDs a threat, control, actor or finding may point at."""
        return self.element_ids | self.flow_ids

    def with_threats(self, threats) -> "ThreatModel":
        return replace(self, threats=tuple(threats))


@dataclass(frozen=True)
class Diagnostic:
    """One validation or linking problem. Diagnostics are data, never raised."""
    level: DiagnosticLevel
    rule: str
    subject_id: str
    message: str = ""

    @property
    def is_error(self) -> bool:
        return self.level is DiagnosticLevel.ERROR

    def format_line(self) -> str:
        """Renders the `LEVEL rule-code id message` line used by the CLI."""
        return f"{self.level.value.upper()} {self.rule} {self.subject_id} {self.message}".rstrip()


def _error(rule: str, subject_id: str, message: str) -> Diagnostic:
    return Diagnostic(DiagnosticLevel.ERROR, rule, subject_id, message)


def validate_model(model: ThreatModel) -> list[Diagnostic]:
    """
    Checks every structural rule of a threat model.

    Unconnected elements are reported as warnings, not errors, so partial
    models (which may be hiding overlooked assets) still load.

    Args:
        model: The model to check.

    Returns:
        Diagnostics in check order; empty iff the model is well formed.
    """
    diagnostics: list[Diagnostic] = []

    # --- 1. IDs: pattern and uniqueness within each kind ---
    kinds = [
        ("element", [e.id for e in model.elements]),
        ("flow", [f.id for f in model.flows]),
        ("boundary", [b.id for b in model.boundaries]),
        ("actor", [a.id for a in model.actors]),
        ("control", [c.id for c in model.controls]),
        ("threat", [t.threat_id for t in model.threats]),
    ]
    for kind, ids in kinds:
        pattern = ID_PATTERNS[kind]
        for entity_id in ids:
            if not pattern.fullmatch(entity_id):
                diagnostics.append(_error("bad-id", entity_id, f"{kind} id must match {pattern.pattern}"))
        for entity_id, count in Counter(ids).items():
            if count > 1:
                diagnostics.append(_error("dup-id", entity_id, f"{kind} id used {count} times"))

    # --- 2. Names ---
    named = [*model.elements, *model.boundaries, *model.actors, *model.controls]
    for entity in named:
        if not entity.name.strip():
            diagnostics.append(_error("empty-name", entity.id, "name must not be empty"))

    # --- 3. References ---
    element_ids = model.element_ids
    subject_ids = model.subject_ids
    boundary_ids = {b.id for b in model.boundaries}

    def dangling(owner: str, ref: str, what: str):
        diagnostics.append(_error("dangling-ref", owner, f"{what} {ref!r} does not exist"))

    for flow in model.flows:
        for end, ref in (("source", flow.source), ("target", flow.target)):
            if ref not in element_ids:
                dangling(flow.id, ref, f"{end} element")
        for ref in flow.crosses:
            if ref not in boundary_ids:
                dangling(flow.id, ref, "crossed boundary")

    for boundary in model.boundaries:
        if not boundary.members:
            diagnostics.append(_error("empty-boundary", boundary.id, "boundary has no members"))
        for ref, count in Counter(boundary.members).items():
            if count > 1:
                diagnostics.append(_error("dup-member", boundary.id, f"element {ref!r} listed {count} times"))
        for ref in dict.fromkeys(boundary.members):
            if ref not in element_ids:
                dangling(boundary.id, ref, "member element")

    for control in model.controls:
        if not control.protects:
            diagnostics.append(_error("empty-protects", control.id, "control protects nothing"))
        if not control.mitigates:
            diagnostics.append(_error("empty-mitigates", control.id, "control mitigates no category"))
        for ref in control.protects:
            if ref not in subject_ids:
                dangling(control.id, ref, "protected subject")

    for actor in model.actors:
        for ref in actor.targets:
            if ref not in subject_ids:
                dangling(actor.id, ref, "targeted subject")

    for threat in model.threats:
        if threat.subject not in subject_ids:
            dangling(threat.threat_id, threat.subject, "threat subject")

    # --- 4. Reachability (warnings only) ---
    connected = {f.source for f in model.flows} | {f.target for f in model.flows}
    for element in model.elements:
        if element.id not in connected:
            diagnostics.append(Diagnostic(
                DiagnosticLevel.WARNING, "orphan-element", element.id, "element has no incident data flow"
            ))

    logger.debug("Validated model %s: %d diagnostic(s)", model.model_id, len(diagnostics))
    return diagnostics


def load_applicability(path: str | Path | None = None) -> dict[str, tuple[StrideCategory, ...]]:
    """
    Loads the STRIDE-per-element applicability table.

    The file maps each element kind (plus "DataFlow") to a string of
    category letters, e.g. {"DataStore": "TRID"}.

    Args:
        path: An override table; the bundled table when omitted or empty.

    Returns:
        Map from kind name to the applicable categories in canonical order.

    Raises:
        SchemaError: If a kind is missing or a letter is unknown.
    """
    source = Path(path) if path else BUNDLED_APPLICABILITY
    raw = json.loads(source.read_text(encoding="utf-8"))
    required = [k.value for k in ElementKind] + [FLOW_KIND]
    table = {}
    for kind in required:
        if kind not in raw:
            raise SchemaError(f"applicability table has no entry for {kind}", path=str(source))
        try:
            categories = {StrideCategory.from_letter(letter) for letter in raw[kind]}
        except ValueError as e:
            raise SchemaError(str(e), path=f"{source}:{kind}") from e
        table[kind] = tuple(sorted(categories, key=lambda c: c.order))
    return table


def threat_count_bound(model: ThreatModel) -> int:
    """Upper bound on enumerated threats: six per element, three per flow."""
    return len(model.elements) * 6 + len(model.flows) * 3


def enumerate_threats(model: ThreatModel, applicability: dict | None = None) -> list[Threat]:
    """
    Maps every DFD element and flow to its applicable STRIDE categories.

    Predicted threats are derived data and get fresh sequential IDs
    (T01, T02, ...) on every call. Confirmed and Retired threats already in
    the model are kept as they are, and the (subject, category) pairs they
    cover are not predicted again.

    Args:
        model: A model without validation errors.
        applicability: Optional table from `load_applicability`.

    Returns:
        Threats ordered by (subject ID, category order).

    Raises:
        InvalidModel: If `validate_model` reports errors.
    """
    errors = [d for d in validate_model(model) if d.is_error]
    if errors:
        raise InvalidModel(errors)
    table = applicability or load_applicability()

    kept = [t for t in model.threats if t.status is not ThreatStatus.PREDICTED]
    covered = {t.pair for t in kept}
    reserved_ids = {t.threat_id for t in kept}

    subjects = [(e.id, e.name, table[e.kind.value]) for e in model.elements]
    subjects += [(f.id, f.label or f"{f.source} -> {f.target}", table[FLOW_KIND]) for f in model.flows]
    subjects.sort(key=lambda s: s[0])

    threats = list(kept)
    next_number = 1
    for subject_id, subject_name, categories in subjects:
        for category in categories:
            if (subject_id, category) in covered:
                continue
            threat_id = f"T{next_number:02d}"
            while threat_id in reserved_ids:
                next_number += 1
                threat_id = f"T{next_number:02d}"
            next_number += 1
            threats.append(Threat(
                threat_id=threat_id,
                subject=subject_id,
                category=category,
                description=f"{category.value} of {subject_name}: {category.definition}",
            ))

    threats.sort(key=lambda t: (t.subject, t.category.order, t.threat_id))
    logger.info("Enumerated %d threat(s) for model %s", len(threats), model.model_id)
    return threats
