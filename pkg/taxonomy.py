"""
Bundled SWC Registry and SCSVS catalogs, tag resolution, and the
SWC→STRIDE / SWC→CWE crosswalks.

The catalogs are pinned snapshots shipped in `data/taxonomy_catalog.json`;
`catalog_version` is copied into every report so results stay reproducible
while the upstream projects evolve.
"""
import json
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from errors import CatalogError, InputSyntaxError, UnknownTag
from threat_enums import StrideCategory, parse_enum

logger = logging.getLogger(__name__)

BUNDLED_CATALOG = Path(__file__).resolve().parent / "data" / "taxonomy_catalog.json"

SWC_ID_PATTERN = re.compile(r"SWC-\d{3}")
SCSVS_ID_PATTERN = re.compile(r"V(\d{1,2})(\.\d+)?")
CWE_PATTERN = re.compile(r"CWE-\d+")

SCSVS_SECTION_TITLES = (
    "Architecture, Design and Threat Modelling",
    "Access Control",
    "Blockchain Data",
    "Communications",
    "Arithmetic",
    "Malicious Input Handling",
    "Gas Usage & Limitations",
    "Business Logic",
    "Denial of Service",
    "Token",
    "Code Clarity",
    "Test Coverage",
    "Known Attacks",
    "Decentralized Finance",
)


@dataclass(frozen=True)
class SwcEntry:
    swc_id: str
    title: str
    cwe_relationship: str
    test_cases: tuple[str, ...] = ()

    @property
    def cwe_id(self) -> str:
        return CWE_PATTERN.match(self.cwe_relationship).group(0)


@dataclass(frozen=True)
class ScsvsItem:
    scsvs_id: str
    section_number: int
    section_title: str
    requirement_text: str = ""

    @property
    def is_section(self) -> bool:
        return "." not in self.scsvs_id


@dataclass(frozen=True)
class TaxonomyCatalog:
    """
    An immutable, loaded taxonomy snapshot.

    Attributes:
        swc_entries: SWC entries keyed by SWC ID, in file order.
        scsvs_items: SCSVS items keyed by SCSVS ID, in file order.
        swc_to_stride: The single-valued SWC→STRIDE crosswalk.
        catalog_version: Snapshot identifier recorded in reports.
        stride_rationale: Per-entry note explaining each crosswalk choice.
    """
    swc_entries: dict[str, SwcEntry]
    scsvs_items: dict[str, ScsvsItem]
    swc_to_stride: dict[str, StrideCategory]
    catalog_version: str
    stride_rationale: dict[str, str] = field(default_factory=dict)

    def all_ids(self) -> list[str]:
        return [*self.swc_entries, *self.scsvs_items]


def _require(raw: dict, key: str, owner: str, kind=None):
    if not isinstance(raw, dict):
        raise CatalogError("entry must be an object", offending_id=owner)
    if key not in raw or raw[key] in (None, ""):
        raise CatalogError(f"missing {key}", offending_id=owner)
    if kind is not None and not isinstance(raw[key], kind):
        raise CatalogError(f"{key} must be of type {kind.__name__}", offending_id=owner)
    return raw[key]


def _section_number(item: dict, scsvs_id: str) -> int:
    value = _require(item, "section_number", scsvs_id)
    if isinstance(value, bool):
        raise CatalogError("section_number must be an integer", offending_id=scsvs_id)
    try:
        return int(value)
    except (TypeError, ValueError) as e:
        raise CatalogError("section_number must be an integer", offending_id=scsvs_id) from e


def catalog_from_dict(raw: dict) -> TaxonomyCatalog:
    """
    Builds and checks a catalog from its decoded JSON form.

    Raises:
        CatalogError: On the first invariant violation, naming the offending ID.
    """
    if not isinstance(raw, dict):
        raise CatalogError("catalog document must be an object")
    for key, kind in (("catalog_version", object), ("swc", list), ("scsvs", list), ("swc_to_stride", dict)):
        if key not in raw:
            raise CatalogError(f"catalog document has no {key!r} key")
        if not isinstance(raw[key], kind):
            raise CatalogError(f"{key!r} must be of type {kind.__name__}")

    # --- 1. SWC entries ---
    swc_entries: dict[str, SwcEntry] = {}
    for index, item in enumerate(raw["swc"]):
        swc_id = _require(item, "swc_id", f"swc[{index}]", str)
        if not SWC_ID_PATTERN.fullmatch(swc_id):
            raise CatalogError("SWC id must match SWC-###", offending_id=swc_id)
        if swc_id in swc_entries:
            raise CatalogError("duplicate SWC id", offending_id=swc_id)
        relationship = _require(item, "cwe_relationship", swc_id, str)
        if not CWE_PATTERN.match(relationship):
            raise CatalogError("cwe_relationship must start with CWE-<n>", offending_id=swc_id)
        swc_entries[swc_id] = SwcEntry(
            swc_id=swc_id,
            title=_require(item, "title", swc_id, str),
            cwe_relationship=relationship,
            test_cases=tuple(item.get("test_cases") or []),
        )

    # --- 2. SCSVS items ---
    scsvs_items: dict[str, ScsvsItem] = {}
    for index, item in enumerate(raw["scsvs"]):
        scsvs_id = _require(item, "scsvs_id", f"scsvs[{index}]", str)
        match = SCSVS_ID_PATTERN.fullmatch(scsvs_id)
        if not match:
            raise CatalogError("SCSVS id must match V<n>[.<m>]", offending_id=scsvs_id)
        if scsvs_id in scsvs_items:
            raise CatalogError("duplicate SCSVS id", offending_id=scsvs_id)
        section = _section_number(item, scsvs_id)
        if not 1 <= section <= len(SCSVS_SECTION_TITLES) or section != int(match.group(1)):
            raise CatalogError(f"section_number {section} is out of range or disagrees with the id",
                               offending_id=scsvs_id)
        title = _require(item, "section_title", scsvs_id, str)
        if title != SCSVS_SECTION_TITLES[section - 1]:
            raise CatalogError(f"section_title {title!r} is not the title of V{section}",
                               offending_id=scsvs_id)
        scsvs_items[scsvs_id] = ScsvsItem(scsvs_id, section, title, item.get("requirement_text", "") or "")

    # --- 3. SWC→STRIDE crosswalk (must be total) ---
    swc_to_stride: dict[str, StrideCategory] = {}
    rationale: dict[str, str] = {}
    for swc_id, value in raw["swc_to_stride"].items():
        if swc_id not in swc_entries:
            raise CatalogError("crosswalk key is not a catalog SWC id", offending_id=swc_id)
        if isinstance(value, dict):
            category_name = _require(value, "category", swc_id, str)
            note = value.get("rationale") or ""
            if not isinstance(note, str):
                raise CatalogError("rationale must be a string", offending_id=swc_id)
            if note:
                rationale[swc_id] = note
        elif isinstance(value, str):
            category_name = value
        else:
            raise CatalogError("crosswalk entry must be a category name or an object", offending_id=swc_id)
        try:
            swc_to_stride[swc_id] = parse_enum(StrideCategory, category_name)
        except ValueError as e:
            raise CatalogError(str(e), offending_id=swc_id) from e
    for swc_id in swc_entries:
        if swc_id not in swc_to_stride:
            raise CatalogError("no STRIDE crosswalk entry", offending_id=swc_id)

    return TaxonomyCatalog(swc_entries, scsvs_items, swc_to_stride, str(raw["catalog_version"]), rationale)


def catalog_to_dict(catalog: TaxonomyCatalog) -> dict:
    """Inverse of `catalog_from_dict` (rationales included)."""
    return {
        "catalog_version": catalog.catalog_version,
        "swc": [
            {"swc_id": e.swc_id, "title": e.title, "cwe_relationship": e.cwe_relationship,
             "test_cases": list(e.test_cases)}
            for e in catalog.swc_entries.values()
        ],
        "scsvs": [
            {"scsvs_id": s.scsvs_id, "section_number": s.section_number,
             "section_title": s.section_title, "requirement_text": s.requirement_text}
            for s in catalog.scsvs_items.values()
        ],
        "swc_to_stride": {
            swc_id: {"category": category.value, "rationale": catalog.stride_rationale.get(swc_id, "")}
            for swc_id, category in catalog.swc_to_stride.items()
        },
    }


@lru_cache(maxsize=1)
def _bundled() -> TaxonomyCatalog:
    logger.info("Loading bundled taxonomy catalog from %s", BUNDLED_CATALOG)
    return catalog_from_dict(json.loads(BUNDLED_CATALOG.read_text(encoding="utf-8")))


def load_catalog(source: bytes | None = None) -> TaxonomyCatalog:
    """
    Loads a taxonomy catalog.

    Args:
        source: Raw catalog JSON, or None for the bundled snapshot. The
            bundled catalog is parsed once and shared; it is immutable.

    Returns:
        A catalog satisfying every invariant.

    Raises:
        InputSyntaxError: If `source` is not UTF-8 JSON.
        CatalogError: If the document violates a catalog invariant.
    """
    if source is None:
        return _bundled()
    try:
        raw = json.loads(source.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise InputSyntaxError(f"catalog is not valid UTF-8: {e.reason}", offset=e.start) from e
    except json.JSONDecodeError as e:
        raise InputSyntaxError(f"malformed catalog JSON: {e.msg}",
                               offset=len(e.doc[:e.pos].encode("utf-8"))) from e
    return catalog_from_dict(raw)


def normalize_tag(tag: str) -> str:
    """Trims whitespace and upper-cases the `SWC` / `V` prefix."""
    text = tag.strip()
    if text[:3].lower() == "swc":
        return "SWC" + text[3:]
    if text[:1].lower() == "v":
        return "V" + text[1:]
    return text


def _edit_distance(a: str, b: str) -> int:
    # Single-row Levenshtein table.
    row = np.arange(len(b) + 1)
    for i, char_a in enumerate(a, start=1):
        previous, row[0] = row[0], i
        for j, char_b in enumerate(b, start=1):
            current = min(row[j] + 1, row[j - 1] + 1, previous + (char_a != char_b))
            previous, row[j] = row[j], current
    return int(row[-1])


def nearest_ids(catalog: TaxonomyCatalog, tag: str, n: int = 3) -> list[str]:
    """The `n` catalog IDs closest to `tag` by edit distance (ties by ID)."""
    target = normalize_tag(tag)
    ranked = sorted(catalog.all_ids(), key=lambda candidate: (_edit_distance(target, candidate), candidate))
    return ranked[:n]


def resolve_tag(catalog: TaxonomyCatalog, tag: str) -> SwcEntry | ScsvsItem:
    """
    Resolves a finding tag to its catalog entry.

    Section-level SCSVS tags such as "V5" resolve to the section item.

    Raises:
        UnknownTag: If the tag is in neither catalog; the message lists the
            three nearest IDs.
    """
    key = normalize_tag(tag)
    if key in catalog.swc_entries:
        return catalog.swc_entries[key]
    if key in catalog.scsvs_items:
        return catalog.scsvs_items[key]
    raise UnknownTag(tag, nearest_ids(catalog, tag))


def stride_of(catalog: TaxonomyCatalog, swc_id: str) -> StrideCategory:
    """Returns the STRIDE category the crosswalk assigns to an SWC ID."""
    key = normalize_tag(swc_id)
    if key not in catalog.swc_to_stride:
        raise UnknownTag(swc_id, nearest_ids(catalog, swc_id))
    return catalog.swc_to_stride[key]


def cwe_of(catalog: TaxonomyCatalog, swc_id: str) -> str:
    """Returns the CWE ID (e.g. "CWE-767") an SWC entry relates to."""
    entry = resolve_tag(catalog, swc_id)
    if not isinstance(entry, SwcEntry):
        raise UnknownTag(swc_id, nearest_ids(catalog, swc_id))
    return entry.cwe_id
