"""
Bug bounty findings: the record type, linking against a threat model and
taxonomy catalog, and bucketing into calendar analysis periods.
"""
import logging
from collections import Counter
from dataclasses import dataclass
from datetime import date

import numpy as np
import pandas as pd

from errors import ConfigError, EmptyInput, UnknownTag
from taxonomy import ScsvsItem, SwcEntry, TaxonomyCatalog, resolve_tag, stride_of
from threat_enums import (DiagnosticLevel, PeriodScheme, ProgramCategory, ProgramVariant,
                          Severity, StrideCategory, Validity)
from threat_model import Diagnostic, ThreatModel

logger = logging.getLogger(__name__)

UNASSIGNED_TEAM = "(unassigned)"


@dataclass(frozen=True)
class Finding:
    """One triaged bug bounty submission. Only Valid findings feed the metrics."""
    finding_id: str
    submitted: date
    severity: Severity
    title: str
    program_variant: ProgramVariant
    validity: Validity
    swc_tags: tuple[str, ...] = ()
    scsvs_tags: tuple[str, ...] = ()
    linked_subjects: tuple[str, ...] = ()
    team: str = ""
    reporter: str = ""
    program_category: ProgramCategory | None = None

    @property
    def is_valid(self) -> bool:
        return self.validity is Validity.VALID


@dataclass(frozen=True)
class Period:
    """A calendar analysis period; `start` is inclusive, `end` exclusive."""
    label: str
    start: date
    end: date
    scheme: PeriodScheme

    def __post_init__(self):
        if not self.start < self.end:
            raise ConfigError(f"period {self.label}: start {self.start} is not before end {self.end}")

    def contains(self, day: date) -> bool:
        return self.start <= day < self.end


@dataclass(frozen=True)
class LinkedFinding:
    """
    A Valid finding paired with what its tags and links resolved to.

    `stride_categories` runs parallel to `swc_entries`. Tags and subjects
    are de-duplicated in their original order; the wrapped Finding is the
    caller's object, untouched.
    """
    finding: Finding
    swc_entries: tuple[SwcEntry, ...]
    scsvs_items: tuple[ScsvsItem, ...]
    stride_categories: tuple[StrideCategory, ...]
    subjects: tuple[str, ...]

    def finding_pairs(self) -> list[tuple[str, StrideCategory]]:
        """Every (subject, STRIDE category) occurrence this finding evidences."""
        return [(subject, category) for subject in self.subjects for category in self.stride_categories]


@dataclass(frozen=True)
class QuarantinedFinding:
    finding: Finding
    diagnostics: tuple[Diagnostic, ...]


@dataclass(frozen=True)
class LinkedSet:
    """
    The overlay produced by `link_findings`.

    Every Valid finding is in exactly one of `linked` or `quarantined`;
    Invalid and Duplicate findings sit in `excluded` and only count toward
    triage volumes.
    """
    linked: tuple[LinkedFinding, ...] = ()
    quarantined: tuple[QuarantinedFinding, ...] = ()
    excluded: tuple[Finding, ...] = ()

    @property
    def triage_counts(self) -> dict[str, int]:
        counts = Counter(lf.finding.validity.value for lf in self.linked)
        counts.update(q.finding.validity.value for q in self.quarantined)
        counts.update(f.validity.value for f in self.excluded)
        return {v.value: counts.get(v.value, 0) for v in Validity}


def _quarantine(rule: str, finding: Finding, message: str) -> Diagnostic:
    return Diagnostic(DiagnosticLevel.ERROR, rule, finding.finding_id, message)


def link_findings(model: ThreatModel, catalog: TaxonomyCatalog, findings: list[Finding]) -> LinkedSet:
    """
    Resolves every Valid finding's tags and subject links.

    Findings that fail to resolve are quarantined with diagnostics rather
    than dropped. Nothing is raised.

    Args:
        model: A model without validation errors.
        catalog: The taxonomy the tags are checked against.
        findings: Parsed findings in record order.

    Returns:
        The linked / quarantined / excluded partition, in input order.
    """
    subject_ids = model.subject_ids
    linked, quarantined, excluded = [], [], []
    seen_ids: set[str] = set()

    for finding in findings:
        if not finding.is_valid:
            excluded.append(finding)
            continue

        diagnostics = []
        if finding.finding_id in seen_ids:
            diagnostics.append(_quarantine("dup-finding-id", finding, "finding id already used by a valid finding"))
        seen_ids.add(finding.finding_id)

        if not finding.swc_tags and not finding.scsvs_tags:
            diagnostics.append(_quarantine("untagged-valid", finding, "valid finding carries no SWC or SCSVS tag"))

        swc_entries, scsvs_items = [], []
        for tag in dict.fromkeys(finding.swc_tags + finding.scsvs_tags):
            try:
                entry = resolve_tag(catalog, tag)
            except UnknownTag as e:
                diagnostics.append(_quarantine("unknown-tag", finding, str(e)))
                continue
            target = swc_entries if isinstance(entry, SwcEntry) else scsvs_items
            if entry not in target:
                target.append(entry)

        for subject in finding.linked_subjects:
            if subject not in subject_ids:
                diagnostics.append(_quarantine("unknown-subject", finding, f"subject {subject!r} is not in the model"))

        if diagnostics:
            quarantined.append(QuarantinedFinding(finding, tuple(diagnostics)))
            continue

        linked.append(LinkedFinding(
            finding=finding,
            swc_entries=tuple(swc_entries),
            scsvs_items=tuple(scsvs_items),
            stride_categories=tuple(stride_of(catalog, e.swc_id) for e in swc_entries),
            subjects=tuple(dict.fromkeys(finding.linked_subjects)),
        ))

    if quarantined:
        logger.warning("Quarantined %d of %d valid finding(s)", len(quarantined), len(linked) + len(quarantined))
    logger.info("Linked %d finding(s); %d excluded by triage", len(linked), len(excluded))
    return LinkedSet(tuple(linked), tuple(quarantined), tuple(excluded))


def _month_index(day) -> int:
    return day.year * 12 + (day.month - 1)


def period_for(anchor: date, scheme: PeriodScheme, index: int) -> Period:
    """
    The `index`-th period of the grid anchored at `anchor` (may be negative).

    Calendar-aligned grids get stable labels: "2021-Q3" and "2021-H1".
    Other anchors are labelled by start month and length, e.g. "2021-02+3M".
    """
    months = scheme.value
    start = (pd.Timestamp(anchor) + pd.DateOffset(months=index * months)).date()
    end = (pd.Timestamp(start) + pd.DateOffset(months=months)).date()
    if scheme is PeriodScheme.QUARTERLY and start.month in (1, 4, 7, 10):
        label = f"{start.year}-Q{(start.month - 1) // 3 + 1}"
    elif scheme is PeriodScheme.SEMI_ANNUAL and start.month in (1, 7):
        label = f"{start.year}-H{1 if start.month == 1 else 2}"
    else:
        label = f"{start:%Y-%m}+{months}M"
    return Period(label, start, end, scheme)


def assign_periods(findings: list[Finding], scheme: PeriodScheme, anchor: date) -> dict[Period, list[Finding]]:
    """
    Buckets findings into consecutive calendar periods.

    The grid is anchored at `anchor` and extended in both directions until it
    covers the earliest and latest submission. Periods with no findings in
    that range are kept with empty lists, since gaps break chronic streaks.

    Args:
        findings: Findings to bucket, in any order.
        scheme: Quarterly or semi-annual periods.
        anchor: First day of a month.

    Returns:
        Map from Period to its findings (input order), ordered by period start.

    Raises:
        EmptyInput: If `findings` is empty.
        ConfigError: If `anchor` is not the first day of a month.
    """
    if not findings:
        raise EmptyInput("no findings to assign to periods")
    if anchor.day != 1:
        raise ConfigError(f"anchor {anchor.isoformat()} is not the first day of a month")

    # --- 1. Grid index of every finding ---
    frame = pd.DataFrame({"month": [_month_index(f.submitted) for f in findings]})
    frame["period"] = np.floor_divide(frame["month"] - _month_index(anchor), scheme.value)

    # --- 2. Every period between the first and last occupied one ---
    first, last = int(frame["period"].min()), int(frame["period"].max())
    buckets: dict[Period, list[Finding]] = {period_for(anchor, scheme, i): [] for i in range(first, last + 1)}
    periods = list(buckets)
    for position, index in enumerate(frame["period"].to_numpy()):
        buckets[periods[int(index) - first]].append(findings[position])

    logger.info("Assigned %d finding(s) to %d %s period(s)", len(findings), len(periods), scheme.label)
    return buckets
