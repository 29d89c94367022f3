from dataclasses import replace
from datetime import date

import pytest

from errors import ConfigError, EmptyInput
from findings import Finding, Period, assign_periods, link_findings, period_for
from threat_enums import PeriodScheme, ProgramVariant, Severity, StrideCategory, Validity


def _finding(finding_id="BB-1", submitted=date(2021, 2, 1), **overrides) -> Finding:
    values = dict(finding_id=finding_id, submitted=submitted, severity=Severity.HIGH, title="t",
                  program_variant=ProgramVariant.OPEN_ENDED, validity=Validity.VALID,
                  swc_tags=("SWC-107",), linked_subjects=("A02",))
    values.update(overrides)
    return Finding(**values)


# --- link_findings ---

def test_token_vault_findings_all_link(token_vault_model, catalog, token_vault_findings):
    linked = link_findings(token_vault_model, catalog, token_vault_findings)
    assert [lf.finding.finding_id for lf in linked.linked] == ["BB-001", "BB-002", "BB-003"]
    assert linked.quarantined == ()
    assert [f.finding_id for f in linked.excluded] == ["BB-004"]
    assert linked.triage_counts == {"Valid": 3, "Invalid": 1, "Duplicate": 0}
    first = linked.linked[0]
    assert [e.swc_id for e in first.swc_entries] == ["SWC-135"]
    assert [i.scsvs_id for i in first.scsvs_items] == ["V5.3"]
    assert first.stride_categories == (StrideCategory.TAMPERING,)
    assert first.finding_pairs() == [("A02", StrideCategory.TAMPERING)]


def test_input_findings_are_not_modified(token_vault_model, catalog, token_vault_findings):
    before = list(token_vault_findings)
    linked = link_findings(token_vault_model, catalog, token_vault_findings)
    assert token_vault_findings == before
    assert linked.linked[0].finding is token_vault_findings[0]


@pytest.mark.parametrize("finding, rule", [
    (_finding(swc_tags=("SWC-999",)), "unknown-tag"),
    (_finding(linked_subjects=("A99",)), "unknown-subject"),
    (_finding(swc_tags=(), scsvs_tags=()), "untagged-valid"),
])
def test_bad_findings_are_quarantined(token_vault_model, catalog, finding, rule):
    linked = link_findings(token_vault_model, catalog, [finding])
    assert linked.linked == ()
    [entry] = linked.quarantined
    assert entry.finding is finding
    assert [d.rule for d in entry.diagnostics] == [rule]
    assert entry.diagnostics[0].subject_id == "BB-1"


def test_unknown_tag_message_suggests_nearest(token_vault_model, catalog):
    linked = link_findings(token_vault_model, catalog, [_finding(swc_tags=("SWC-1077",))])
    assert "SWC-107" in linked.quarantined[0].diagnostics[0].message


def test_duplicate_valid_finding_id_is_quarantined(token_vault_model, catalog):
    findings = [_finding(), _finding(submitted=date(2021, 2, 2))]
    linked = link_findings(token_vault_model, catalog, findings)
    assert len(linked.linked) == 1
    assert linked.quarantined[0].diagnostics[0].rule == "dup-finding-id"


def test_invalid_findings_skip_tag_checks(token_vault_model, catalog):
    finding = _finding(validity=Validity.DUPLICATE, swc_tags=("nonsense",))
    linked = link_findings(token_vault_model, catalog, [finding])
    assert linked.excluded == (finding,)
    assert linked.quarantined == ()


def test_repeated_tags_and_subjects_count_once(token_vault_model, catalog):
    finding = _finding(swc_tags=("SWC-107", "swc-107"), linked_subjects=("A02", "A02", "F01"))
    [lf] = link_findings(token_vault_model, catalog, [finding]).linked
    assert [e.swc_id for e in lf.swc_entries] == ["SWC-107"]
    assert lf.subjects == ("A02", "F01")


def test_scsvs_only_finding_links(token_vault_model, catalog):
    [lf] = link_findings(token_vault_model, catalog, [_finding(swc_tags=(), scsvs_tags=("V2",))]).linked
    assert lf.swc_entries == ()
    assert lf.finding_pairs() == []


# --- periods ---

def test_period_rejects_inverted_range():
    with pytest.raises(ConfigError):
        Period("x", date(2021, 4, 1), date(2021, 1, 1), PeriodScheme.QUARTERLY)


@pytest.mark.parametrize("anchor, scheme, index, label, start, end", [
    (date(2021, 1, 1), PeriodScheme.QUARTERLY, 0, "2021-Q1", date(2021, 1, 1), date(2021, 4, 1)),
    (date(2021, 1, 1), PeriodScheme.QUARTERLY, 3, "2021-Q4", date(2021, 10, 1), date(2022, 1, 1)),
    (date(2021, 1, 1), PeriodScheme.QUARTERLY, -1, "2020-Q4", date(2020, 10, 1), date(2021, 1, 1)),
    (date(2021, 1, 1), PeriodScheme.SEMI_ANNUAL, 1, "2021-H2", date(2021, 7, 1), date(2022, 1, 1)),
    (date(2021, 2, 1), PeriodScheme.QUARTERLY, 0, "2021-02+3M", date(2021, 2, 1), date(2021, 5, 1)),
])
def test_period_grid(anchor, scheme, index, label, start, end):
    period = period_for(anchor, scheme, index)
    assert (period.label, period.start, period.end) == (label, start, end)


def test_assign_periods_keeps_empty_gaps():
    findings = [_finding("a", date(2021, 1, 5)), _finding("b", date(2021, 9, 30)), _finding("c", date(2021, 2, 1))]
    buckets = assign_periods(findings, PeriodScheme.QUARTERLY, date(2021, 1, 1))
    assert [p.label for p in buckets] == ["2021-Q1", "2021-Q2", "2021-Q3"]
    assert [[f.finding_id for f in b] for b in buckets.values()] == [["a", "c"], [], ["b"]]


def test_assign_periods_extends_before_the_anchor():
    findings = [_finding("a", date(2020, 12, 31)), _finding("b", date(2021, 1, 1))]
    buckets = assign_periods(findings, PeriodScheme.SEMI_ANNUAL, date(2021, 1, 1))
    assert [p.label for p in buckets] == ["2020-H2", "2021-H1"]


def test_every_finding_lands_in_its_period():
    findings = [_finding(str(day), date(2021, 1, 1).fromordinal(date(2021, 1, 1).toordinal() + day))
                for day in range(0, 400, 7)]
    buckets = assign_periods(findings, PeriodScheme.QUARTERLY, date(2021, 1, 1))
    assert sum(len(b) for b in buckets.values()) == len(findings)
    for period, bucket in buckets.items():
        assert all(period.contains(f.submitted) for f in bucket)


def test_assign_periods_needs_findings():
    with pytest.raises(EmptyInput):
        assign_periods([], PeriodScheme.QUARTERLY, date(2021, 1, 1))


def test_anchor_must_start_a_month():
    with pytest.raises(ConfigError):
        assign_periods([_finding()], PeriodScheme.QUARTERLY, date(2021, 1, 15))


def test_findings_are_immutable():
    finding = _finding()
    assert replace(finding, team="x") != finding
    with pytest.raises(Exception):
        finding.team = "x"
