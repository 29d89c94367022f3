"""
Feedback metrics computed from linked findings, one family per question
the feedback loop asks:

- model accuracy: did the threat model predict what the bounty found?
- asset metrics and prioritization: which subjects carry the most risk?
- category frequencies: which weakness classes are the root causes?
- team breakdown: which teams keep producing which weaknesses?
- chronic issues: which weaknesses recur period after period?

Everything here is a pure function over immutable inputs, so per-period
reports can be computed in any order or in parallel.
"""
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace

from errors import ConfigError
from findings import UNASSIGNED_TEAM, LinkedSet, Period
from taxonomy import TaxonomyCatalog
from threat_enums import Severity, StrideCategory, ThreatStatus
from threat_model import Diagnostic, ThreatModel

logger = logging.getLogger(__name__)

DEFAULT_WEIGHTS = {
    Severity.CRITICAL: 10,
    Severity.HIGH: 5,
    Severity.MEDIUM: 2,
    Severity.LOW: 1,
}
DEFAULT_MIN_STREAK = 2


@dataclass(frozen=True)
class AccuracyStats:
    """
    How well the model's predicted threats match what findings evidenced.

    precision is confirmed/predicted (0 when nothing was predicted);
    recall is matched finding-pairs over all finding-pairs (1 when there
    are none).
    """
    predicted: int = 0
    confirmed_by_findings: int = 0
    uncovered_findings: int = 0
    precision: float = 0.0
    recall: float = 1.0
    overlooked_subjects: tuple[str, ...] = ()


@dataclass(frozen=True)
class ChronicIssue:
    swc_id: str
    streak_length: int
    periods: tuple[str, ...]


@dataclass(frozen=True)
class IdTables:
    """The five ID/Description tables of the annotated diagram."""
    assets: tuple[tuple[str, str], ...] = ()
    actors: tuple[tuple[str, str], ...] = ()
    controls: tuple[tuple[str, str], ...] = ()
    swc: tuple[tuple[str, str], ...] = ()
    scsvs: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class QuarantineEntry:
    finding_id: str
    diagnostics: tuple[Diagnostic, ...]


@dataclass(frozen=True)
class PeriodReport:
    """All feedback metrics for one analysis period."""
    period: Period
    model_id: str
    catalog_version: str
    asset_counts: dict[str, int] = field(default_factory=dict)
    asset_scores: dict[str, float] = field(default_factory=dict)
    category_freq_swc: dict[str, int] = field(default_factory=dict)
    category_freq_scsvs_section: dict[int, int] = field(default_factory=dict)
    model_accuracy: AccuracyStats = field(default_factory=AccuracyStats)
    control_gaps: dict[str, int] = field(default_factory=dict)
    team_breakdown: dict[str, dict[str, int]] = field(default_factory=dict)
    priority_ranking: tuple[str, ...] = ()
    actor_exposure: dict[str, int] = field(default_factory=dict)
    untargeted_findings: int = 0
    triage_counts: dict[str, int] = field(default_factory=dict)
    id_tables: IdTables = field(default_factory=IdTables)
    quarantine: tuple[QuarantineEntry, ...] = ()
    chronic_issues: tuple[ChronicIssue, ...] = ()


@dataclass(frozen=True)
class TrendReport:
    """Cross-period view: per-period series plus chronic issues."""
    model_id: str
    catalog_version: str
    period_labels: tuple[str, ...] = ()
    swc_series: dict[str, tuple[int, ...]] = field(default_factory=dict)
    score_series: dict[str, tuple[float, ...]] = field(default_factory=dict)
    precision_series: tuple[float, ...] = ()
    recall_series: tuple[float, ...] = ()
    min_streak: int = DEFAULT_MIN_STREAK
    chronic_issues: tuple[ChronicIssue, ...] = ()


def check_weights(weights: dict[Severity, float]) -> dict[Severity, float]:
    """Raises ConfigError unless every severity has a positive weight."""
    for severity in Severity:
        value = weights.get(severity)
        if value is None or not value > 0:
            raise ConfigError(f"severity weight for {severity.value} must be > 0, got {value!r}")
    return weights


def asset_metrics(linked: LinkedSet, weights: dict[Severity, float] = DEFAULT_WEIGHTS):
    """
    Finding count and severity-weighted score per linked subject.

    A finding linked to several subjects counts once for each of them.

    Returns:
        (asset_counts, asset_scores), both keyed by subject ID in sorted order.
    """
    check_weights(weights)
    counts: Counter = Counter()
    scores: dict[str, float] = defaultdict(int)
    for lf in linked.linked:
        for subject in lf.subjects:
            counts[subject] += 1
            scores[subject] += weights[lf.finding.severity]
    return ({s: counts[s] for s in sorted(counts)}, {s: scores[s] for s in sorted(scores)})


def category_frequencies(linked: LinkedSet):
    """
    Histograms of SWC IDs and SCSVS sections over linked findings.

    A finding adds one to each distinct tag it carries; SCSVS items roll up
    to their section number (V5.3 counts under 5).

    Returns:
        (category_freq_swc, category_freq_scsvs_section).
    """
    swc: Counter = Counter()
    sections: Counter = Counter()
    for lf in linked.linked:
        swc.update(e.swc_id for e in lf.swc_entries)
        sections.update(item.section_number for item in lf.scsvs_items)
    return ({k: swc[k] for k in sorted(swc)}, {k: sections[k] for k in sorted(sections)})


def _finding_pairs(linked: LinkedSet) -> list[tuple[str, StrideCategory]]:
    return [pair for lf in linked.linked for pair in lf.finding_pairs()]


def model_accuracy(model: ThreatModel, linked: LinkedSet, catalog: TaxonomyCatalog) -> AccuracyStats:
    """
    Compares predicted threats with the (subject, category) pairs findings evidence.

    Predicted threats are the model's threats that are not Retired; a
    Confirmed threat is a prediction that already came true. Both sides are
    de-duplicated to distinct pairs.
    """
    predicted = {t.pair for t in model.threats if t.status is not ThreatStatus.RETIRED}
    observed = set(_finding_pairs(linked))
    confirmed = predicted & observed

    mentioned = {t.subject for t in model.threats}
    finding_subjects = {s for lf in linked.linked for s in lf.subjects}

    return AccuracyStats(
        predicted=len(predicted),
        confirmed_by_findings=len(confirmed),
        uncovered_findings=len(observed - predicted),
        precision=len(confirmed) / len(predicted) if predicted else 0.0,
        recall=len(observed & predicted) / len(observed) if observed else 1.0,
        overlooked_subjects=tuple(sorted(finding_subjects - mentioned)),
    )


def control_gaps(model: ThreatModel, linked: LinkedSet, catalog: TaxonomyCatalog) -> dict[str, int]:
    """
    Per control, the finding-pairs it should have stopped.

    Every (finding, subject, SWC tag) occurrence whose subject the control
    protects and whose category it mitigates counts once.
    """
    pairs = _finding_pairs(linked)
    gaps = {}
    for control in sorted(model.controls, key=lambda c: c.id):
        protected = set(control.protects)
        gaps[control.id] = sum(1 for subject, category in pairs
                               if subject in protected and category in control.mitigates)
    return gaps


def team_breakdown(linked: LinkedSet) -> dict[str, dict[str, int]]:
    """SWC histogram per owning team; findings without a team go under "(unassigned)"."""
    teams: dict[str, Counter] = defaultdict(Counter)
    for lf in linked.linked:
        team = lf.finding.team.strip() or UNASSIGNED_TEAM
        teams[team].update(e.swc_id for e in lf.swc_entries)
    return {team: {k: teams[team][k] for k in sorted(teams[team])} for team in sorted(teams)}


def prioritize(asset_counts: dict[str, int], asset_scores: dict[str, float]) -> list[str]:
    """Subjects by score desc, then count desc, then ID asc."""
    return sorted(asset_scores, key=lambda s: (-asset_scores[s], -asset_counts.get(s, 0), s))


def actor_exposure(model: ThreatModel, linked: LinkedSet) -> tuple[dict[str, int], int]:
    """
    Informational: findings landing on each threat actor's targets.

    Returns:
        (per-actor finding counts, count of findings on subjects no actor targets).
    """
    exposure = {}
    for actor in sorted(model.actors, key=lambda a: a.id):
        targets = set(actor.targets)
        exposure[actor.id] = sum(1 for lf in linked.linked if targets.intersection(lf.subjects))
    targeted = {t for actor in model.actors for t in actor.targets}
    untargeted = sum(1 for lf in linked.linked if not targeted.intersection(lf.subjects))
    return exposure, untargeted


def chronic_issues(period_reports: list[PeriodReport], k: int = DEFAULT_MIN_STREAK) -> list[ChronicIssue]:
    """
    SWC IDs present in at least `k` consecutive periods.

    Each maximal run is reported once. A period where the weakness is
    absent breaks the run, and so does a calendar gap between two
    consecutive reports.

    Raises:
        ConfigError: If k < 2.
    """
    if k < 2:
        raise ConfigError(f"chronic streak threshold must be >= 2, got {k}")
    swc_ids = sorted({swc for report in period_reports for swc in report.category_freq_swc})
    issues = []
    for swc_id in swc_ids:
        run: list[str] = []
        previous: PeriodReport | None = None
        for report in period_reports:
            contiguous = previous is None or previous.period.end == report.period.start
            present = report.category_freq_swc.get(swc_id, 0) >= 1
            if run and (not present or not contiguous):
                if len(run) >= k:
                    issues.append(ChronicIssue(swc_id, len(run), tuple(run)))
                run = []
            if present:
                run.append(report.period.label)
            previous = report
        if len(run) >= k:
            issues.append(ChronicIssue(swc_id, len(run), tuple(run)))
    return issues


def apply_feedback(model: ThreatModel, linked: LinkedSet, catalog: TaxonomyCatalog) -> ThreatModel:
    """
    Confirms every Predicted threat that a finding-pair matches.

    Returns:
        A new model; `model` is left as it was.
    """
    observed = set(_finding_pairs(linked))
    threats = [t.transition(ThreatStatus.CONFIRMED)
               if t.status is ThreatStatus.PREDICTED and t.pair in observed else t
               for t in model.threats]
    confirmed = sum(1 for old, new in zip(model.threats, threats) if old is not new)
    logger.info("Feedback confirmed %d predicted threat(s) in model %s", confirmed, model.model_id)
    return model.with_threats(threats)


def build_id_tables(model: ThreatModel, linked: LinkedSet) -> IdTables:
    """
    Builds the five ID tables.

    SW## and SC## numbers follow first appearance in the period's linked
    findings, in record order.
    """
    swc_ids = list(dict.fromkeys(e.swc_id for lf in linked.linked for e in lf.swc_entries))
    scsvs_ids = list(dict.fromkeys(i.scsvs_id for lf in linked.linked for i in lf.scsvs_items))
    return IdTables(
        assets=tuple((e.id, e.name) for e in sorted(model.elements, key=lambda e: e.id)),
        actors=tuple((a.id, a.name) for a in sorted(model.actors, key=lambda a: a.id)),
        controls=tuple((c.id, c.name) for c in sorted(model.controls, key=lambda c: c.id)),
        swc=tuple((f"SW{n:02d}", swc_id) for n, swc_id in enumerate(swc_ids, start=1)),
        scsvs=tuple((f"SC{n:02d}", scsvs_id) for n, scsvs_id in enumerate(scsvs_ids, start=1)),
    )


def build_period_report(model: ThreatModel, catalog: TaxonomyCatalog, linked: LinkedSet, period: Period,
                        weights: dict[Severity, float] = DEFAULT_WEIGHTS) -> PeriodReport:
    """Assembles every metric for one period into a PeriodReport."""
    counts, scores = asset_metrics(linked, weights)
    swc_freq, section_freq = category_frequencies(linked)
    exposure, untargeted = actor_exposure(model, linked)
    report = PeriodReport(
        period=period,
        model_id=model.model_id,
        catalog_version=catalog.catalog_version,
        asset_counts=counts,
        asset_scores=scores,
        category_freq_swc=swc_freq,
        category_freq_scsvs_section=section_freq,
        model_accuracy=model_accuracy(model, linked, catalog),
        control_gaps=control_gaps(model, linked, catalog),
        team_breakdown=team_breakdown(linked),
        priority_ranking=tuple(prioritize(counts, scores)),
        actor_exposure=exposure,
        untargeted_findings=untargeted,
        triage_counts=linked.triage_counts,
        id_tables=build_id_tables(model, linked),
        quarantine=tuple(QuarantineEntry(q.finding.finding_id, q.diagnostics) for q in linked.quarantined),
    )
    logger.debug("Built report for %s: %d linked finding(s)", period.label, len(linked.linked))
    return report


def build_trend_report(period_reports: list[PeriodReport], k: int = DEFAULT_MIN_STREAK) -> TrendReport:
    """
    Folds ordered period reports into a TrendReport.

    Args:
        period_reports: Reports ordered by period start.
        k: Minimum streak length for a chronic issue.
    """
    issues = chronic_issues(period_reports, k)
    swc_ids = sorted({s for r in period_reports for s in r.category_freq_swc})
    subjects = sorted({s for r in period_reports for s in r.asset_scores})
    first = period_reports[0] if period_reports else None
    return TrendReport(
        model_id=first.model_id if first else "",
        catalog_version=first.catalog_version if first else "",
        period_labels=tuple(r.period.label for r in period_reports),
        swc_series={s: tuple(r.category_freq_swc.get(s, 0) for r in period_reports) for s in swc_ids},
        score_series={s: tuple(r.asset_scores.get(s, 0) for r in period_reports) for s in subjects},
        precision_series=tuple(r.model_accuracy.precision for r in period_reports),
        recall_series=tuple(r.model_accuracy.recall for r in period_reports),
        min_streak=k,
        chronic_issues=tuple(issues),
    )


def with_chronic_issues(period_reports: list[PeriodReport], issues) -> list[PeriodReport]:
    """Copies each report with the chronic issues whose streak covers its period."""
    return [replace(r, chronic_issues=tuple(i for i in issues if r.period.label in i.periods))
            for r in period_reports]
