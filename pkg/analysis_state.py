import logging
from datetime import date

from feedback_metrics import (PeriodReport, TrendReport, apply_feedback, build_period_report,
                              build_trend_report, with_chronic_issues)
from findings import Finding, LinkedSet, Period, assign_periods, link_findings
from settings_manager import SettingsManager
from taxonomy import TaxonomyCatalog, load_catalog
from threat_enums import PeriodScheme
from threat_model import ThreatModel, enumerate_threats, load_applicability

logger = logging.getLogger(__name__)


class AnalysisState:
    """
    The complete state of one feedback analysis run.

    This class is the single source of truth that brings together the
    threat model, the taxonomy catalog, the settings that tune the metrics,
    and the results once `run` has been called. The model it holds already
    has its threats enumerated, so accuracy metrics always compare against
    a full prediction set.
    """
    def __init__(self, model: ThreatModel, catalog: TaxonomyCatalog | None = None,
                 settings: SettingsManager | None = None):
        # --- Inputs ---
        self.settings = settings or SettingsManager()
        self.catalog = catalog or load_catalog()
        self.load_metric_settings()
        self.model = model.with_threats(enumerate_threats(model, self.applicability))

        # --- Results (filled by run) ---
        self.buckets: dict[Period, list[Finding]] = {}
        self.linked_sets: dict[Period, LinkedSet] = {}
        self.period_reports: list[PeriodReport] = []
        self.trend: TrendReport | None = None
        self.feedback_model: ThreatModel | None = None

    def load_metric_settings(self):
        """
        Loads every metric-related setting from the SettingsManager.

        Called on initialization; call again after changing settings to
        pick the new values up before the next run.
        """
        self.weights = self.settings.severity_weights()
        self.min_streak = self.settings.min_streak()
        self.applicability = load_applicability(self.settings.get_value("enumeration/applicability_file"))

    def run(self, findings: list[Finding], scheme: PeriodScheme, anchor: date) -> list[PeriodReport]:
        """
        Buckets, links and measures the findings, period by period.

        Args:
            findings: Parsed findings in record order.
            scheme: Quarterly or semi-annual periods.
            anchor: First day of a month the period grid is aligned to.

        Returns:
            One report per period, ordered by period start, each annotated
            with the chronic issues covering it.
        """
        self.buckets = assign_periods(findings, scheme, anchor)
        # One overlay for every finding; finding IDs must be unique across periods.
        overlay = link_findings(self.model, self.catalog, findings)
        self.linked_sets = {period: _within(overlay, period) for period in self.buckets}

        reports = [build_period_report(self.model, self.catalog, linked, period, self.weights)
                   for period, linked in self.linked_sets.items()]
        self.trend = build_trend_report(reports, self.min_streak)
        self.period_reports = with_chronic_issues(reports, self.trend.chronic_issues)

        # Feed every period's evidence back into the model, oldest first.
        feedback = self.model
        for linked in self.linked_sets.values():
            feedback = apply_feedback(feedback, linked, self.catalog)
        self.feedback_model = feedback

        logger.info("Analyzed %d finding(s) over %d period(s); %d chronic issue(s)",
                    len(findings), len(reports), len(self.trend.chronic_issues))
        return self.period_reports

    @property
    def quarantined_count(self) -> int:
        return sum(len(linked.quarantined) for linked in self.linked_sets.values())


def _within(overlay: LinkedSet, period: Period) -> LinkedSet:
    return LinkedSet(
        linked=tuple(lf for lf in overlay.linked if period.contains(lf.finding.submitted)),
        quarantined=tuple(q for q in overlay.quarantined if period.contains(q.finding.submitted)),
        excluded=tuple(f for f in overlay.excluded if period.contains(f.submitted)),
    )
