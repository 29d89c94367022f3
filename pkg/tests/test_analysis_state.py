import json
from datetime import date

import pytest

from analysis_state import AnalysisState
from errors import EmptyInput, InvalidModel
from findings import Finding
from settings_manager import SettingsManager
from threat_enums import ElementKind, PeriodScheme, ProgramVariant, Severity, ThreatStatus, Validity
from threat_model import DataFlow, Element, ThreatModel


def test_state_enumerates_the_model(token_vault_model):
    state = AnalysisState(token_vault_model)
    assert len(state.model.threats) == 21
    assert state.feedback_model is None


def test_invalid_model_is_refused():
    model = ThreatModel("M1", "bad", "1", (Element("A01", "a", ElementKind.PROCESS),),
                        (DataFlow("F01", "A01", "A99"),))
    with pytest.raises(InvalidModel):
        AnalysisState(model)


def test_two_quarter_run(token_vault_model, two_quarter_findings):
    state = AnalysisState(token_vault_model)
    reports = state.run(two_quarter_findings, PeriodScheme.QUARTERLY, date(2021, 1, 1))

    assert [r.period.label for r in reports] == ["2021-Q1", "2021-Q2"]
    assert state.trend.period_labels == ("2021-Q1", "2021-Q2")
    assert [i.swc_id for i in reports[1].chronic_issues] == ["SWC-107"]
    assert state.quarantined_count == 0

    confirmed = {t.pair for t in state.feedback_model.threats if t.status is ThreatStatus.CONFIRMED}
    assert len(confirmed) == 3
    assert all(t.status is ThreatStatus.PREDICTED for t in state.model.threats)


def test_settings_change_the_scores(tmp_path, token_vault_model, token_vault_findings):
    path = tmp_path / "settings.json"
    path.write_text(json.dumps({"weights/critical": 100}))
    state = AnalysisState(token_vault_model, settings=SettingsManager(path))
    [report] = state.run(token_vault_findings, PeriodScheme.QUARTERLY, date(2021, 1, 1))
    assert report.asset_scores["A03"] == 100


def test_reloading_settings(token_vault_model, token_vault_findings):
    settings = SettingsManager()
    state = AnalysisState(token_vault_model, settings=settings)
    settings.set_value("chronic/min_streak", 3)
    state.load_metric_settings()
    state.run(token_vault_findings, PeriodScheme.SEMI_ANNUAL, date(2021, 1, 1))
    assert state.trend.min_streak == 3


def test_run_needs_findings(token_vault_model):
    with pytest.raises(EmptyInput):
        AnalysisState(token_vault_model).run([], PeriodScheme.QUARTERLY, date(2021, 1, 1))


def test_duplicate_ids_are_caught_across_periods(token_vault_model):
    def finding(day):
        return Finding("BB-1", day, Severity.HIGH, "t", ProgramVariant.OPEN_ENDED, Validity.VALID,
                       swc_tags=("SWC-107",), linked_subjects=("A02",))

    state = AnalysisState(token_vault_model)
    reports = state.run([finding(date(2021, 2, 1)), finding(date(2021, 5, 1))], PeriodScheme.QUARTERLY,
                        date(2021, 1, 1))
    assert reports[0].quarantine == ()
    assert [q.diagnostics[0].rule for q in reports[1].quarantine] == ["dup-finding-id"]
    assert state.quarantined_count == 1
