import random
import re
from datetime import date
from pathlib import Path

import pytest

from errors import ConfigError, InputSyntaxError, InvalidModel, SchemaError
from feedback_metrics import (AccuracyStats, ChronicIssue, IdTables, PeriodReport, QuarantineEntry, TrendReport,
                              build_period_report)
from findings import link_findings, period_for
from report_renderers import (RenderOptions, format_number, parse_report_json, render, render_dot, render_json,
                              render_markdown)
from threat_enums import DiagnosticLevel, ElementKind, PeriodScheme, RenderFormat
from threat_model import DataFlow, Diagnostic, Element, ThreatModel, enumerate_threats

GOLDEN = Path(__file__).resolve().parent / "golden"
Q1_2021 = period_for(date(2021, 1, 1), PeriodScheme.QUARTERLY, 0)
TOKEN_VAULT_IDS = ["A01", "A02", "A03", "TA01", "TA02", "TA03", "C01", "C02", "C03",
               "SWC-135", "SWC-136", "SWC-134", "V5.3", "V6.2", "V13.5"]


@pytest.fixture
def token_vault_report(token_vault_model, token_vault_findings, catalog):
    model = token_vault_model.with_threats(enumerate_threats(token_vault_model))
    return build_period_report(model, catalog, link_findings(model, catalog, token_vault_findings), Q1_2021)


def _random_period_report(rng: random.Random) -> PeriodReport:
    subjects = [f"A{i:02d}" for i in range(1, rng.randint(1, 5))]
    swc = [f"SWC-{rng.randint(100, 136)}" for _ in range(rng.randint(0, 3))]
    scores = {s: rng.choice([rng.randint(1, 50), rng.random() * 50]) for s in subjects}
    counts = {s: rng.randint(1, 9) for s in subjects}
    diagnostics = tuple(Diagnostic(DiagnosticLevel.ERROR, "unknown-tag", f"BB-{i}", "unknown taxonomy tag 'x'")
                        for i in range(rng.randint(0, 2)))
    return PeriodReport(
        period=period_for(date(2021, 1, 1), rng.choice(list(PeriodScheme)), rng.randint(-3, 3)),
        model_id=f"M{rng.randint(1, 9)}",
        catalog_version="v",
        asset_counts=counts,
        asset_scores=scores,
        category_freq_swc={s: rng.randint(1, 4) for s in sorted(swc)},
        category_freq_scsvs_section={n: rng.randint(1, 4) for n in sorted(rng.sample(range(1, 15), 2))},
        model_accuracy=AccuracyStats(rng.randint(0, 30), rng.randint(0, 5), rng.randint(0, 5), rng.random(),
                                     rng.random(), tuple(subjects[:1])),
        control_gaps={"C01": rng.randint(0, 3)},
        team_breakdown={"core": {s: 1 for s in sorted(swc)}},
        priority_ranking=tuple(subjects),
        actor_exposure={"TA01": rng.randint(0, 3)},
        untargeted_findings=rng.randint(0, 3),
        triage_counts={"Valid": 1, "Invalid": 0, "Duplicate": rng.randint(0, 2)},
        id_tables=IdTables(assets=tuple((s, f"name {s}") for s in subjects),
                           swc=tuple((f"SW{i + 1:02d}", s) for i, s in enumerate(swc))),
        quarantine=(QuarantineEntry("BB-9", diagnostics),) if diagnostics else (),
        chronic_issues=(ChronicIssue("SWC-107", 2, ("2021-Q1", "2021-Q2")),) if rng.random() < 0.5 else (),
    )


# --- JSON ---

def test_empty_report_matches_golden_file():
    report = PeriodReport(period=Q1_2021, model_id="M1", catalog_version="test-1")
    assert render_json(report) == (GOLDEN / "empty_period_report.json").read_bytes()


def test_rendering_is_deterministic(token_vault_report):
    assert render_json(token_vault_report) == render_json(token_vault_report)
    assert render_json(token_vault_report).endswith(b"}\n")


def test_report_json_round_trip(token_vault_report):
    assert parse_report_json(render_json(token_vault_report)) == token_vault_report


def test_generated_reports_round_trip():
    rng = random.Random(5)
    for _ in range(200):
        report = _random_period_report(rng)
        parsed = parse_report_json(render_json(report))
        assert parsed == report
        assert render_json(parsed) == render_json(report)


def test_trend_report_round_trip():
    trend = TrendReport(model_id="M1", catalog_version="v", period_labels=("2021-Q1", "2021-Q2"),
                        swc_series={"SWC-107": (1, 2)}, score_series={"A02": (5, 7.5)},
                        precision_series=(0.25, 0.5), recall_series=(1.0, 0.75), min_streak=2,
                        chronic_issues=(ChronicIssue("SWC-107", 2, ("2021-Q1", "2021-Q2")),))
    assert parse_report_json(render_json(trend)) == trend
    assert b'"report_type": "trend"' in render_json(trend)


def test_parse_report_errors():
    with pytest.raises(InputSyntaxError):
        parse_report_json(b'{"report_type": ')
    with pytest.raises(SchemaError):
        parse_report_json(b'{"report_type": "period"}')
    with pytest.raises(SchemaError):
        parse_report_json(b'{"report_type": "weekly"}')
    with pytest.raises(SchemaError):
        parse_report_json(b'[]')


# --- Markdown ---

def test_markdown_contains_every_token_vault_id(token_vault_report):
    text = render_markdown(token_vault_report)
    for entity_id in TOKEN_VAULT_IDS:
        assert entity_id in text
    assert text.count("| ID | Description |") == 5


def test_markdown_sections_are_ordered(token_vault_report):
    text = render_markdown(token_vault_report)
    headings = ["# Threat Model Feedback: 2021-Q1", "## Assets", "## Threat Actors", "## Security Controls",
                "## SWC Registry", "## SCSVS", "## Priority Ranking", "## Model Accuracy", "## Chronic Issues",
                "## Team Breakdown"]
    positions = [text.index(h) for h in headings]
    assert positions == sorted(positions)


def test_markdown_ranking_and_accuracy(token_vault_report):
    text = render_markdown(token_vault_report)
    assert "| 1 | A03 | 1 | 10 |" in text
    assert "| 2 | A02 | 2 | 7 |" in text
    assert "| Precision | 0.1429 |" in text
    assert "| SW01 | SWC-135 |" in text


def test_markdown_options():
    diagnostic = Diagnostic(DiagnosticLevel.ERROR, "unknown-subject", "BB-7", "subject 'A99' is not in the model")
    report = PeriodReport(period=Q1_2021, model_id="M1", catalog_version="v",
                          quarantine=(QuarantineEntry("BB-7", (diagnostic,)),))
    assert "## Quarantine" not in render_markdown(report)
    text = render_markdown(report, RenderOptions(RenderFormat.MARKDOWN, include_quarantine=True, id_tables=False))
    assert "| BB-7 | unknown-subject |" in text
    assert "## Assets" not in text
    assert "quarantined 1" in text


def test_markdown_escapes_pipes():
    report = PeriodReport(period=Q1_2021, model_id="M1", catalog_version="v",
                          id_tables=IdTables(assets=(("A01", "read|write store"),)))
    assert "| A01 | read\\|write store |" in render_markdown(report)


def test_trend_markdown():
    trend = TrendReport(model_id="M1", catalog_version="v", period_labels=("2021-Q1", "2021-Q2"),
                        swc_series={"SWC-107": (1, 2)}, precision_series=(0.25, 0.5), recall_series=(1.0, 0.75))
    text = render_markdown(trend)
    assert "| SWC | 2021-Q1 | 2021-Q2 |" in text
    assert "| SWC-107 | 1 | 2 |" in text
    assert "| 2021-Q2 | 0.5 | 0.75 |" in text


# --- DOT ---

def _looks_like_dot(text: str) -> bool:
    """Minimal grammar check: one digraph, balanced braces, closed strings, terminated statements."""
    body = [l.strip() for l in text.splitlines() if l.strip() and not l.strip().startswith("//")]
    if not re.fullmatch(r'digraph "[^"]*" \{', body[0]) or body[-1] != "}":
        return False
    depth = 0
    for line in body:
        if line.replace('\\"', "").count('"') % 2:
            return False
        depth += line.count("{") - line.count("}")
        if depth < 0:
            return False
        if line not in ("}",) and not line.endswith(("{", ";")):
            return False
    return depth == 0


def test_token_vault_dot(token_vault_model, token_vault_report):
    text = render_dot(token_vault_model, token_vault_report)
    assert text.startswith("// Threat model M-VAULT")
    assert _looks_like_dot(text)
    assert '"A01" [shape=box' in text
    assert '"A02" [shape=ellipse' in text
    assert '"A03" [shape=cylinder' in text
    assert 'subgraph "cluster_B01" {' in text
    assert '"A01" -> "A02" [label="F01 deposit"' in text
    assert "[2 findings | score 7]" in text
    assert '"TA01" [shape=octagon' in text
    assert '"C01" [shape=note' in text
    assert "gaps: 2" in text


def test_highest_score_gets_most_severe_color(token_vault_model, token_vault_report):
    lines = render_dot(token_vault_model, token_vault_report, palette=("#000001", "#000002", "#000003", "#000004")).splitlines()
    [a03] = [l for l in lines if l.strip().startswith('"A03" [')]
    [a02] = [l for l in lines if l.strip().startswith('"A02" [')]
    assert 'color="#000004"' in a03
    assert 'color="#000003"' in a02


def test_dot_is_deterministic_and_ordered(token_vault_model, token_vault_report):
    shuffled = ThreatModel(token_vault_model.model_id, token_vault_model.name, token_vault_model.version,
                           tuple(reversed(token_vault_model.elements)), tuple(reversed(token_vault_model.flows)),
                           token_vault_model.boundaries, tuple(reversed(token_vault_model.actors)),
                           token_vault_model.controls, token_vault_model.threats)
    assert render_dot(shuffled, token_vault_report) == render_dot(token_vault_model, token_vault_report)


def test_empty_model_dot_skeleton():
    text = render_dot(ThreatModel("M1", "empty", "1"))
    assert text.startswith("// Threat model M1")
    assert 'digraph "M1" {' in text
    assert "->" not in text
    assert _looks_like_dot(text)


def test_dot_escapes_quotes():
    model = ThreatModel("M1", "q", "1", (Element("A01", 'the "admin"', ElementKind.PROCESS),),
                        (DataFlow("F01", "A01", "A01"),))
    text = render_dot(model)
    assert 'the \\"admin\\"' in text
    assert _looks_like_dot(text)


def test_dot_refuses_invalid_model():
    model = ThreatModel("M1", "bad", "1", (Element("A01", "a", ElementKind.PROCESS),),
                        (DataFlow("F01", "A01", "A99"),))
    with pytest.raises(InvalidModel):
        render_dot(model)


# --- render dispatch ---

def test_render_dispatch(token_vault_model, token_vault_report):
    assert render(token_vault_report, RenderOptions(RenderFormat.JSON)) == render_json(token_vault_report)
    assert render(token_vault_report, RenderOptions(RenderFormat.MARKDOWN)).startswith(b"# Threat Model Feedback")
    assert render(token_vault_report, RenderOptions(RenderFormat.DOT), token_vault_model).startswith(b"// Threat model")


def test_dot_needs_a_model_and_a_period_report(token_vault_model, token_vault_report):
    with pytest.raises(ConfigError):
        render(token_vault_report, RenderOptions(RenderFormat.DOT))
    with pytest.raises(ConfigError):
        render(TrendReport("M1", "v"), RenderOptions(RenderFormat.DOT), token_vault_model)


@pytest.mark.parametrize("value, text", [(7, "7"), (7.0, "7"), (7.5, "7.5"), (3 / 21, "0.1429")])
def test_format_number(value, text):
    assert format_number(value) == text


def test_dot_rankdir(token_vault_model):
    assert "rankdir=LR;" in render_dot(token_vault_model)
    assert "rankdir=TB;" in render_dot(token_vault_model, rankdir="TB")


def test_dot_survives_line_breaks_in_names():
    model = ThreatModel("M1", "vault\nmain", "1\r\n2", (Element("A01", "p\nq", ElementKind.PROCESS),),
                        (DataFlow("F01", "A01", "A01", "in\nout"),))
    text = render_dot(model)
    assert _looks_like_dot(text)
    assert text.splitlines()[0] == "// Threat model M1 (vault main) version 1 2"
    assert '"p\\nq\\n(A01)"' in text


def test_dot_output_ignores_markdown_options(token_vault_model, token_vault_report):
    expected = render_dot(token_vault_model, token_vault_report, rankdir="TB").encode("utf-8")
    for quarantine in (True, False):
        options = RenderOptions(RenderFormat.DOT, include_quarantine=quarantine)
        assert render(token_vault_report, options, token_vault_model, rankdir="TB") == expected
