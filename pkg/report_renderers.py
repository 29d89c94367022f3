import json
import logging
from dataclasses import dataclass
from datetime import date

from errors import ConfigError, InputSyntaxError, InvalidModel, SchemaError
from feedback_metrics import (AccuracyStats, ChronicIssue, IdTables, PeriodReport, QuarantineEntry,
                              TrendReport)
from findings import Period
from settings_manager import DEFAULT_SETTINGS, PALETTE_KEYS
from threat_enums import DiagnosticLevel, ElementKind, PeriodScheme, RenderFormat, Validity
from threat_model import Diagnostic, ThreatModel, validate_model

logger = logging.getLogger(__name__)

ID_TABLE_TITLES = (
    ("assets", "Assets"),
    ("actors", "Threat Actors"),
    ("controls", "Security Controls"),
    ("swc", "SWC Registry"),
    ("scsvs", "SCSVS"),
)

NODE_SHAPES = {
    ElementKind.EXTERNAL_ENTITY: "box",
    ElementKind.PROCESS: "ellipse",
    ElementKind.DATA_STORE: "cylinder",
}


@dataclass(frozen=True)
class RenderOptions:
    """
    Output selection for `render`.

    Attributes:
        format: json, md or dot. dot needs a ThreatModel next to the report.
        include_quarantine: Append quarantined findings to Markdown output.
        id_tables: Emit the five ID/Description tables in Markdown output.
    """
    format: RenderFormat = RenderFormat.JSON
    include_quarantine: bool = False
    id_tables: bool = True


def format_number(value) -> str:
    """Integral values without a decimal point, others to at most 4 places."""
    number = float(value)
    if number.is_integer():
        return str(int(number))
    return f"{number:.4f}".rstrip("0").rstrip(".")


# ============================================================
# JSON
# ============================================================

def _period_to_dict(period: Period) -> dict:
    return {"label": period.label, "start": period.start.isoformat(), "end": period.end.isoformat(),
            "scheme": period.scheme.label}


def _period_from_dict(raw: dict) -> Period:
    return Period(raw["label"], date.fromisoformat(raw["start"]), date.fromisoformat(raw["end"]),
                  PeriodScheme.from_label(raw["scheme"]))


def _chronic_to_dict(issue: ChronicIssue) -> dict:
    return {"swc_id": issue.swc_id, "streak_length": issue.streak_length, "periods": list(issue.periods)}


def _chronic_from_dict(raw: dict) -> ChronicIssue:
    return ChronicIssue(raw["swc_id"], raw["streak_length"], tuple(raw["periods"]))


def _diagnostic_to_dict(d: Diagnostic) -> dict:
    return {"level": d.level.value, "rule": d.rule, "subject_id": d.subject_id, "message": d.message}


def report_to_dict(report: PeriodReport | TrendReport) -> dict:
    """Plain-JSON form of a report; section numbers become string keys."""
    if isinstance(report, TrendReport):
        return {
            "report_type": "trend",
            "model_id": report.model_id,
            "catalog_version": report.catalog_version,
            "period_labels": list(report.period_labels),
            "swc_series": {k: list(v) for k, v in report.swc_series.items()},
            "score_series": {k: list(v) for k, v in report.score_series.items()},
            "precision_series": list(report.precision_series),
            "recall_series": list(report.recall_series),
            "min_streak": report.min_streak,
            "chronic_issues": [_chronic_to_dict(i) for i in report.chronic_issues],
        }
    accuracy = report.model_accuracy
    return {
        "report_type": "period",
        "model_id": report.model_id,
        "catalog_version": report.catalog_version,
        "period": _period_to_dict(report.period),
        "asset_counts": dict(report.asset_counts),
        "asset_scores": dict(report.asset_scores),
        "category_freq_swc": dict(report.category_freq_swc),
        "category_freq_scsvs_section": {str(k): v for k, v in report.category_freq_scsvs_section.items()},
        "model_accuracy": {
            "predicted": accuracy.predicted,
            "confirmed_by_findings": accuracy.confirmed_by_findings,
            "uncovered_findings": accuracy.uncovered_findings,
            "precision": accuracy.precision,
            "recall": accuracy.recall,
            "overlooked_subjects": list(accuracy.overlooked_subjects),
        },
        "control_gaps": dict(report.control_gaps),
        "team_breakdown": {team: dict(h) for team, h in report.team_breakdown.items()},
        "priority_ranking": list(report.priority_ranking),
        "actor_exposure": dict(report.actor_exposure),
        "untargeted_findings": report.untargeted_findings,
        "triage_counts": dict(report.triage_counts),
        "id_tables": {
            name: [{"id": i, "description": d} for i, d in getattr(report.id_tables, name)]
            for name, _ in ID_TABLE_TITLES
        },
        "quarantine": [
            {"finding_id": q.finding_id, "diagnostics": [_diagnostic_to_dict(d) for d in q.diagnostics]}
            for q in report.quarantine
        ],
        "chronic_issues": [_chronic_to_dict(i) for i in report.chronic_issues],
    }


def report_from_dict(raw: dict) -> PeriodReport | TrendReport:
    """
    Inverse of `report_to_dict`.

    Raises:
        SchemaError: If a required key is missing or the report type is unknown.
    """
    try:
        kind = raw["report_type"]
        if kind == "trend":
            return TrendReport(
                model_id=raw["model_id"],
                catalog_version=raw["catalog_version"],
                period_labels=tuple(raw["period_labels"]),
                swc_series={k: tuple(v) for k, v in raw["swc_series"].items()},
                score_series={k: tuple(v) for k, v in raw["score_series"].items()},
                precision_series=tuple(raw["precision_series"]),
                recall_series=tuple(raw["recall_series"]),
                min_streak=raw["min_streak"],
                chronic_issues=tuple(_chronic_from_dict(i) for i in raw["chronic_issues"]),
            )
        if kind != "period":
            raise SchemaError(f"unknown report_type {kind!r}", path="report_type")
        acc = raw["model_accuracy"]
        return PeriodReport(
            period=_period_from_dict(raw["period"]),
            model_id=raw["model_id"],
            catalog_version=raw["catalog_version"],
            asset_counts=dict(raw["asset_counts"]),
            asset_scores=dict(raw["asset_scores"]),
            category_freq_swc=dict(raw["category_freq_swc"]),
            category_freq_scsvs_section={int(k): v for k, v in raw["category_freq_scsvs_section"].items()},
            model_accuracy=AccuracyStats(
                acc["predicted"], acc["confirmed_by_findings"], acc["uncovered_findings"],
                acc["precision"], acc["recall"], tuple(acc["overlooked_subjects"]),
            ),
            control_gaps=dict(raw["control_gaps"]),
            team_breakdown={team: dict(h) for team, h in raw["team_breakdown"].items()},
            priority_ranking=tuple(raw["priority_ranking"]),
            actor_exposure=dict(raw["actor_exposure"]),
            untargeted_findings=raw["untargeted_findings"],
            triage_counts=dict(raw["triage_counts"]),
            id_tables=IdTables(**{
                name: tuple((row["id"], row["description"]) for row in raw["id_tables"][name])
                for name, _ in ID_TABLE_TITLES
            }),
            quarantine=tuple(
                QuarantineEntry(q["finding_id"], tuple(
                    Diagnostic(DiagnosticLevel(d["level"]), d["rule"], d["subject_id"], d["message"])
                    for d in q["diagnostics"]
                ))
                for q in raw["quarantine"]
            ),
            chronic_issues=tuple(_chronic_from_dict(i) for i in raw["chronic_issues"]),
        )
    except KeyError as e:
        raise SchemaError("missing required field", path=str(e.args[0])) from e


def render_json(report: PeriodReport | TrendReport) -> bytes:
    """
    Canonical JSON: keys sorted, two-space indent, ISO dates, trailing newline.

    Equal reports always render to identical bytes.
    """
    return (json.dumps(report_to_dict(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def parse_report_json(raw: bytes) -> PeriodReport | TrendReport:
    try:
        text = raw.decode("utf-8")
        doc = json.loads(text)
    except UnicodeDecodeError as e:
        raise InputSyntaxError(f"report is not valid UTF-8: {e.reason}", offset=e.start) from e
    except json.JSONDecodeError as e:
        raise InputSyntaxError(f"malformed report JSON: {e.msg}", offset=len(text[:e.pos].encode("utf-8"))) from e
    if not isinstance(doc, dict):
        raise SchemaError("report must be a JSON object")
    return report_from_dict(doc)


# ============================================================
# Markdown
# ============================================================

def _cell(value) -> str:
    return str(value).replace("|", "\\|").replace("\n", " ")


def _table(headers: list[str], rows: list) -> list[str]:
    lines = ["| " + " | ".join(headers) + " |", "| " + " | ".join("---" for _ in headers) + " |"]
    lines += ["| " + " | ".join(_cell(v) for v in row) + " |" for row in rows]
    return lines


class MarkdownRenderer:
    """
    Renders reports as CommonMark for the threat modelling session.

    Period reports follow a fixed section order: header, the five ID
    tables, priority ranking, accuracy, chronic issues, team breakdown,
    then the supporting histograms and (optionally) the quarantine list.
    """
    def render(self, report: PeriodReport | TrendReport, options: RenderOptions = RenderOptions()) -> str:
        if isinstance(report, TrendReport):
            lines = self._trend(report)
        else:
            lines = self._period(report, options)
        return "\n".join(lines).rstrip() + "\n"

    def _period(self, report: PeriodReport, options: RenderOptions) -> list[str]:
        period = report.period
        triage = ", ".join(f"{v.value} {report.triage_counts.get(v.value, 0)}" for v in Validity)
        lines = [
            f"# Threat Model Feedback: {period.label}",
            "",
            f"- Model: `{report.model_id}`",
            f"- Period: {period.start.isoformat()} to {period.end.isoformat()} ({period.scheme.label})",
            f"- Catalog: `{report.catalog_version}`",
            f"- Triage: {triage}; quarantined {len(report.quarantine)}",
            "",
        ]

        # --- 1. ID tables ---
        if options.id_tables:
            for name, title in ID_TABLE_TITLES:
                lines += [f"## {title}", ""]
                lines += _table(["ID", "Description"], getattr(report.id_tables, name))
                lines.append("")

        # --- 2. Priority ranking ---
        lines += ["## Priority Ranking", ""]
        lines += _table(["Rank", "Subject", "Findings", "Score"], [
            (rank, subject, report.asset_counts.get(subject, 0), format_number(report.asset_scores[subject]))
            for rank, subject in enumerate(report.priority_ranking, start=1)
        ])
        lines.append("")

        # --- 3. Accuracy ---
        acc = report.model_accuracy
        lines += ["## Model Accuracy", ""]
        lines += _table(["Metric", "Value"], [
            ("Predicted threats", acc.predicted),
            ("Confirmed by findings", acc.confirmed_by_findings),
            ("Uncovered finding pairs", acc.uncovered_findings),
            ("Precision", format_number(acc.precision)),
            ("Recall", format_number(acc.recall)),
        ])
        overlooked = ", ".join(acc.overlooked_subjects) or "none"
        lines += ["", f"Overlooked subjects: {overlooked}", ""]

        # --- 4. Chronic issues ---
        lines += ["## Chronic Issues", ""]
        lines += _table(["SWC", "Streak", "Periods"], [
            (i.swc_id, i.streak_length, ", ".join(i.periods)) for i in report.chronic_issues
        ])
        lines.append("")

        # --- 5. Team breakdown ---
        lines += ["## Team Breakdown", ""]
        lines += _table(["Team", "SWC", "Count"], [
            (team, swc_id, count)
            for team, histogram in report.team_breakdown.items()
            for swc_id, count in histogram.items()
        ])
        lines.append("")

        # --- 6. Supporting tables ---
        lines += ["## SWC Frequencies", ""]
        lines += _table(["SWC", "Count"], list(report.category_freq_swc.items()))
        lines += ["", "## SCSVS Section Frequencies", ""]
        lines += _table(["Section", "Count"], [(f"V{k}", v) for k, v in report.category_freq_scsvs_section.items()])
        lines += ["", "## Control Gaps", ""]
        lines += _table(["Control", "Gaps"], list(report.control_gaps.items()))
        lines += ["", "## Threat Actor Exposure", ""]
        lines += _table(["Actor", "Findings on targets"], list(report.actor_exposure.items()))
        lines += ["", f"Findings on untargeted subjects: {report.untargeted_findings}", ""]

        if options.include_quarantine:
            lines += ["## Quarantine", ""]
            lines += _table(["Finding", "Rule", "Message"], [
                (q.finding_id, d.rule, d.message) for q in report.quarantine for d in q.diagnostics
            ])
            lines.append("")
        return lines

    def _trend(self, report: TrendReport) -> list[str]:
        labels = list(report.period_labels)
        lines = [f"# Threat Model Feedback Trend: {report.model_id}", "",
                 f"- Periods: {', '.join(labels) or 'none'}",
                 f"- Catalog: `{report.catalog_version}`",
                 f"- Chronic threshold: {report.min_streak} consecutive periods", "",
                 "## SWC Counts per Period", ""]
        lines += _table(["SWC", *labels], [(swc, *counts) for swc, counts in report.swc_series.items()])
        lines += ["", "## Accuracy per Period", ""]
        lines += _table(["Period", "Precision", "Recall"], [
            (label, format_number(p), format_number(r))
            for label, p, r in zip(labels, report.precision_series, report.recall_series)
        ])
        lines += ["", "## Chronic Issues", ""]
        lines += _table(["SWC", "Streak", "Periods"], [
            (i.swc_id, i.streak_length, ", ".join(i.periods)) for i in report.chronic_issues
        ])
        return lines


def render_markdown(report: PeriodReport | TrendReport, options: RenderOptions = RenderOptions()) -> str:
    return MarkdownRenderer().render(report, options)


# ============================================================
# DOT
# ============================================================

def _escape(text) -> str:
    """Escapes text for a DOT quoted string; raw line breaks become the `\\n` escape."""
    text = str(text).replace("\\", "\\\\").replace('"', '\\"')
    return text.replace("\r\n", "\\n").replace("\r", "\\n").replace("\n", "\\n")


def _quote(text: str) -> str:
    return '"' + _escape(text) + '"'


def _label(*lines: str) -> str:
    """A quoted DOT label whose lines are joined by the DOT `\\n` escape."""
    return '"' + "\\n".join(_escape(l) for l in lines) + '"'


def _comment(text: str) -> str:
    """A `//` comment line; line breaks in the text become spaces."""
    return "// " + " ".join(str(text).splitlines())


class DiagramRenderer:
    """
    Emits the annotated data flow diagram as a Graphviz digraph.

    Element shapes follow common DFD conventions (external entity = box,
    process = ellipse, data store = cylinder). Subjects with findings get a
    `[n findings | score s]` suffix and an outline color picked from the
    palette by their score relative to the period's highest score.
    Every statement is emitted in ID order, so output is deterministic.
    """
    def __init__(self, palette=None, rankdir: str | None = None):
        self.palette = tuple(palette or (DEFAULT_SETTINGS[k] for k in PALETTE_KEYS))
        self.rankdir = rankdir or DEFAULT_SETTINGS["render/rankdir"]

    def _outline(self, subject: str, report: PeriodReport) -> str:
        if subject not in report.asset_scores:
            return ""
        top = max(report.asset_scores.values())
        ratio = report.asset_scores[subject] / top if top else 0
        bucket = min(int(ratio * len(self.palette)), len(self.palette) - 1)
        return f", color={_quote(self.palette[bucket])}, penwidth=2"

    @staticmethod
    def _suffix(subject: str, report: PeriodReport) -> str:
        if subject not in report.asset_counts:
            return ""
        return f" [{report.asset_counts[subject]} findings | score {format_number(report.asset_scores[subject])}]"

    def render(self, model: ThreatModel, report: PeriodReport | None = None) -> str:
        errors = [d for d in validate_model(model) if d.is_error]
        if errors:
            raise InvalidModel(errors)
        report = report or PeriodReport(period=Period("-", date.min, date.max, PeriodScheme.QUARTERLY),
                                        model_id=model.model_id, catalog_version="")
        element_ids = model.element_ids

        lines = [_comment(f"Threat model {model.model_id} ({model.name}) version {model.version}")]
        if report.period.label != "-":
            lines.append(_comment(f"Period {report.period.label}, catalog {report.catalog_version}"))
        lines += [f"digraph {_quote(model.model_id)} {{", f"  rankdir={self.rankdir};",
                  '  node [fontname="Helvetica"];']

        # --- 1. Elements ---
        for element in sorted(model.elements, key=lambda e: e.id):
            label = _label(element.name, f"({element.id}){self._suffix(element.id, report)}")
            lines.append(f"  {_quote(element.id)} [shape={NODE_SHAPES[element.kind]}, label={label}"
                         f"{self._outline(element.id, report)}];")

        # --- 2. Trust boundaries ---
        for boundary in sorted(model.boundaries, key=lambda b: b.id):
            lines.append(f"  subgraph {_quote('cluster_' + boundary.id)} {{")
            lines.append(f"    label={_label(boundary.name, f'({boundary.id})')};")
            lines.append("    style=dashed;")
            for member in sorted(set(boundary.members)):
                lines.append(f"    {_quote(member)};")
            lines.append("  }")

        # --- 3. Data flows ---
        for flow in sorted(model.flows, key=lambda f: f.id):
            text = f"{flow.id} {flow.label}".strip() + self._suffix(flow.id, report)
            lines.append(f"  {_quote(flow.source)} -> {_quote(flow.target)} [label={_label(text)}"
                         f"{self._outline(flow.id, report)}];")

        # --- 4. Threat actors and security controls ---
        for actor in sorted(model.actors, key=lambda a: a.id):
            lines.append(f"  {_quote(actor.id)} [shape=octagon, label={_label(actor.name, f'({actor.id})')}];")
            for target in sorted(set(actor.targets) & element_ids):
                lines.append(f"  {_quote(actor.id)} -> {_quote(target)} [style=dashed, arrowhead=vee];")
        for control in sorted(model.controls, key=lambda c: c.id):
            gaps = report.control_gaps.get(control.id)
            extra = [f"gaps: {gaps}"] if gaps else []
            lines.append(f"  {_quote(control.id)} [shape=note, label={_label(control.name, f'({control.id})', *extra)}];")
            for target in sorted(set(control.protects) & element_ids):
                lines.append(f"  {_quote(control.id)} -> {_quote(target)} [style=dotted, arrowhead=none];")

        lines.append("}")
        missing = set(report.asset_counts) - model.subject_ids
        if missing:
            logger.warning("Report subjects not in model %s: %s", model.model_id, ", ".join(sorted(missing)))
        return "\n".join(lines) + "\n"


def render_dot(model: ThreatModel, report: PeriodReport | None = None, palette=None,
               rankdir: str | None = None) -> str:
    """
    Renders the annotated diagram.

    Raises:
        InvalidModel: If the model has validation errors.
    """
    return DiagramRenderer(palette, rankdir).render(model, report)


def render(report: PeriodReport | TrendReport, options: RenderOptions, model: ThreatModel | None = None,
           palette=None, rankdir: str | None = None) -> bytes:
    """
    Renders a report in the format `options` selects.

    Raises:
        ConfigError: For dot output without a model, or a trend report as dot.
    """
    if options.format is RenderFormat.JSON:
        return render_json(report)
    if options.format is RenderFormat.MARKDOWN:
        return render_markdown(report, options).encode("utf-8")
    if model is None:
        raise ConfigError("dot output needs a threat model alongside the report")
    if isinstance(report, TrendReport):
        raise ConfigError("dot output needs a period report, not a trend report")
    return render_dot(model, report, palette, rankdir).encode("utf-8")
