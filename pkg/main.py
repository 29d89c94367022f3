import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path

from analysis_state import AnalysisState
from bounty_sim import DEFAULT_DAILY_RATE, SimConfig, simulate
from data_loader import load_findings, load_model, serialize_findings, serialize_model, threat_to_dict
from errors import (CatalogError, ConfigError, EmptyInput, InputSyntaxError, InvalidModel, SchemaError,
                    ThreatLoopError)
from report_renderers import RenderOptions, parse_report_json, render
from settings_manager import SettingsManager
from threat_enums import ExitCode, PeriodScheme, RenderFormat, parse_enum
from threat_model import enumerate_threats, load_applicability, validate_model

logger = logging.getLogger("threatloop")


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with BAD_ARGUMENTS instead of 2."""
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ExitCode.BAD_ARGUMENTS.value, f"{self.prog}: error: {message}\n")


def _scheme(raw: str) -> PeriodScheme:
    try:
        return PeriodScheme.from_label(raw)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _render_format(raw: str) -> RenderFormat:
    try:
        return parse_enum(RenderFormat, raw)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _iso_date(raw: str) -> date:
    try:
        return date.fromisoformat(raw)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {raw!r}") from e


def _print_diagnostics(diagnostics):
    for diagnostic in diagnostics:
        print(diagnostic.format_line(), file=sys.stderr)


# --- Commands ---

def cmd_validate(args, settings: SettingsManager) -> int:
    diagnostics = validate_model(load_model(args.model))
    _print_diagnostics(diagnostics)
    if any(d.is_error for d in diagnostics):
        return ExitCode.VALIDATION_ERRORS.value
    if args.strict and diagnostics:
        return ExitCode.VALIDATION_ERRORS.value
    return ExitCode.SUCCESS.value


def cmd_enumerate(args, settings: SettingsManager) -> int:
    model = load_model(args.model)
    applicability = load_applicability(settings.get_value("enumeration/applicability_file"))
    threats = enumerate_threats(model, applicability)
    text = json.dumps([threat_to_dict(t) for t in threats], indent=2, ensure_ascii=False) + "\n"
    Path(args.out).write_text(text, encoding="utf-8")
    logger.info("Wrote %d threat(s) to %s", len(threats), args.out)
    return ExitCode.SUCCESS.value


def cmd_analyze(args, settings: SettingsManager) -> int:
    state = AnalysisState(load_model(args.model), settings=settings)
    findings = load_findings(args.findings)
    if not findings:
        raise EmptyInput(f"{args.findings} contains no findings")
    reports = state.run(findings, args.scheme, args.anchor)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for report in reports:
        (out_dir / f"report-{report.period.label}.json").write_bytes(render(report, RenderOptions()))
        for entry in report.quarantine:
            for diagnostic in entry.diagnostics:
                logger.warning("Quarantined %s", diagnostic.format_line())
    (out_dir / "trend.json").write_bytes(render(state.trend, RenderOptions()))
    (out_dir / "model-feedback.json").write_bytes(serialize_model(state.feedback_model))
    logger.info("Wrote %d period report(s) to %s", len(reports), out_dir)
    return ExitCode.SUCCESS.value


def cmd_render(args, settings: SettingsManager) -> int:
    report = parse_report_json(Path(args.report).read_bytes())
    model = load_model(args.model) if args.model else None
    options = RenderOptions(format=args.format, include_quarantine=args.include_quarantine,
                            id_tables=not args.no_id_tables)
    if options.format is RenderFormat.DOT and model is None:
        raise ConfigError("--format dot requires --model")
    Path(args.out).write_bytes(render(report, options, model, settings.palette(),
                                            settings.get_value("render/rankdir")))
    return ExitCode.SUCCESS.value


def cmd_simulate(args, settings: SettingsManager) -> int:
    model = load_model(args.model)
    config = SimConfig(daily_rate=args.rate, duration_days=args.days, seed=args.seed)
    findings = simulate(config, model)
    fmt = "csv" if Path(args.out).suffix.lower() == ".csv" else "jsonl"
    Path(args.out).write_bytes(serialize_findings(findings, fmt))
    return ExitCode.SUCCESS.value


def setup_main_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="threatloop",
                            description="Feed bug bounty findings back into STRIDE threat models.")
    parser.add_argument("--settings", help="JSON settings file overriding the defaults")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a threat model's structure")
    p.add_argument("--model", required=True)
    p.add_argument("--strict", action="store_true", help="treat warnings as failures")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("enumerate", help="list STRIDE-per-element threats")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_enumerate)

    p = sub.add_parser("analyze", help="compute per-period feedback reports")
    p.add_argument("--model", required=True)
    p.add_argument("--findings", required=True, help=".jsonl, .csv or .parquet")
    p.add_argument("--scheme", type=_scheme, required=True, help="quarterly or semiannual")
    p.add_argument("--anchor", type=_iso_date, required=True, help="first day of the period grid, YYYY-MM-DD")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("render", help="render a report as json, md or dot")
    p.add_argument("--report", required=True)
    p.add_argument("--model")
    p.add_argument("--format", type=_render_format, required=True, help="json, md or dot")
    p.add_argument("--out", required=True)
    p.add_argument("--include-quarantine", action="store_true")
    p.add_argument("--no-id-tables", action="store_true")
    p.set_defaults(handler=cmd_render)

    p = sub.add_parser("simulate", help="generate a synthetic findings stream")
    p.add_argument("--model", required=True)
    p.add_argument("--rate", type=float, default=DEFAULT_DAILY_RATE)
    p.add_argument("--days", type=int, default=365)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help=".jsonl or .csv")
    p.set_defaults(handler=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = setup_main_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code

    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)

    try:
        settings = SettingsManager(args.settings)
        return args.handler(args, settings)
    except InvalidModel as e:
        _print_diagnostics(e.diagnostics)
        return ExitCode.VALIDATION_ERRORS.value
    except EmptyInput as e:
        print(f"error: {e}", file=sys.stderr)
        return ExitCode.VALIDATION_ERRORS.value
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return ExitCode.BAD_ARGUMENTS.value
    except (OSError, InputSyntaxError, SchemaError, CatalogError, ThreatLoopError) as e:
        print(f"error: {e}", file=sys.stderr)
        return ExitCode.IO_OR_PARSE_FAILURE.value


if __name__ == '__main__':
    sys.exit(main())
