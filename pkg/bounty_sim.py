"""
Seeded synthetic bug bounty stream.

Arrivals follow a Poisson process with a constant daily mean; the defaults
match typical public program volumes of 0.429 valid reports per day
(about 156 a year) and 13 critical findings a year. The generator is numpy's
PCG64 seeded explicitly, so a (config, model) pair always yields the same
stream within one numpy release.
"""
import logging
import math
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from errors import ConfigError
from findings import Finding
from taxonomy import TaxonomyCatalog, load_catalog
from threat_enums import ProgramCategory, ProgramVariant, Severity, Validity
from threat_model import ThreatModel

logger = logging.getLogger(__name__)

DEFAULT_DAILY_RATE = 0.429
DEFAULT_CRITICAL_FRACTION = 13 / 156
DEFAULT_SEVERITY_SPLIT = {Severity.HIGH: 0.30, Severity.MEDIUM: 0.45, Severity.LOW: 0.25}
DISTRIBUTION_TOLERANCE = 1e-9
SEED_LIMIT = 2 ** 64


@dataclass(frozen=True)
class SimConfig:
    """
    Parameters of one simulated bounty program.

    Attributes:
        daily_rate: Mean valid reports per day, > 0.
        duration_days: Length of the simulated program in days, > 0.
        critical_fraction: Probability a finding is Critical, in [0, 1].
        severity_split: Distribution over High/Medium/Low for non-critical findings.
        swc_distribution: SWC ID → probability; None means uniform over the catalog.
        subject_distribution: Element/flow ID → probability; None means uniform
            over the model's elements.
        variant: Program variant recorded on every finding.
        seed: Generator seed in [0, 2**64).
        start_date: Submission date of day 0.
        teams: Owning-team labels, drawn uniformly; empty leaves findings unassigned.
        program_category: Optional provenance recorded on every finding.
    """
    daily_rate: float = DEFAULT_DAILY_RATE
    duration_days: int = 365
    critical_fraction: float = DEFAULT_CRITICAL_FRACTION
    severity_split: dict[Severity, float] = field(default_factory=lambda: dict(DEFAULT_SEVERITY_SPLIT))
    swc_distribution: dict[str, float] | None = None
    subject_distribution: dict[str, float] | None = None
    variant: ProgramVariant = ProgramVariant.OPEN_ENDED
    seed: int = 0
    start_date: date = date(2021, 1, 1)
    teams: tuple[str, ...] = ()
    program_category: ProgramCategory | None = None


def _check_distribution(name: str, distribution: dict) -> None:
    if not distribution:
        raise ConfigError(f"{name} must not be empty")
    for key, p in distribution.items():
        if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0 <= p <= 1:
            raise ConfigError(f"{name}[{key}] must be a probability, got {p!r}")
    total = math.fsum(distribution.values())
    if abs(total - 1) > DISTRIBUTION_TOLERANCE:
        raise ConfigError(f"{name} sums to {total!r}, expected 1")


def validate_config(config: SimConfig, model: ThreatModel, catalog: TaxonomyCatalog) -> None:
    """
    Checks every SimConfig precondition against a model and catalog.

    Raises:
        ConfigError: On the first violated constraint.
    """
    rate = config.daily_rate
    if isinstance(rate, bool) or not isinstance(rate, (int, float)) or not math.isfinite(rate) or rate <= 0:
        raise ConfigError(f"daily_rate must be > 0, got {rate!r}")
    days = config.duration_days
    if isinstance(days, bool) or not isinstance(days, int) or days <= 0:
        raise ConfigError(f"duration_days must be a positive integer, got {days!r}")
    if not 0 <= config.critical_fraction <= 1:
        raise ConfigError(f"critical_fraction must be in [0, 1], got {config.critical_fraction!r}")
    if isinstance(config.seed, bool) or not isinstance(config.seed, int) or not 0 <= config.seed < SEED_LIMIT:
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {config.seed!r}")

    if set(config.severity_split) != set(DEFAULT_SEVERITY_SPLIT):
        raise ConfigError("severity_split must cover exactly High, Medium and Low")
    _check_distribution("severity_split", config.severity_split)

    if config.swc_distribution is not None:
        _check_distribution("swc_distribution", config.swc_distribution)
        unknown = sorted(set(config.swc_distribution) - set(catalog.swc_entries))
        if unknown:
            raise ConfigError(f"swc_distribution names unknown SWC IDs: {', '.join(unknown)}")

    if config.subject_distribution is not None:
        _check_distribution("subject_distribution", config.subject_distribution)
        unknown = sorted(set(config.subject_distribution) - model.subject_ids)
        if unknown:
            raise ConfigError(f"subject_distribution names IDs not in the model: {', '.join(unknown)}")
    elif not model.elements:
        raise ConfigError(f"model {model.model_id} has no elements to link findings to")


def _uniform(keys) -> dict[str, float]:
    keys = sorted(keys)
    return {k: 1 / len(keys) for k in keys}


def _draw(rng: np.random.Generator, distribution: dict, size: int) -> list:
    keys = list(distribution)
    p = np.array([distribution[k] for k in keys], dtype=float)
    picks = rng.choice(len(keys), size=size, p=p / p.sum())
    return [keys[i] for i in picks]


def simulate(config: SimConfig, model: ThreatModel, catalog: TaxonomyCatalog | None = None) -> list[Finding]:
    """
    Generates a stream of Valid findings for `model`.

    Daily counts are Poisson with mean `daily_rate`. Every finding gets one
    SWC tag and one subject drawn from the configured distributions; dates
    run from `start_date` over `duration_days` days.

    Args:
        config: Simulation parameters.
        model: The threat model whose subjects findings link to.
        catalog: Taxonomy for SWC tags; the bundled catalog when omitted.

    Returns:
        Findings ordered by submission date, IDs BB-00001, BB-00002, ...

    Raises:
        ConfigError: If the config is invalid or refers to unknown IDs.
    """
    catalog = catalog or load_catalog()
    validate_config(config, model, catalog)
    rng = np.random.default_rng(config.seed)

    # --- 1. Arrivals ---
    daily_counts = rng.poisson(config.daily_rate, size=config.duration_days)
    days = np.repeat(np.arange(config.duration_days), daily_counts)
    total = int(days.size)

    # --- 2. Attributes ---
    critical = rng.random(total) < config.critical_fraction
    other_severity = _draw(rng, config.severity_split, total)
    swc_ids = _draw(rng, config.swc_distribution or _uniform(catalog.swc_entries), total)
    subjects = _draw(rng, config.subject_distribution or _uniform(model.element_ids), total)
    teams = _draw(rng, _uniform(config.teams), total) if config.teams else [""] * total

    findings = []
    for n in range(total):
        swc_id, subject = swc_ids[n], subjects[n]
        findings.append(Finding(
            finding_id=f"BB-{n + 1:05d}",
            submitted=config.start_date + timedelta(days=int(days[n])),
            severity=Severity.CRITICAL if critical[n] else other_severity[n],
            title=f"{catalog.swc_entries[swc_id].title} in {subject}",
            program_variant=config.variant,
            validity=Validity.VALID,
            swc_tags=(swc_id,),
            linked_subjects=(subject,),
            team=teams[n],
            reporter=f"researcher-{n % 50 + 1:02d}",
            program_category=config.program_category,
        ))

    logger.info("Simulated %d finding(s) over %d day(s), seed %d", total, config.duration_days, config.seed)
    return findings
