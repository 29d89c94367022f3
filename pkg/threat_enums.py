from enum import Enum


class SecurityProperty(Enum):
    """The security property a STRIDE category violates."""
    AUTHENTICATION = "Authentication"
    INTEGRITY = "Integrity"
    NON_REPUDIATION = "NonRepudiation"
    CONFIDENTIALITY = "Confidentiality"
    AVAILABILITY = "Availability"
    AUTHORIZATION = "Authorization"


class StrideCategory(Enum):
    """
    The six STRIDE threat categories, declared in their canonical order.

    Declaration order matters: enumeration output and every report that
    lists categories follow it. Each member knows the property it
    violates, its canonical definition, and its one-letter code used by
    the applicability data file.

    Attributes:
        SPOOFING: Violates authentication.
        TAMPERING: Violates integrity.
        REPUDIATION: Violates non-repudiation.
        INFORMATION_DISCLOSURE: Violates confidentiality.
        DENIAL_OF_SERVICE: Violates availability.
        ELEVATION_OF_PRIVILEGE: Violates authorization.
    """
    SPOOFING = "Spoofing"
    TAMPERING = "Tampering"
    REPUDIATION = "Repudiation"
    INFORMATION_DISCLOSURE = "InformationDisclosure"
    DENIAL_OF_SERVICE = "DenialOfService"
    ELEVATION_OF_PRIVILEGE = "ElevationOfPrivilege"

    @property
    def violated_property(self) -> SecurityProperty:
        return _STRIDE_PROPERTIES[self]

    @property
    def definition(self) -> str:
        return _STRIDE_DEFINITIONS[self]

    @property
    def letter(self) -> str:
        return self.value[0]

    @property
    def order(self) -> int:
        return _STRIDE_ORDER[self]

    @classmethod
    def from_letter(cls, letter: str) -> "StrideCategory":
        for category in cls:
            if category.letter == letter.upper():
                return category
        raise ValueError(f"Unknown STRIDE letter: {letter!r}")


_STRIDE_PROPERTIES = {
    StrideCategory.SPOOFING: SecurityProperty.AUTHENTICATION,
    StrideCategory.TAMPERING: SecurityProperty.INTEGRITY,
    StrideCategory.REPUDIATION: SecurityProperty.NON_REPUDIATION,
    StrideCategory.INFORMATION_DISCLOSURE: SecurityProperty.CONFIDENTIALITY,
    StrideCategory.DENIAL_OF_SERVICE: SecurityProperty.AVAILABILITY,
    StrideCategory.ELEVATION_OF_PRIVILEGE: SecurityProperty.AUTHORIZATION,
}

_STRIDE_DEFINITIONS = {
    StrideCategory.SPOOFING: "Impersonating something or someone else.",
    StrideCategory.TAMPERING: "Modifying data or code.",
    StrideCategory.REPUDIATION: "Claiming to have not performed an action.",
    StrideCategory.INFORMATION_DISCLOSURE: "Exposing information to someone not authorized to see it.",
    StrideCategory.DENIAL_OF_SERVICE: "Deny or degrade service to users.",
    StrideCategory.ELEVATION_OF_PRIVILEGE: "Gain capabilities without proper authorization.",
}

_STRIDE_ORDER = {category: index for index, category in enumerate(StrideCategory)}


class ElementKind(Enum):
    """The three DFD element kinds. Flows are not elements."""
    EXTERNAL_ENTITY = "ExternalEntity"
    PROCESS = "Process"
    DATA_STORE = "DataStore"


class ThreatStatus(Enum):
    """
    Lifecycle of a threat.

    Only PREDICTED may move, and only to CONFIRMED or RETIRED; both of
    those are terminal.
    """
    PREDICTED = "Predicted"
    CONFIRMED = "Confirmed"
    RETIRED = "Retired"


class DiagnosticLevel(Enum):
    ERROR = "Error"
    WARNING = "Warning"


class Severity(Enum):
    """Finding severity, highest first."""
    CRITICAL = "Critical"
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"


class Validity(Enum):
    """Triage outcome of a bounty submission. Only VALID feeds the metrics."""
    VALID = "Valid"
    INVALID = "Invalid"
    DUPLICATE = "Duplicate"


class ProgramVariant(Enum):
    """
    The four bug bounty program variants.

    Attributes:
        INVITE_ONLY: Only top contributors are invited; beta or post launch.
        FUZZING_COMPETITION: Internal testing with access to sources; prebeta or post launch.
        OPEN_ENDED: Ongoing program after product launch.
        SHORT_TIMEFRAME: One-time event prompted by a special occasion.
    """
    INVITE_ONLY = "InviteOnly"
    FUZZING_COMPETITION = "FuzzingCompetition"
    OPEN_ENDED = "OpenEnded"
    SHORT_TIMEFRAME = "ShortTimeframe"


class ProgramCategory(Enum):
    """Who hosts the bounty program a finding came from."""
    INSTITUTIONAL = "Institutional"
    PLATFORM = "Platform"
    PRIVATE_INTERMEDIARY = "PrivateIntermediary"


class PeriodScheme(Enum):
    """Analysis period length. The value is the number of calendar months."""
    QUARTERLY = 3
    SEMI_ANNUAL = 6

    @property
    def label(self) -> str:
        return "Quarterly" if self is PeriodScheme.QUARTERLY else "SemiAnnual"

    @classmethod
    def from_label(cls, label: str) -> "PeriodScheme":
        key = label.strip().lower().replace("-", "").replace("_", "")
        if key == "quarterly":
            return cls.QUARTERLY
        if key == "semiannual":
            return cls.SEMI_ANNUAL
        raise ValueError(f"Unknown period scheme: {label!r}")


class RenderFormat(Enum):
    JSON = "json"
    MARKDOWN = "md"
    DOT = "dot"


class ExitCode(Enum):
    """
    Process exit codes of the command-line tool.

    Warnings alone never produce a nonzero code unless `--strict` is given.
    """
    SUCCESS = 0
    VALIDATION_ERRORS = 1
    IO_OR_PARSE_FAILURE = 2
    BAD_ARGUMENTS = 3


def parse_enum(enum_cls, raw: str):
    """
    Looks up an enum member by value, ignoring case and surrounding spaces.

    Args:
        enum_cls: The enumeration to search.
        raw: The textual value as it appears in an input file.

    Returns:
        The matching member.

    Raises:
        ValueError: If no member's value matches.
    """
    wanted = str(raw).strip().lower()
    for member in enum_cls:
        if str(member.value).lower() == wanted:
            return member
    choices = ", ".join(str(m.value) for m in enum_cls)
    raise ValueError(f"{raw!r} is not one of: {choices}")
