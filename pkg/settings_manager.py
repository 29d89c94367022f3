import json
import logging
from pathlib import Path

from errors import ConfigError
from threat_enums import Severity

logger = logging.getLogger(__name__)

# This dictionary defines the tool's default behaviour and is the single
# source of truth for every setting. A settings file only needs the keys it
# changes; anything missing falls back to the value defined here.
DEFAULT_SETTINGS = {
    # Severity weights for asset scores
    "weights/critical": 10,
    "weights/high": 5,
    "weights/medium": 2,
    "weights/low": 1,

    # Minimum consecutive periods for a chronic issue
    "chronic/min_streak": 2,

    # STRIDE-per-element table; empty means the bundled data file
    "enumeration/applicability_file": "",

    # Diagram outline colors, from lightest to most severe score bucket
    "render/color_low": "#d4a017",
    "render/color_medium": "#e67e22",
    "render/color_high": "#d9534f",
    "render/color_critical": "#8b0000",
    "render/rankdir": "LR",
}

WEIGHT_KEYS = {
    Severity.CRITICAL: "weights/critical",
    Severity.HIGH: "weights/high",
    Severity.MEDIUM: "weights/medium",
    Severity.LOW: "weights/low",
}
PALETTE_KEYS = ("render/color_low", "render/color_medium", "render/color_high", "render/color_critical")
RANKDIRS = ("LR", "RL", "TB", "BT")


class SettingsManager:
    """
    Handles loading, saving, and looking up every tunable setting.

    Values come from an optional flat JSON file (keys as in
    DEFAULT_SETTINGS) layered over the defaults, so callers always get a
    value. Nothing is read from the environment.
    """
    def __init__(self, file_path: str | Path | None = None):
        self.file_path = Path(file_path) if file_path else None
        self.settings: dict = {}
        if self.file_path is not None:
            self._load()

    def _load(self):
        logger.info("Loading settings from: %s", self.file_path)
        try:
            raw = json.loads(self.file_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"settings file {self.file_path} is not valid JSON: {e.msg}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"settings file {self.file_path} must hold a JSON object")
        for key, value in raw.items():
            self.set_value(key, value)
        self.severity_weights()
        streak = self.get_value("chronic/min_streak")
        if isinstance(streak, bool) or not isinstance(streak, int) or streak < 2:
            raise ConfigError(f"chronic/min_streak must be an integer >= 2, got {streak!r}")
        if self.get_value("render/rankdir") not in RANKDIRS:
            raise ConfigError(f"render/rankdir must be one of {', '.join(RANKDIRS)}")

    def get_value(self, key: str, default_value=None):
        """
        Retrieves a setting.

        If a specific default_value is not provided, it falls back to the
        master default defined in `DEFAULT_SETTINGS`.
        """
        if default_value is None:
            default_value = DEFAULT_SETTINGS.get(key)
        return self.settings.get(key, default_value)

    def set_value(self, key: str, value):
        if key not in DEFAULT_SETTINGS:
            raise ConfigError(f"unknown setting {key!r}")
        self.settings[key] = value

    def restore_defaults(self):
        """Drops every override; lookups fall back to DEFAULT_SETTINGS."""
        logger.info("Restoring default settings by removing custom values...")
        self.settings.clear()

    def save(self, file_path: str | Path | None = None):
        """Writes only the overridden keys, sorted, as JSON."""
        target = Path(file_path) if file_path else self.file_path
        if target is None:
            raise ConfigError("no settings file to save to")
        target.write_text(json.dumps(self.settings, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def severity_weights(self) -> dict[Severity, float]:
        """
        The severity weight table.

        Raises:
            ConfigError: If any weight is not a positive number.
        """
        weights = {}
        for severity, key in WEIGHT_KEYS.items():
            value = self.get_value(key)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
                raise ConfigError(f"{key} must be a positive number, got {value!r}")
            weights[severity] = value
        return weights

    def min_streak(self) -> int:
        return int(self.get_value("chronic/min_streak"))

    def palette(self) -> tuple[str, str, str, str]:
        return tuple(str(self.get_value(key)) for key in PALETTE_KEYS)
