"""Single structured config shared by the CLI and the service.

Resolution order for the config file path: explicit --config flag, the
FOODAI_CONFIG environment variable, then ./foodrec.json.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import timedelta, timezone, tzinfo
from pathlib import Path
from zoneinfo import ZoneInfo

ENV_VAR = "FOODAI_CONFIG"
DEFAULT_FILENAME = "foodrec.json"


class ConfigError(ValueError):
    pass


@dataclass
class AppConfig:
    storage_root: str = "storage"
    checkpoint_path: str = "storage/model.ckpt"
    host: str = "127.0.0.1"
    port: int = 8080
    seed: int = 0
    timezone: str = "UTC"
    fams_roles: dict[str, str] = field(default_factory=dict)   # api key -> manager|annotator
    fams_source: dict = field(default_factory=lambda: {"type": "synthetic"})
    non_food_threshold: float | None = None   # None = plain argmax rule
    ui_dist: str | None = None                # built frontend; served at /ui when set

    @property
    def storage(self) -> Path:
        return Path(self.storage_root)

    @property
    def taxonomy_path(self) -> Path:
        return self.storage / "taxonomy.json"

    @property
    def corpus_root(self) -> Path:
        return self.storage / "corpus"

    @property
    def keys_path(self) -> Path:
        return self.storage / "keys.json"

    @property
    def logs_dir(self) -> Path:
        return self.storage / "logs"

    @property
    def query_log_path(self) -> Path:
        return self.logs_dir / "query_log.jsonl"

    @property
    def feedback_log_path(self) -> Path:
        return self.logs_dir / "feedback_log.jsonl"

    @property
    def query_images_dir(self) -> Path:
        return self.storage / "queries"

    @property
    def fams_dir(self) -> Path:
        return self.storage / "fams"

    def tzinfo(self) -> tzinfo:
        return parse_timezone(self.timezone)

    def to_dict(self) -> dict:
        return {
            "storage_root": self.storage_root,
            "checkpoint_path": self.checkpoint_path,
            "host": self.host,
            "port": self.port,
            "seed": self.seed,
            "timezone": self.timezone,
            "fams_roles": dict(self.fams_roles),
            "fams_source": dict(self.fams_source),
            "non_food_threshold": self.non_food_threshold,
            "ui_dist": self.ui_dist,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def parse_timezone(name: str) -> tzinfo:
    """IANA zone name, 'UTC', or a fixed offset like '+08:00'."""
    if name.upper() == "UTC":
        return timezone.utc
    if name and name[0] in "+-":
        try:
            sign = 1 if name[0] == "+" else -1
            hours, minutes = name[1:].split(":")
            return timezone(sign * timedelta(hours=int(hours), minutes=int(minutes)))
        except ValueError as e:
            raise ConfigError(f"bad timezone offset {name!r}") from e
    try:
        return ZoneInfo(name)
    except Exception as e:
        raise ConfigError(f"unknown timezone {name!r}") from e


def load_config(path: str | Path | None = None) -> AppConfig:
    if path is None:
        path = os.environ.get(ENV_VAR) or DEFAULT_FILENAME
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    data = json.loads(path.read_text(encoding="utf-8"))
    known = {f for f in AppConfig.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = AppConfig(**data)
    cfg.tzinfo()  # validate early
    return cfg
