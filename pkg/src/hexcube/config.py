"""Pipeline configuration.

Configuration files are INI-style ``key = value`` lines grouped under
section headers::

    [mesh]
    resolution = 6
    spacing = auto

    [smoothing]
    iterations = 10

Any key can also be overridden with ``--key=value`` or
``--section.key=value`` on the command line; overrides win over the file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

from .errors import ParseError

# section -> {key: (type, default)}
SCHEMA = {
    "mesh": {
        "resolution": (int, 6),
        "spacing": (str, "auto"),
        "shell_schedule": (str, "volume"),
    },
    "gac": {
        "eps": (float, 1.5),
        "dt": (float, 1.0),
        "max_steps": (int, 20000),
        "reinit_every": (int, 5),
    },
    "smoothing": {
        "iterations": (int, 10),
        "layers": (str, "interior"),
    },
    "flows": {
        "area_steps": (int, 20),
        "area_passes": (int, 1),
        "volume_steps": (int, 20),
        "volume_restarts": (int, 10),
    },
    "outputs": {
        "hex_vtk": (str, ""),
        "map_json": (str, ""),
        "metrics_json": (str, ""),
        "debug_shells": (bool, False),
    },
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


def _convert(kind, raw, name):
    if isinstance(raw, kind) and not (kind is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError as exc:
        raise ParseError(f"bad value for {name}: {raw!r}") from exc


@dataclass
class PipelineConfig:
    input: str = ""
    resolution: int = 6
    spacing: str = "auto"
    shell_schedule: str = "volume"
    eps: float = 1.5
    dt: float = 1.0
    max_steps: int = 20000
    reinit_every: int = 5
    iterations: int = 10
    layers: str = "interior"
    area_steps: int = 20
    area_passes: int = 1
    volume_steps: int = 20
    volume_restarts: int = 10
    hex_vtk: str = ""
    map_json: str = ""
    metrics_json: str = ""
    debug_shells: bool = False
    extra: dict = field(default_factory=dict)

    def validate(self) -> "PipelineConfig":
        if self.resolution < 2:
            raise ParseError(f"resolution must be >= 2, got {self.resolution}")
        if self.spacing != "auto":
            try:
                s = float(self.spacing)
            except ValueError as exc:
                raise ParseError(f"spacing must be a number or 'auto', got {self.spacing!r}") \
                    from exc
            if not s > 0:
                raise ParseError("spacing must be positive")
        if self.shell_schedule not in ("volume", "step"):
            raise ParseError(f"unknown shell schedule {self.shell_schedule!r}")
        if self.layers not in ("interior", "all"):
            raise ParseError(f"smoothing layers must be 'interior' or 'all', got {self.layers!r}")
        for name in ("eps", "dt"):
            if not getattr(self, name) > 0:
                raise ParseError(f"{name} must be positive")
        for name in ("max_steps", "reinit_every", "area_steps", "area_passes", "volume_steps"):
            if getattr(self, name) < 1:
                raise ParseError(f"{name} must be >= 1")
        for name in ("iterations", "volume_restarts"):
            if getattr(self, name) < 0:
                raise ParseError(f"{name} must be >= 0")
        return self

    def spacing_value(self):
        return None if self.spacing == "auto" else float(self.spacing)

    def set(self, key: str, value) -> None:
        """Set ``key`` or ``section.key`` from a string or typed value."""
        section, _, name = key.rpartition(".")
        name = name.replace("-", "_")
        if section:
            if section not in SCHEMA or name not in SCHEMA[section]:
                raise ParseError(f"unknown configuration key {key!r}")
        else:
            owners = [s for s in SCHEMA if name in SCHEMA[s]]
            if not owners:
                raise ParseError(f"unknown configuration key {key!r}")
            section = owners[0]
        kind = SCHEMA[section][name][0]
        setattr(self, name, _convert(kind, value, key))


def load_config(path=None, overrides=None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ParseError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ParseError(f"malformed config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ParseError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                cfg.set(f"{section}.{key}", value)
    for key, value in (overrides or {}).items():
        cfg.set(key, value)
    return cfg.validate()


def config_fields():
    return [f.name for f in fields(PipelineConfig) if f.name not in ("input", "extra")]
