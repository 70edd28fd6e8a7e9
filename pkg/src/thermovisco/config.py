"""Run configuration files.

A config is an INI file with the sections ``[scheme]``, ``[material]``,
``[initial]`` and ``[forcing]``.  Every key maps onto a dataclass field;
unknown sections or keys are rejected.  Numbers may be written as fractions
(``tau = 1/320``).
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import fields
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .materials import MaterialParams
from .scheme import ForcingSpec, InitialSpec, SchemeConfig

SECTIONS = {"scheme": SchemeConfig, "material": MaterialParams, "initial": InitialSpec, "forcing": ForcingSpec}
_NESTED = {"material", "initial", "forcing"}


class ConfigError(ValueError):
    """The configuration file cannot be turned into a valid scheme."""


def _parse_value(raw: str, kind, where: str):
    text = raw.strip()
    try:
        if kind in (float, "float"):
            return float(Fraction(text)) if "/" in text else float(text)
        if kind in (int, "int"):
            value = Fraction(text)
            if value.denominator != 1:
                raise ValueError
            return int(value)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{where}: cannot parse {raw!r} as {getattr(kind, '__name__', kind)}") from None
    return text


def _field_types(cls) -> dict:
    return {f.name: f.type for f in fields(cls) if f.name not in _NESTED}


def parse_config_text(text: str, source: str = "<string>") -> SchemeConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (c_V, C0, T)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    parts = {}
    for name, cls in SECTIONS.items():
        types = _field_types(cls)
        values = {}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in types:
                    raise ConfigError(f"{source}: unknown key {key!r} in [{name}]")
                values[key] = _parse_value(raw, types[key], f"[{name}] {key}")
        parts[name] = values
    try:
        return SchemeConfig(material=MaterialParams(**parts["material"]),
                            initial=InitialSpec(**parts["initial"]),
                            forcing=ForcingSpec(**parts["forcing"]),
                            **parts["scheme"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> SchemeConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def config_to_text(config: SchemeConfig) -> str:
    """Canonical INI text; parsing it returns an equal config."""
    lines = []
    for name, cls in SECTIONS.items():
        obj = config if name == "scheme" else getattr(config, name)
        lines.append(f"[{name}]")
        for key in _field_types(cls):
            value = getattr(obj, key)
            lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def config_hash(config: SchemeConfig) -> str:
    return hashlib.sha256(config_to_text(config).encode()).hexdigest()


def builtin_config(name: str) -> Path:
    """Path of a bundled scenario (``reference``, ``equilibrium``, ``closed``)."""
    ref = resources.files("thermovisco") / "data" / f"{name}.ini"
    if not ref.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return Path(str(ref))
