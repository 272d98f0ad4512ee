"""Run configuration files.

A config is an INI-style text file: ``key = value`` lines grouped under
``[section]`` headers, with dotted names for nested sections
(``[model.params]``).  ``#`` and ``;`` start comments.  Every section and key
is checked against a schema before any computation; unknown names are
rejected with the offending line number.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .errors import ConfigError

# ---------------------------------------------------------------------------
# value parsers


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> tuple:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if not parts:
        raise ValueError("expected a comma separated list of numbers")
    return tuple(float(p) for p in parts)


def _str(text: str) -> str:
    return text.strip()


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        v = text.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {v!r}")
        return v

    return parse


def _float_or_auto(text: str):
    return "auto" if text.strip().lower() == "auto" else float(text)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = None
    required: bool = False


SCHEMA: dict = {
    "model": {
        "name": Key(_choice("rough_langevin", "fast_vol"), required=True),
    },
    "model.params": None,  # free-form, checked by the preset builder
    "regime": {
        "tag": Key(_choice("R1", "R2", "R3"), required=True),
        "gamma": Key(_float),
        "exponent": Key(_float),
    },
    "solver": {
        "n": Key(_int, 512),
        "order": Key(_choice("2", "4"), "4"),
    },
    "validate": {
        "n_fast": Key(_int, 64),
        "n_slow": Key(_int, 5),
        "slow_box": Key(_floats, (-2.0, 2.0)),
        "ell_tol": Key(_float, 1e-8),
        "bound": Key(_float, 1e6),
    },
    "cell": {
        "x": Key(_floats, (0.0,)),
        "p": Key(_floats, (1.0,)),
    },
    "effective": {
        "x": Key(_floats, (0.0,)),
        "p": Key(_floats, (-1.0, 0.0, 1.0)),
    },
    "sim": {
        "epsilon": Key(_float),
        "eps_list": Key(_floats),
        "t0": Key(_float, 0.0),
        "T": Key(_float, 1.0),
        "dt": Key(_float_or_auto, "auto"),
        "c_fast": Key(_float, 0.1),
        "n_paths": Key(_int, 10000),
        "seed": Key(_int, 0),
        "x0": Key(_floats, (0.0,)),
        "y0": Key(_float, 0.0),
        "chunk_size": Key(_int, 2048),
        "per_path_log": Key(_bool, False),
    },
    "subsolution": {
        "kind": Key(_choice("zero", "affine", "hopf_lax", "table"), "zero"),
        "a": Key(_floats),
        "b": Key(_float, 0.0),
        "freeze_at": Key(_floats),
        "table": Key(_str),
        "verify_box": Key(_floats, (-3.0, 3.0)),
        "verify_tol": Key(_float, 1e-8),
    },
    "functional": {
        "kind": Key(_choice("exp_cost", "indicator"), "exp_cost"),
        "h": Key(_choice("zero", "linear", "quadratic"), "zero"),
        "center": Key(_floats, (0.0,)),
        "weight": Key(_float, 1.0),
        "a": Key(_floats, (1.0,)),
        "offset": Key(_float, 0.0),
        "set": Key(_choice("box", "halfspace")),
        "lo": Key(_floats),
        "hi": Key(_floats),
        "normal": Key(_floats),
        "level": Key(_float),
    },
    "control": {
        "policy": Key(_choice("zero", "regime"), "regime"),
        "p_nodes": Key(_int, 41),
        "x_lattice": Key(_floats),
    },
    "quasipotential": {
        "method": Key(_choice("hopf_lax", "path_opt"), "hopf_lax"),
        "t": Key(_float),
        "x": Key(_floats),
        "K": Key(_int, 16),
        "n_starts": Key(_int, 8),
    },
    "output": {
        "dir": Key(_str, "out"),
    },
}


@dataclass
class RunConfig:
    """Parsed configuration: ``sections[name][key]`` holds typed values."""

    sections: dict
    source: str = "<string>"
    lines: dict = field(default_factory=dict)
    present: frozenset = frozenset()

    def get(self, section: str, key: str):
        return self.sections.get(section, {}).get(key)

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    def has(self, section: str) -> bool:
        """Whether the section appeared in the file."""
        return section in self.present

    def where(self, section: str, key: Optional[str] = None) -> str:
        line = self.lines.get((section, key))
        loc = f"{self.source}:{line}" if line else self.source
        return f"{loc}: [{section}]" + (f" {key}" if key else "")

    def require(self, section: str, key: str):
        value = self.get(section, key)
        if value is None:
            raise ConfigError(f"{self.where(section)}: missing required key '{key}'")
        return value


def _line_index(text: str) -> dict:
    index: dict = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+)[=:]", line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip()), no)
    return index


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse and schema-check a config.

    Raises
    ------
    ConfigError
        On syntax errors, unknown sections or keys, unparsable values and
        missing required keys (``[model] name``, ``[regime] tag`` and the
        regime parameter).
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None,
                                       strict=True, empty_lines_in_values=False)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: duplicate key '{exc.option}' in [{exc.section}]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: key outside of any [section]") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError(f"{source}:{lineno}: cannot parse line") from None

    lines = _line_index(text)
    present = frozenset(parser.sections())
    sections: dict = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ConfigError(f"{source}:{lines.get((name, None), '?')}: unknown section [{name}]; "
                              f"known: {', '.join(sorted(SCHEMA))}")
        schema = SCHEMA[name]
        raw = dict(parser.items(name))
        if schema is None:
            sections[name] = raw
            continue
        values = {}
        for key, text_value in raw.items():
            if key not in schema:
                raise ConfigError(f"{source}:{lines.get((name, key), '?')}: unknown key '{key}' in "
                                  f"[{name}]; allowed: {', '.join(schema)}")
            try:
                values[key] = schema[key].parse(text_value)
            except ValueError as exc:
                raise ConfigError(f"{source}:{lines.get((name, key), '?')}: bad value for "
                                  f"[{name}] {key}: {exc}") from None
        sections[name] = values

    for name, schema in SCHEMA.items():
        if schema is None:
            sections.setdefault(name, {})
            continue
        values = sections.setdefault(name, {})
        for key, spec in schema.items():
            if spec.required and key not in values:
                if name not in present:
                    raise ConfigError(f"{source}: missing required section [{name}] (key '{key}')")
                raise ConfigError(f"{source}:{lines.get((name, None), '?')}: missing required key "
                                  f"'{key}' in [{name}]")
            values.setdefault(key, spec.default)

    reg = sections["regime"]
    if reg["tag"] == "R2" and reg["gamma"] is None:
        raise ConfigError(f"{source}:{lines.get(('regime', None), '?')}: R2 needs [regime] gamma")
    if reg["tag"] in ("R1", "R3") and reg["exponent"] is None:
        raise ConfigError(f"{source}:{lines.get(('regime', None), '?')}: {reg['tag']} needs [regime] exponent")
    eps_list = sections["sim"].get("eps_list")
    if eps_list is not None and any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError(f"{source}:{lines.get(('sim', 'eps_list'), '?')}: eps_list must be strictly decreasing")
    return RunConfig(sections, source, lines, present)


def load_config(path) -> RunConfig:
    """Read and parse a config file (UTF-8)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
