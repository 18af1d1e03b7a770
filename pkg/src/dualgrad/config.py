"""Flat key=value config documents and CSV output helpers.

Precedence for every setting: command-line flag > config file > default.
CSV files are UTF-8 with LF line endings, a mandatory header row, '.' decimal
separators and full float round-trip precision.
"""

import dataclasses
import os

from .errors import InvalidConfig, IoError, ParseError
from .experiments import ExperimentConfig

# config-document keys that differ from the dataclass field names
_ALIASES = {
    "d": "feature_dim",
    "k": "k_leads",
    "l": "layers",
    "v": "vocab_size",
    "master": "seed",
    "repetitions": "reps",
}

# per-kind defaults layered under file/flag values
_KIND_DEFAULTS = {
    "fig7": {"d_i": 11, "d_o": 1, "n_t": 15, "k_leads": 2},
}

_FIELDS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELDS[name]
    kind = getattr(kind, "__name__", kind)
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise InvalidConfig(f"cannot read {raw!r} as a boolean for {name}")
    return raw


def parse_config_text(text: str) -> dict:
    """Parse a flat key=value document into field/value pairs."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected key=value")
        key, raw = (part.strip() for part in line.split("=", 1))
        name = _ALIASES.get(key.lower(), key.lower())
        if name not in _FIELDS:
            raise InvalidConfig(f"line {lineno}: unknown setting {key!r}")
        values[name] = _coerce(name, raw)
    return values


def load_config(kind: str, path: str | None, overrides: dict) -> ExperimentConfig:
    """Assemble the effective config: defaults, then file, then flags."""
    values = {"kind": kind}
    values.update(_KIND_DEFAULTS.get(kind, {}))
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from exc
        file_values = parse_config_text(text)
        file_values.pop("kind", None)
        values.update(file_values)
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "seed" not in values and "DUALGRAD_SEED" in os.environ:
        values["seed"] = int(os.environ["DUALGRAD_SEED"])
    cfg = ExperimentConfig(**values)
    if cfg.feature_dim % 2 or cfg.feature_dim < 2:
        raise InvalidConfig("D (feature_dim) must be even and >= 2")
    if cfg.reps < 1:
        raise InvalidConfig("repetitions must be >= 1")
    if min(cfg.d_i, cfg.d_o, cfg.d_h, cfg.n_t, cfg.n_d) < 1:
        raise InvalidConfig("dims and sizes must be positive")
    if cfg.mode not in ("exact", "kernel"):
        raise InvalidConfig(f"mode must be exact|kernel, got {cfg.mode!r}")
    if not (cfg.schedule == "per-token" or cfg.schedule.startswith("fractional:")):
        raise InvalidConfig(f"schedule must be per-token|fractional:<S>, got {cfg.schedule!r}")
    return cfg


def format_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    """Write rows with full float precision; deterministic bytes."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(format_cell(v) for v in row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
