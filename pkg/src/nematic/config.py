"""INI-style run configuration (grammar in docs/config.md)."""
from __future__ import annotations

import configparser
import hashlib
import json
import os
import re
from fractions import Fraction
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nematic.dynamics import KINDS, SCHEMES, SimConfig
from nematic.field import GridSpec
from nematic.qtensor import ModelParams

SECTIONS = ("model", "grid", "run", "initial", "ensemble", "decompose", "regime", "fronts")


class ConfigError(ValueError):
    """Problem in a configuration file; the message names the line and field."""


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            continue
        if section and line and line[0] not in "#;":
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            lines.setdefault((section, key), no)
    return lines


@dataclass
class RawConfig:
    parser: configparser.ConfigParser
    source: str
    lines: dict = field(default_factory=dict)

    def where(self, section: str, key: str) -> str:
        no = self.lines.get((section, key))
        loc = f"{self.source}:{no}" if no else self.source
        return f"{loc}: [{section}] {key}"

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def get(self, section: str, key: str, default=None, required: bool = False) -> str | None:
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        if required:
            raise ConfigError(f"{self.source}: [{section}] missing required key {key!r}")
        return default

    def number(self, section: str, key: str, default=None, required: bool = False, cast=float):
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            value = cast(raw)
        except ValueError:
            raise ConfigError(f"{self.where(section, key)}: expected {cast.__name__}, got {raw!r}") from None
        if cast is float and not np.isfinite(value):
            raise ConfigError(f"{self.where(section, key)}: value must be finite")
        return value

    def flag(self, section: str, key: str, default: bool) -> bool:
        raw = self.get(section, key)
        if raw is None:
            return default
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{self.where(section, key)}: expected a boolean, got {raw!r}")

    def canonical(self) -> dict:
        return {s: dict(sorted(self.parser.items(s))) for s in sorted(self.parser.sections())}

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def parse_text(text: str, source: str = "<string>") -> RawConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for sec in parser.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}]; known sections: {', '.join(SECTIONS)}")
    return RawConfig(parser, source, _key_lines(text))


def load(path) -> RawConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_text(path.read_text(), str(path))


def model_params(cfg: RawConfig) -> ModelParams:
    vals = {k: cfg.number("model", k, required=k in ("a", "b", "c")) for k in ("a", "b", "c", "delta", "eta")}
    vals = {k: v for k, v in vals.items() if v is not None}
    try:
        return ModelParams(**vals)
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: [model] {exc}") from None


def grid_spec(cfg: RawConfig) -> GridSpec:
    try:
        return GridSpec(cfg.number("grid", "n", required=True, cast=int), cfg.number("grid", "box_len", required=True))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{cfg.source}: [grid] {exc}") from None


def parse_times(raw: str, where: str = "times") -> tuple[float, ...]:
    """``1, 2, 5`` or ``geom:START:STOP:COUNT`` or ``lin:START:STOP:COUNT`` (parts may be combined with ``;``)."""
    out = []
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            if part.startswith(("geom:", "lin:")):
                kind, a, b, n = part.split(":")
                fn = np.geomspace if kind == "geom" else np.linspace
                out.extend(float(v) for v in np.round(fn(float(a), float(b), int(n)), 9))
            else:
                out.extend(float(v) for v in part.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"{where}: cannot parse time list {part!r}") from None
    return tuple(sorted(set(out)))


def run_kind(cfg: RawConfig) -> str:
    kind = cfg.get("run", "kind", "tensor")
    if kind not in KINDS:
        raise ConfigError(f"{cfg.where('run', 'kind')}: must be one of {KINDS}, got {kind!r}")
    return kind


def sim_config(cfg: RawConfig, grid: GridSpec) -> SimConfig:
    raw_snaps = cfg.get("run", "snapshots", "")
    t_final = cfg.number("run", "t_final", required=True)
    snaps = parse_times(raw_snaps, cfg.where("run", "snapshots")) if raw_snaps else (t_final,)
    scheme = cfg.get("run", "scheme", "ETD2")
    if scheme not in SCHEMES:
        raise ConfigError(f"{cfg.where('run', 'scheme')}: must be one of {SCHEMES}")
    try:
        return SimConfig(
            grid=grid,
            dt=cfg.number("run", "dt", 0.01),
            t_final=t_final,
            snapshot_times=snaps,
            scheme=scheme,
            reaction=cfg.flag("run", "reaction", True),
            dt_growth=cfg.number("run", "dt_growth", 1.0),
            dt_max=cfg.number("run", "dt_max", None),
            record_energy=cfg.flag("run", "record_energy", True),
        )
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: [run] {exc}") from None


def ensemble_members(cfg: RawConfig) -> list[tuple[float, str]]:
    """``memberN = WEIGHT | GENERATOR SPEC`` entries, ordered by key."""
    if not cfg.parser.has_section("ensemble"):
        raise ConfigError(f"{cfg.source}: missing [ensemble] section")
    members = []
    for key, raw in sorted(cfg.parser.items("ensemble")):
        if not key.startswith("member"):
            continue
        weight, sep, spec = raw.partition("|")
        if not sep:
            raise ConfigError(f"{cfg.where('ensemble', key)}: expected 'WEIGHT | SPEC', got {raw!r}")
        try:
            members.append((float(Fraction(weight.strip())), spec.strip()))
        except ValueError:
            raise ConfigError(f"{cfg.where('ensemble', key)}: weight {weight.strip()!r} is not a number") from None
    if not members:
        raise ConfigError(f"{cfg.source}: [ensemble] declares no memberN entries")
    return members


def seed_from_env(default: int = 0) -> int:
    raw = os.environ.get("NEMATIC_SEED")
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"NEMATIC_SEED must be an integer, got {raw!r}") from None
