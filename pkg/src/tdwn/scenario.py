"""Scenario files: INI documents with [resolver], [attacker], [auth], [experiment].

Every key has a default taken from the reference parameter table, so an
empty file is a valid scenario. Unknown sections or keys are rejected with
the offending line number.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .attacker import Arrivals, AttackConfig, GuessStrategy
from .detector import DetectorConfig
from .distributions import Constant, ExponentialUpdates, NoUpdates, ScriptedUpdates, Uniform
from .dns_model import GuessForm, GuessSpace
from .resolver import ResolverConfig
from .sim import AuthServerModel, Scenario


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "<scenario>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _optional_int(s: str) -> Optional[int]:
    return None if s.strip().lower() in ("", "none", "unbounded") else int(s)


def _enum(cls):
    def parse(s: str):
        try:
            return cls(s.strip().lower())
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"expected one of {choices}, got {s!r}") from None

    return parse


# section -> key -> (default, parser)
SCHEMA: dict[str, dict[str, tuple[str, Callable]]] = {
    "resolver": {
        "outstanding_cap": ("20", int),
        "tod": ("3", int),
        "timeout_s": ("2.0", float),
        "priority_cache": ("true", _bool),
        "resolver_qps": ("100", float),
        "max_transactions": ("none", _optional_int),
        "id_space": ("65536", int),
        "port_space": ("64000", int),
        "n_auth": ("2.5", float),
        "guess_form": ("additive", _enum(GuessForm)),
        "guess_space": ("none", _optional_int),
    },
    "attacker": {
        "enabled": ("true", _bool),
        "attacker_qps": ("1000", float),
        "bogus_qps": ("100", float),
        "rounds": ("none", _optional_int),
        "strategy": ("uniform", _enum(GuessStrategy)),
        "arrivals": ("poisson", _enum(Arrivals)),
        "forged_value": ("Y.Y.Y.Y", str),
        "wait_for_expiry": ("true", _bool),
    },
    "auth": {
        "target_domain": ("foo.com.", str),
        "window_s": ("0.02", float),
        "auth_qps": ("100", float),
        "auth_outstanding_cap": ("1000", int),
        "lifecycle_s": ("36000", float),
        "ttl": ("", str),
        "update": ("none", str),
        "chain_depth": ("1", int),
        "normal_ttl_s": ("300", float),
    },
    "experiment": {
        "seed": ("0", int),
        "duration_s": ("86400", float),
        "benign_qps": ("0", float),
        "benign_names": ("1000", int),
        "malformed_qps": ("0", float),
        "strict": ("true", _bool),
        "n_updates": ("100000", int),
        "horizon_s": ("315576000", float),
    },
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]*)\]")
_KEY_RE = re.compile(r"^([^\s=:#;\[][^=:]*?)\s*[=:]")


def parse_ttl(text: str):
    kind, _, rest = text.strip().partition(":")
    if kind == "constant":
        return Constant(float(rest))
    if kind == "uniform":
        lo, _, hi = rest.partition(":")
        return Uniform(float(lo), float(hi))
    raise ValueError(f"ttl must be constant:X or uniform:lo:hi, got {text!r}")


def parse_update(text: str, base_dir: Path):
    kind, _, rest = text.strip().partition(":")
    if kind == "none":
        return NoUpdates()
    if kind == "exp":
        return ExponentialUpdates(float(rest))
    if kind == "scripted":
        path = Path(rest)
        if not path.is_absolute():
            path = base_dir / path
        try:
            body = path.read_text()
        except OSError as exc:
            raise ValueError(f"cannot read update script {path}: {exc.strerror}") from None
        times = [float(tok) for tok in re.split(r"[,\s]+", body) if tok and not tok.startswith("#")]
        return ScriptedUpdates(tuple(times))
    raise ValueError(f"update must be none, exp:mean or scripted:file, got {text!r}")


@dataclass
class ScenarioFile:
    values: dict[str, dict[str, str]]
    lines: dict[tuple[str, str], int]
    source: str = "<scenario>"
    base_dir: Path = Path(".")

    @classmethod
    def parse(cls, text: str, source: str = "<scenario>", base_dir: Path | None = None) -> "ScenarioFile":
        lines: dict[tuple[str, str], int] = {}
        section = None
        for no, raw in enumerate(text.splitlines(), 1):
            m = _SECTION_RE.match(raw)
            if m:
                section = m.group(1).strip()
                if section not in SCHEMA:
                    raise ConfigError(f"unknown section [{section}]", no, source)
                lines[(section, "")] = no
                continue
            m = _KEY_RE.match(raw)
            if m:
                key = m.group(1).strip().lower()
                if section is None:
                    raise ConfigError(f"key {key!r} outside any section", no, source)
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]", no, source)
                lines[(section, key)] = no

        cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
        try:
            cp.read_string(text, source=source)
        except configparser.DuplicateOptionError as exc:
            raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno, source) from None
        except configparser.DuplicateSectionError as exc:
            raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, source) from None
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError("content before the first section header", exc.lineno, source) from None
        except configparser.ParsingError as exc:
            line = exc.errors[0][0] if exc.errors else None
            raise ConfigError("unparseable line", line, source) from None

        values = {s: dict(cp[s]) for s in cp.sections()}
        return cls(values, lines, source, base_dir or Path("."))

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioFile":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario: {exc.strerror}", None, str(path)) from None
        return cls.parse(text, str(path), path.parent)

    def override(self, item: str) -> None:
        """Apply a `key=value` or `section.key=value` override."""
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value", None, "--override")
        name = name.strip().lower()
        if "." in name:
            section, key = name.split(".", 1)
            if section not in SCHEMA or key not in SCHEMA[section]:
                raise ConfigError(f"unknown override key {name!r}", None, "--override")
        else:
            owners = [s for s, keys in SCHEMA.items() if name in keys]
            if not owners:
                raise ConfigError(f"unknown override key {name!r}", None, "--override")
            section, key = owners[0], name
        self.values.setdefault(section, {})[key] = value.strip()
        self.lines[(section, key)] = None

    def effective(self) -> dict[str, dict[str, str]]:
        out = {}
        for section, keys in SCHEMA.items():
            given = self.values.get(section, {})
            out[section] = {k: given.get(k, default) for k, (default, _) in keys.items()}
        if not out["auth"]["ttl"]:
            out["auth"]["ttl"] = f"constant:{out['auth']['lifecycle_s']}"
        return out

    def typed(self) -> dict[str, dict]:
        typed: dict[str, dict] = {}
        for section, keys in self.effective().items():
            typed[section] = {}
            for key, raw in keys.items():
                try:
                    if key == "ttl":
                        value = parse_ttl(raw)
                    elif key == "update":
                        value = parse_update(raw, self.base_dir)
                    else:
                        value = SCHEMA[section][key][1](raw)
                except ValueError as exc:
                    raise self._error(section, key, f"{section}.{key}: {exc}") from None
                typed[section][key] = value
        return typed

    def _error(self, section: str, key: str, message: str) -> ConfigError:
        if (section, key) in self.lines and self.lines[(section, key)] is None:
            return ConfigError(message, None, "--override")
        return ConfigError(message, self.lines.get((section, key)), self.source)

    def build(self) -> Scenario:
        t = self.typed()
        r, a, z, e = t["resolver"], t["attacker"], t["auth"], t["experiment"]
        # constructor checks raise ValueError; blame the section as a whole
        step = "resolver"
        try:
            space = GuessSpace(r["id_space"], r["port_space"], r["n_auth"], r["guess_form"], r["guess_space"])
            resolver = ResolverConfig(
                max_identical_outstanding=r["outstanding_cap"],
                transaction_timeout=r["timeout_s"],
                detector=DetectorConfig(tod=r["tod"]),
                priority_cache_enabled=r["priority_cache"],
                max_transactions=r["max_transactions"],
                guess_space=space,
            )
            step = "auth"
            auth = AuthServerModel(
                target_domain=z["target_domain"],
                response_time=z["window_s"],
                respond_rate=z["auth_qps"],
                outstanding_cap=z["auth_outstanding_cap"],
                update_process=z["update"],
                ttl_distribution=z["ttl"],
                normal_ttl=z["normal_ttl_s"],
                chain_depth=z["chain_depth"],
            )
            step = "attacker"
            attacker = None
            if a["enabled"]:
                attacker = AttackConfig(
                    target_domain=z["target_domain"],
                    client_query_rate=a["attacker_qps"],
                    bogus_response_rate=a["bogus_qps"],
                    guess_strategy=a["strategy"],
                    rounds=a["rounds"],
                    forged_value=a["forged_value"],
                    arrivals=a["arrivals"],
                    wait_for_expiry=a["wait_for_expiry"],
                )
            step = "experiment"
            scenario = Scenario(
                resolver=resolver,
                attacker=attacker,
                auth=auth,
                seed=e["seed"],
                duration=e["duration_s"],
                resolver_send_rate=r["resolver_qps"],
                benign_rate=e["benign_qps"],
                benign_names=e["benign_names"],
                malformed_rate=e["malformed_qps"],
                strict=e["strict"],
            )
            scenario.validate()
        except ValueError as exc:
            raise self._error(step, "", f"[{step}]: {exc}") from None
        return scenario

    def render(self) -> str:
        parts = []
        for section, keys in self.effective().items():
            parts.append(f"[{section}]")
            parts.extend(f"{k} = {v}" for k, v in keys.items())
            parts.append("")
        return "\n".join(parts)


def load_scenario(path: str | Path | None, overrides: list[str] = (), seed: Optional[int] = None) -> Scenario:
    sf = ScenarioFile.load(path) if path is not None else ScenarioFile({}, {})
    for item in overrides:
        sf.override(item)
    if seed is not None:
        sf.override(f"experiment.seed={seed}")
    return sf.build()
