"""INI-format scenario and sweep-plan files for the command line tools.

The grammar is strict: unknown sections or keys are rejected rather than
ignored, and every numeric value is checked against its domain before any
simulation object is built, so typos fail loudly at parse time.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .adversary import EveStrategy
from .analysis import ExperimentPlan
from .protocol import (
    DetectionRule,
    PartyConfig,
    Scenario,
    bits_from_hex,
    default_tap_budget,
    validate_bits,
)
from .pulses import SourceModel
from .quantum import Rotation, random_rotation


class ConfigError(ValueError):
    """Invalid, unknown, or out-of-range configuration input."""


SCENARIO_KEYS = {
    "session": {"id", "message_bits", "message_hex", "seed", "verify_hash", "stage2_alarm"},
    "source": {"mean_photons", "attenuation"},
    "detection": {"tap_budget", "z_threshold"},
    "secrets": {"alice_rotation", "bob_rotation"},
    "eve": {"mode", "fraction", "count", "substitute_bits", "substitute_hex", "rotation"},
    "output": {"transcript"},
}

PLAN_KEYS = {
    "plan": {
        "mu",
        "siphon_counts",
        "siphon_fractions",
        "z",
        "message_length",
        "trials",
        "master_seed",
        "accuracy_target",
    },
    "output": {"csv"},
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed scenario file, before secrets are drawn and objects built."""

    message_bits: str
    mean_photons: float
    attenuation: float = 1.0
    tap_budget: int | None = None
    z_threshold: float = 5.0
    stage2_alarm: bool = True
    verify_hash: bool = True
    session_id: str = "session"
    seed: int | None = None
    eve_mode: str = "none"
    eve_fraction: float | None = None
    eve_count: int | None = None
    substitute_bits: str | None = None
    eve_rotation: float | None = None
    alice_rotation: float | None = None
    bob_rotation: float | None = None
    transcript_path: str | None = None


def _read_ini(path: str, allowed: dict[str, set[str]]) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, "r", encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as err:
        raise ConfigError(f"cannot read config file: {err}") from None
    except configparser.Error as err:
        raise ConfigError(f"config parse error: {err}") from None
    for section in parser.sections():
        if section not in allowed:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in allowed[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
    return parser


def _get(parser, section, key, cast: Callable, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (ValueError, TypeError):
        raise ConfigError(f"invalid value for [{section}] {key}: {raw!r}") from None


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(raw)


def _domain(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(f"out of range: {message}")


def parse_scenario_file(path: str) -> ScenarioConfig:
    """Parse and fully validate a scenario file."""
    parser = _read_ini(path, SCENARIO_KEYS)

    has_bits = parser.has_option("session", "message_bits")
    has_hex = parser.has_option("session", "message_hex")
    if has_bits == has_hex:
        raise ConfigError("exactly one of [session] message_bits / message_hex is required")
    if has_bits:
        message = parser.get("session", "message_bits").strip()
        try:
            validate_bits(message)
        except ValueError as err:
            raise ConfigError(str(err)) from None
    else:
        try:
            message = bits_from_hex(parser.get("session", "message_hex").strip())
        except ValueError as err:
            raise ConfigError(str(err)) from None
    _domain(len(message) > 0, "message must be nonempty")

    mean_photons = _get(parser, "source", "mean_photons", float, 1000.0)
    _domain(mean_photons > 0, "mean_photons must be positive")
    attenuation = _get(parser, "source", "attenuation", float, 1.0)
    _domain(0.0 < attenuation <= 1.0, "attenuation must be in (0, 1]")

    tap_budget = _get(parser, "detection", "tap_budget", int, None)
    if tap_budget is not None:
        _domain(tap_budget >= 0, "tap_budget must be nonnegative")
    z_threshold = _get(parser, "detection", "z_threshold", float, 5.0)
    _domain(z_threshold >= 0, "z_threshold must be nonnegative")

    eve_mode = _get(parser, "eve", "mode", str, "none").strip().lower()
    if eve_mode not in ("none", "siphon", "impersonate"):
        raise ConfigError(f"invalid value for [eve] mode: {eve_mode!r}")
    eve_fraction = _get(parser, "eve", "fraction", float, None)
    eve_count = _get(parser, "eve", "count", int, None)
    eve_rotation = _get(parser, "eve", "rotation", float, None)
    substitute = None
    if parser.has_option("eve", "substitute_bits") and parser.has_option("eve", "substitute_hex"):
        raise ConfigError("at most one of [eve] substitute_bits / substitute_hex")
    if parser.has_option("eve", "substitute_bits"):
        substitute = parser.get("eve", "substitute_bits").strip()
        try:
            validate_bits(substitute)
        except ValueError as err:
            raise ConfigError(str(err)) from None
    elif parser.has_option("eve", "substitute_hex"):
        try:
            substitute = bits_from_hex(parser.get("eve", "substitute_hex").strip())
        except ValueError as err:
            raise ConfigError(str(err)) from None

    if eve_mode == "siphon":
        if (eve_fraction is None) == (eve_count is None):
            raise ConfigError("siphon mode needs exactly one of [eve] fraction / count")
        if eve_fraction is not None:
            _domain(0.0 <= eve_fraction <= 1.0, "eve fraction must be in [0, 1]")
        if eve_count is not None:
            _domain(eve_count >= 0, "eve count must be nonnegative")
        if substitute is not None:
            raise ConfigError("substitute message is only valid in impersonate mode")
    elif eve_mode == "impersonate":
        if substitute is None:
            raise ConfigError("impersonate mode needs [eve] substitute_bits or substitute_hex")
        if eve_fraction is not None or eve_count is not None:
            raise ConfigError("impersonate mode takes no siphon amounts")
    else:
        if any(v is not None for v in (eve_fraction, eve_count, substitute, eve_rotation)):
            raise ConfigError("[eve] parameters given but mode is none")

    return ScenarioConfig(
        message_bits=message,
        mean_photons=mean_photons,
        attenuation=attenuation,
        tap_budget=tap_budget,
        z_threshold=z_threshold,
        stage2_alarm=_get(parser, "session", "stage2_alarm", _bool, True),
        verify_hash=_get(parser, "session", "verify_hash", _bool, True),
        session_id=_get(parser, "session", "id", str, "session"),
        seed=_get(parser, "session", "seed", int, None),
        eve_mode=eve_mode,
        eve_fraction=eve_fraction,
        eve_count=eve_count,
        substitute_bits=substitute,
        eve_rotation=eve_rotation,
        alice_rotation=_get(parser, "secrets", "alice_rotation", float, None),
        bob_rotation=_get(parser, "secrets", "bob_rotation", float, None),
        transcript_path=_get(parser, "output", "transcript", str, None),
    )


def scenario_to_ini(cfg: ScenarioConfig) -> str:
    """Serialize the effective configuration back to its file form.

    Re-parsing the output yields an identical ScenarioConfig. Secret
    rotations appear only when the user supplied them as overrides.
    """
    lines = ["[session]"]
    lines.append(f"message_bits = {cfg.message_bits}")
    lines.append(f"id = {cfg.session_id}")
    if cfg.seed is not None:
        lines.append(f"seed = {cfg.seed}")
    lines.append(f"verify_hash = {str(cfg.verify_hash).lower()}")
    lines.append(f"stage2_alarm = {str(cfg.stage2_alarm).lower()}")
    lines.append("")
    lines.append("[source]")
    lines.append(f"mean_photons = {cfg.mean_photons!r}")
    lines.append(f"attenuation = {cfg.attenuation!r}")
    lines.append("")
    lines.append("[detection]")
    if cfg.tap_budget is not None:
        lines.append(f"tap_budget = {cfg.tap_budget}")
    lines.append(f"z_threshold = {cfg.z_threshold!r}")
    if cfg.alice_rotation is not None or cfg.bob_rotation is not None:
        lines.append("")
        lines.append("[secrets]")
        if cfg.alice_rotation is not None:
            lines.append(f"alice_rotation = {cfg.alice_rotation!r}")
        if cfg.bob_rotation is not None:
            lines.append(f"bob_rotation = {cfg.bob_rotation!r}")
    if cfg.eve_mode != "none":
        lines.append("")
        lines.append("[eve]")
        lines.append(f"mode = {cfg.eve_mode}")
        if cfg.eve_fraction is not None:
            lines.append(f"fraction = {cfg.eve_fraction!r}")
        if cfg.eve_count is not None:
            lines.append(f"count = {cfg.eve_count}")
        if cfg.substitute_bits is not None:
            lines.append(f"substitute_bits = {cfg.substitute_bits}")
        if cfg.eve_rotation is not None:
            lines.append(f"rotation = {cfg.eve_rotation!r}")
    if cfg.transcript_path is not None:
        lines.append("")
        lines.append("[output]")
        lines.append(f"transcript = {cfg.transcript_path}")
    return "\n".join(lines) + "\n"


def build_scenario(cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """Draw any unspecified secrets from the stream and assemble the scenario."""
    source = SourceModel(cfg.mean_photons, cfg.attenuation)
    tap = cfg.tap_budget if cfg.tap_budget is not None else default_tap_budget(cfg.mean_photons)
    alice_rot = Rotation(cfg.alice_rotation) if cfg.alice_rotation is not None else random_rotation(rng)
    bob_rot = Rotation(cfg.bob_rotation) if cfg.bob_rotation is not None else random_rotation(rng)

    eve = None
    if cfg.eve_mode == "siphon":
        if cfg.eve_fraction is not None:
            eve = EveStrategy.siphon_fraction_all(cfg.eve_fraction)
        else:
            eve = EveStrategy.siphon_count_all(cfg.eve_count)
    elif cfg.eve_mode == "impersonate":
        rotation = Rotation(cfg.eve_rotation) if cfg.eve_rotation is not None else None
        eve = EveStrategy.impersonate(cfg.substitute_bits, rotation)

    return Scenario(
        message_bits=cfg.message_bits,
        source=source,
        alice=PartyConfig(alice_rot, tap),
        bob=PartyConfig(bob_rot, tap),
        rule=DetectionRule.for_source(source, tap, cfg.z_threshold),
        eve=eve,
        verify_hash_always=cfg.verify_hash,
        stage2_alarm=cfg.stage2_alarm,
        session_id=cfg.session_id,
    )


@dataclass(frozen=True)
class PlanConfig:
    plan: ExperimentPlan
    csv_path: str | None = None


def _float_list(raw: str) -> tuple[float, ...]:
    values = tuple(float(tok) for tok in raw.split())
    if not values:
        raise ValueError(raw)
    return values


def _int_list(raw: str) -> tuple[int, ...]:
    values = tuple(int(tok) for tok in raw.split())
    if not values:
        raise ValueError(raw)
    return values


def parse_plan_file(path: str) -> PlanConfig:
    """Parse and validate a sweep plan file."""
    parser = _read_ini(path, PLAN_KEYS)
    if not parser.has_section("plan"):
        raise ConfigError("plan file needs a [plan] section")

    mu_values = _get(parser, "plan", "mu", _float_list, None)
    if mu_values is None:
        raise ConfigError("[plan] mu is required")
    for mu in mu_values:
        _domain(mu > 0, "mu values must be positive")
    z_values = _get(parser, "plan", "z", _float_list, (5.0,))
    for z in z_values:
        _domain(z >= 0, "z values must be nonnegative")

    counts = _get(parser, "plan", "siphon_counts", _int_list, None)
    fractions = _get(parser, "plan", "siphon_fractions", _float_list, None)
    if (counts is None) == (fractions is None):
        raise ConfigError("exactly one of [plan] siphon_counts / siphon_fractions is required")
    if counts is not None:
        for n in counts:
            _domain(n >= 0, "siphon counts must be nonnegative")
    if fractions is not None:
        for f in fractions:
            _domain(0.0 <= f <= 1.0, "siphon fractions must be in [0, 1]")

    trials = _get(parser, "plan", "trials", int, 200)
    _domain(trials >= 1, "trials must be at least 1")
    message_length = _get(parser, "plan", "message_length", int, 8)
    _domain(message_length >= 1, "message_length must be at least 1")
    accuracy_target = _get(parser, "plan", "accuracy_target", float, 0.95)
    _domain(0.0 < accuracy_target <= 1.0, "accuracy_target must be in (0, 1]")

    try:
        plan = ExperimentPlan(
            mu_values=mu_values,
            z_thresholds=z_values,
            siphon_counts=counts,
            siphon_fractions=fractions,
            message_length=message_length,
            trials=trials,
            master_seed=_get(parser, "plan", "master_seed", int, 0),
            accuracy_target=accuracy_target,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return PlanConfig(plan=plan, csv_path=_get(parser, "output", "csv", str, None))
