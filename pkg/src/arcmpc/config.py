"""INI configuration: one documented default file, user overrides, then command-line flags."""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .behaviors import BehaviorConfig
from .control import Controller, TrackerGains
from .core import CostWeights, HorizonConfig, VelocityLimits
from .mpc import MPCConfig, PlannerConfig
from .optimizer import OptBudget
from .plants import FirstOrderParams, PendulumParams, make_plant
from .sim import Scenario, World, load_world


class ConfigError(ValueError):
    """Invalid configuration file or flag."""


#: section name -> dataclass whose fields it sets
SECTIONS = {
    "horizon": HorizonConfig,
    "weights": CostWeights,
    "behaviors": BehaviorConfig,
    "planner": PlannerConfig,
    "optimizer": OptBudget,
    "gains": TrackerGains,
    "limits": VelocityLimits,
    "firstorder": FirstOrderParams,
    "pendulum": PendulumParams,
}
MPC_KEYS = ("r_robot", "strategy", "collision_margin", "certify_dwell", "certify_steps")
SCENARIO_KEYS = ("timeout", "laps", "sim_step", "log_step", "n_beams", "max_range", "arrival_dwell",
                 "arrival_radius", "start_jitter", "stop_at_goal")


def default_config_path() -> Path:
    return Path(str(resources.files("arcmpc") / "data" / "default.ini"))


def env_path(name: str) -> Path:
    """An environment file path, or the name of a shipped environment (``corridor_a``)."""
    p = Path(name)
    if p.exists():
        return p
    shipped = Path(str(resources.files("arcmpc") / "data" / "envs" / f"{name}.txt"))
    if shipped.exists():
        return shipped
    raise ConfigError(f"environment {name!r} not found")


def _convert(text: str, hint, default):
    """Convert an INI value to the type of a dataclass field."""
    text = text.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if type(None) in args:
        if text.lower() in ("none", ""):
            return None
        hint = next(a for a in args if a is not type(None))
        origin, args = typing.get_origin(hint), typing.get_args(hint)
    if hint is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if origin is tuple:
        items = [t for t in text.replace(",", " ").split()]
        return tuple(float(t) for t in items)
    if hint in (int, float, str):
        return hint(text)
    raise ValueError(f"unsupported field type {hint!r}")


def _fields(cls) -> dict:
    hints = typing.get_type_hints(cls)
    return {f.name: (hints[f.name], f) for f in dataclasses.fields(cls) if f.init}


def _read_section(cp: configparser.ConfigParser, section: str, cls, keys=None) -> dict:
    if not cp.has_section(section):
        return {}
    known = _fields(cls)
    out = {}
    for key, raw in cp.items(section):
        if keys is not None and key not in keys or key not in known:
            raise ConfigError(f"unknown key [{section}] {key}")
        hint, f = known[key]
        try:
            out[key] = _convert(raw, hint, f.default)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    return out


@dataclass(frozen=True)
class Settings:
    """Everything needed to build a scenario, resolved from config files and flags."""

    robot: str = "firstorder"
    env: str = "corridor_a"
    paired: str = ""
    seed: int = 0
    mpc: MPCConfig = field(default_factory=MPCConfig)
    gains: TrackerGains = field(default_factory=TrackerGains)
    limits: VelocityLimits = field(default_factory=VelocityLimits)
    firstorder: FirstOrderParams = field(default_factory=FirstOrderParams)
    pendulum: PendulumParams = field(default_factory=PendulumParams)
    scenario: dict = field(default_factory=dict)
    trials: tuple[str, ...] = ("tracking", "behaviors", "refine@0.05")

    def controller(self) -> Controller:
        kwargs = {"limits": self.limits}
        if self.robot == "firstorder":
            kwargs["params"] = self.firstorder
        elif self.robot == "pendulum":
            kwargs["params"] = self.pendulum
        try:
            plant = make_plant(self.robot, **kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return Controller(plant, self.mpc.horizon.epsilon, self.gains)

    def world(self) -> World:
        paired = env_path(self.paired) if self.paired else None
        try:
            return load_world(env_path(self.env), paired=paired)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"environment: {exc}") from None

    def build(self, **mpc_overrides) -> Scenario:
        mpc = replace(self.mpc, **mpc_overrides) if mpc_overrides else self.mpc
        return Scenario(self.world(), self.controller(), mpc, seed=self.seed, **self.scenario)


def load_settings(path=None, **overrides) -> Settings:
    """Read the default file, then ``path`` on top, then keyword overrides.

    Recognized overrides: ``robot``, ``env``, ``paired``, ``seed``, ``timeout``,
    ``budget`` (an :class:`OptBudget`) and ``trials``.  Raises
    :class:`ConfigError` on unknown keys, bad values or inconsistent settings.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    cp.read(default_config_path())
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {str(path)!r} not found")
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
    allowed = set(SECTIONS) | {"run", "mpc", "scenario", "benchmark"}
    for sec in cp.sections():
        if sec not in allowed:
            raise ConfigError(f"unknown section [{sec}]")
    try:
        parts = {name: cls(**_read_section(cp, name, cls)) for name, cls in SECTIONS.items()}
        mpc_kw = _read_section(cp, "mpc", MPCConfig, MPC_KEYS)
        scen = _read_section(cp, "scenario", Scenario, SCENARIO_KEYS)
        run = dict(cp.items("run")) if cp.has_section("run") else {}
        unknown = set(run) - {"robot", "env", "paired", "seed"}
        if unknown:
            raise ConfigError(f"unknown key [run] {sorted(unknown)[0]}")
        trials = cp.get("benchmark", "trials", fallback="tracking, behaviors, refine@0.05")
        budget = overrides.get("budget") or parts["optimizer"]
        mpc = MPCConfig(horizon=parts["horizon"], weights=parts["weights"], behaviors=parts["behaviors"],
                        planner=parts["planner"], budget=budget, **mpc_kw)
        if overrides.get("timeout") is not None:
            scen["timeout"] = float(overrides["timeout"])
        settings = Settings(
            robot=overrides.get("robot") or run.get("robot", "firstorder"),
            env=overrides.get("env") or run.get("env", "corridor_a"),
            paired=run.get("paired", "") if overrides.get("paired") is None else overrides["paired"],
            seed=int(overrides["seed"]) if overrides.get("seed") is not None else int(run.get("seed", 0)),
            mpc=mpc, gains=parts["gains"], limits=parts["limits"], firstorder=parts["firstorder"],
            pendulum=parts["pendulum"], scenario=scen,
            trials=tuple(overrides.get("trials") or parse_trials(trials)),
        )
        for t in settings.trials:
            trial_config(settings.mpc, t)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return settings


def parse_budget(text: str) -> OptBudget:
    """``0.05`` is a wall-clock limit in seconds; ``evals=300`` a deterministic evaluation count."""
    text = text.strip()
    try:
        if text.startswith("evals="):
            return OptBudget(wall_clock_limit=None, max_evals=int(text[6:]))
        return OptBudget(wall_clock_limit=float(text))
    except ValueError as exc:
        raise ConfigError(f"bad optimizer budget {text!r}: {exc}") from None


def parse_trials(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def trial_config(mpc: MPCConfig, trial: str) -> MPCConfig:
    """MPC configuration for a benchmark trial: ``tracking``, ``behaviors`` or ``refine@<budget>``."""
    name, _, budget = trial.partition("@")
    if name in ("tracking", "behaviors") and not budget:
        return replace(mpc, strategy=name)
    if name == "refine":
        b = parse_budget(budget) if budget else mpc.budget
        try:
            return replace(mpc, strategy="refine", budget=b)
        except ValueError as exc:
            raise ConfigError(f"trial {trial!r}: {exc}") from None
    raise ConfigError(f"unknown trial {trial!r}; use tracking, behaviors or refine@<budget>")
