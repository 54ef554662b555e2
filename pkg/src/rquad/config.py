"""Flat ``section.key = value`` run configuration.

Sections map onto the library dataclasses::

    sim.*     QuadParams         task.*   TaskConfig
    reward.*  RewardCoeffs       hp.*     Hyperparams (except the seed)
    grid.*    PerturbGrid        run.*    seed, algorithm, output_dir, eval_workers

Lists are comma separated. ``sim.inertia = auto`` selects the default
inertia model. Blank lines and ``#`` comments are ignored.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional

from .agent import ALGORITHMS, Hyperparams
from .env import EnvConfig, RewardCoeffs, TaskConfig
from .evaluate import PerturbGrid
from .sim import QuadParams

SEED_ENV_VAR = "RQ_SEED"


class ConfigError(ValueError):
    """A configuration key is unknown, malformed or out of range."""


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    algorithm: str = "ar-ddpg"
    output_dir: str = "runs"
    eval_workers: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm: must be one of {', '.join(ALGORITHMS)}, got {self.algorithm!r}")
        if self.eval_workers < 1:
            raise ValueError(f"eval_workers: must be >= 1, got {self.eval_workers}")


_SECTIONS = {
    "sim": QuadParams,
    "task": TaskConfig,
    "reward": RewardCoeffs,
    "hp": Hyperparams,
    "grid": PerturbGrid,
    "run": RunSettings,
}
_EXCLUDED = {("hp", "seed")}


@dataclass(frozen=True)
class RunConfig:
    sim: QuadParams = QuadParams()
    task: TaskConfig = TaskConfig()
    reward: RewardCoeffs = RewardCoeffs()
    hp: Hyperparams = Hyperparams()
    grid: PerturbGrid = PerturbGrid()
    run: RunSettings = RunSettings()

    @property
    def seed(self) -> int:
        return self.run.seed

    @property
    def env(self) -> EnvConfig:
        return EnvConfig(self.sim, self.task, self.reward)

    @property
    def hyperparams(self) -> Hyperparams:
        alpha = self.hp.alpha if self.run.algorithm == "ar-ddpg" else 0.0
        return replace(self.hp, seed=self.run.seed, alpha=alpha)

    def to_text(self) -> str:
        lines = ["# rquad run configuration"]
        for section in _SECTIONS:
            obj = getattr(self, section)
            lines.append("")
            for f in dataclasses.fields(obj):
                if (section, f.name) in _EXCLUDED:
                    continue
                lines.append(f"{section}.{f.name} = {_format(getattr(obj, f.name))}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_scalar(text: str, like):
    if isinstance(like, bool):
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(like, int):
        number = float(text)
        if number != int(number):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(number)
    if isinstance(like, float):
        return float(text)
    return text


def _parse(text: str, default):
    text = text.strip()
    if default is None:
        # only sim.inertia: "auto" or three numbers
        if text.lower() in ("auto", "none", ""):
            return None
        return tuple(float(v) for v in text.split(","))
    if isinstance(default, tuple):
        like = default[0] if default else 0.0
        return tuple(_parse_scalar(v.strip(), like) for v in text.split(",") if v.strip())
    return _parse_scalar(text, default)


def parse_text(text: str) -> Dict[str, str]:
    values = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'section.key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def build(values: Mapping[str, str], base: Optional[RunConfig] = None) -> RunConfig:
    """Apply string ``values`` keyed by dotted names on top of ``base``."""
    base = base or RunConfig()
    grouped: Dict[str, Dict[str, object]] = {s: {} for s in _SECTIONS}
    for key, raw in values.items():
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name:
            raise ConfigError(f"{key}: unknown key (sections are {', '.join(_SECTIONS)})")
        obj = getattr(base, section)
        names = {f.name for f in dataclasses.fields(obj)}
        if name not in names or (section, name) in _EXCLUDED:
            hint = " (use run.seed)" if (section, name) == ("hp", "seed") else ""
            raise ConfigError(f"{key}: unknown key{hint}")
        try:
            grouped[section][name] = _parse(str(raw), getattr(obj, name))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    parts = {}
    for section, updates in grouped.items():
        obj = getattr(base, section)
        try:
            parts[section] = replace(obj, **updates) if updates else obj
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}.{exc}") from None
    return RunConfig(**parts)


def load(path=None, overrides: Optional[Mapping[str, str]] = None, environ: Mapping[str, str] = os.environ) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides``, then ``RQ_SEED``."""
    values: Dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_text(text))
    values.update(overrides or {})
    if environ.get(SEED_ENV_VAR):
        values["run.seed"] = environ[SEED_ENV_VAR]
    return build(values)


def parse_overrides(args: Iterable[str]) -> Dict[str, str]:
    """Turn ``["--hp.alpha", "0.2", "--run.seed=3"]`` into a key/value map."""
    args = list(args)
    out: Dict[str, str] = {}
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--") or "." not in arg.split("=", 1)[0]:
            raise ConfigError(f"unexpected argument {arg!r}; overrides look like --section.key VALUE")
        key = arg[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(args):
                raise ConfigError(f"{key}: missing value")
            value = args[i + 1]
            i += 1
        out[key] = value
        i += 1
    return out
