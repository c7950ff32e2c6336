"""Run configuration: INI-style sections, dotted-path overrides, strict validation.

Values are JSON literals (``0.99``, ``true``, ``[1, 2]``); anything that does
not parse as JSON is kept as a bare string.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """A configuration problem; ``str(err)`` names the offending section/field."""


@dataclass
class EnvSection:
    kind: str = "lbf"  # lbf | matrix
    width: int = 10
    height: int = 10
    agent_levels: list = field(default_factory=lambda: [1, 1, 1])
    food_levels: list = field(default_factory=lambda: [1, 1, 1])
    sight: int = 2
    max_steps: int = 50
    move_penalty: float = -0.002
    payoff: object = "climbing"  # preset name or nested list

    def validate(self):
        if self.kind not in ("lbf", "matrix"):
            raise ConfigError(f"env.kind: expected 'lbf' or 'matrix', got {self.kind!r}")
        if self.kind == "lbf":
            for name in ("width", "height", "max_steps"):
                if getattr(self, name) <= 0:
                    raise ConfigError(f"env.{name}: must be positive")
            if not self.agent_levels or not self.food_levels:
                raise ConfigError("env.agent_levels/env.food_levels: need at least one entry each")
            if self.sight < 0:
                raise ConfigError("env.sight: must be >= 0")


@dataclass
class AgentSection:
    hidden: int = 64
    agent_id: bool = True
    per_agent: bool = False

    def validate(self):
        if self.hidden <= 0:
            raise ConfigError("agent.hidden: must be positive")


@dataclass
class MixerSection:
    kind: str = "qcofr"  # qcofr | vdn
    n_ladders: int = 4
    depth: int = 2
    delta: float = 0.01
    variant: str = "cfn"
    igm: bool = True
    key_width: int = 32
    single_depth: int = 2
    init_scale: float = 1.0

    def validate(self):
        if self.kind not in ("qcofr", "vdn"):
            raise ConfigError(f"mixer.kind: expected 'qcofr' or 'vdn', got {self.kind!r}")
        if self.variant not in ("cfn", "cfn-c", "cfn-d"):
            raise ConfigError(f"mixer.variant: unknown variant {self.variant!r}")
        for name in ("n_ladders", "depth", "key_width", "single_depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"mixer.{name}: must be >= 1")
        if not self.delta > 0:
            raise ConfigError("mixer.delta: must be > 0")


@dataclass
class VIBSection:
    enabled: bool = True
    latent_dim: int = 32
    mlp_width: int = 64
    beta: float = 1e-3

    def validate(self):
        if self.beta < 0:
            raise ConfigError("vib.beta: must be >= 0")
        if self.latent_dim < 1 or self.mlp_width < 1:
            raise ConfigError("vib.latent_dim/vib.mlp_width: must be >= 1")


@dataclass
class TrainerSection:
    seed: int = 0
    gamma: float = 0.99
    lr: float = 0.0005
    rms_alpha: float = 0.99
    rms_eps: float = 1e-5
    batch_size: int = 32
    buffer_size: int = 5000
    target_update_interval: int = 200
    total_steps: int = 1_000_000
    test_interval: int = 10_000
    test_episodes: int = 32
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_anneal: int = 50_000
    grad_clip: float = 10.0
    save_interval: int = 0  # env steps between checkpoints; 0 = final only

    def validate(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError("trainer.gamma: must be in (0, 1]")
        if self.lr < 0:
            raise ConfigError("trainer.lr: must be >= 0")
        for name in ("batch_size", "buffer_size", "target_update_interval", "total_steps", "test_interval", "test_episodes"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"trainer.{name}: must be positive")
        if not 0 <= self.epsilon_end <= 1 or not 0 <= self.epsilon_start <= 1:
            raise ConfigError("trainer.epsilon_start/epsilon_end: must lie in [0, 1]")


@dataclass
class RunSection:
    name: str = "run"
    out_dir: str = "runs"

    def validate(self):
        pass


SECTIONS = {
    "run": RunSection,
    "env": EnvSection,
    "agent": AgentSection,
    "mixer": MixerSection,
    "vib": VIBSection,
    "trainer": TrainerSection,
}
REQUIRED = ("env",)


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    env: EnvSection = field(default_factory=EnvSection)
    agent: AgentSection = field(default_factory=AgentSection)
    mixer: MixerSection = field(default_factory=MixerSection)
    vib: VIBSection = field(default_factory=VIBSection)
    trainer: TrainerSection = field(default_factory=TrainerSection)

    def validate(self) -> "RunConfig":
        for name in SECTIONS:
            getattr(self, name).validate()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict, require=REQUIRED) -> "RunConfig":
        for name in require:
            if name not in data:
                raise ConfigError(f"missing required section [{name}]")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
        parts = {}
        for name, section_cls in SECTIONS.items():
            parts[name] = _build_section(name, section_cls, data.get(name, {}))
        return cls(**parts).validate()

    def with_overrides(self, overrides: list[str]) -> "RunConfig":
        data = self.to_dict()
        for item in overrides:
            key, value = _split_override(item)
            section, _, name = key.partition(".")
            if section not in SECTIONS or not name:
                raise ConfigError(f"override {item!r}: expected section.field=value")
            data[section][name] = value
        return RunConfig.from_dict(data)

    def to_ini(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            for k, v in dataclasses.asdict(getattr(self, name)).items():
                lines.append(f"{k} = {json.dumps(v)}")
            lines.append("")
        return "\n".join(lines)

    def save(self, path) -> None:
        Path(path).write_text(self.to_ini())


def _parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        low = raw.lower()
        if low in ("true", "false"):
            return low == "true"
        return raw


def _coerce(section: str, f: dataclasses.Field, value):
    where = f"{section}.{f.name}"
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            raise TypeError
        if kind == "int":
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if kind == "float":
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind == "str":
            return str(value)
        if kind == "list":
            if not isinstance(value, list):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {kind}, got {value!r}") from None
    return value


def _build_section(name: str, section_cls, values: dict):
    known = {f.name: f for f in fields(section_cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"[{name}] unknown key(s): {', '.join(sorted(unknown))}")
    kwargs = {k: _coerce(name, known[k], v) for k, v in values.items()}
    return section_cls(**kwargs)


def _split_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r}: expected key=value")
    key, raw = item.split("=", 1)
    return key.strip(), _parse_value(raw)


def load_config(path, overrides: list[str] | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from None
    data = {sec: {k: _parse_value(v) for k, v in parser.items(sec)} for sec in parser.sections()}
    cfg = RunConfig.from_dict(data)
    return cfg.with_overrides(overrides or [])
