"""Run configuration: nested dataclasses loaded from YAML.

Unknown keys and type mismatches are rejected with the offending line. The
resolved form (every default filled in) is what gets echoed into a run
directory, and loading it back gives the same config.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from mra.envs import GameSet, GameSpec
from mra.envs.gameset import make_game_set
from mra.errors import ConfigError, ContractError, ParameterError
from mra.relnet import ModelConfig
from mra.train import TrainConfig

COMMANDS = ("train", "adapt", "eval", "oracle", "plot")
CHECKS = ("nashconv", "lemma1", "sigma")
PLOT_KINDS = ("returns", "mi", "aux_loss", "trajectories")


@dataclass
class GameSetConfig:
    env_kind: str = "treasure"
    populations: list = field(default_factory=lambda: [[2]])
    horizon: int = 20
    landmarks: int | None = None
    sparse: bool = False

    def build(self) -> GameSet:
        return make_game_set(self.env_kind, self.populations, self.horizon, self.landmarks, self.sparse)

    def spec(self, populations) -> GameSpec:
        return GameSpec(self.env_kind, tuple(populations), self.horizon, self.landmarks, self.sparse)


@dataclass
class AdaptConfig:
    episodes: int = 200
    populations: list | None = None     # novel game; None means the first training game
    freeze_theta: bool = False
    beta: float | None = None            # adaptation step size; None inherits train.beta
    min_steps_per_update: int | None = None

    def overrides(self) -> dict:
        return {k: v for k, v in (("beta", self.beta), ("min_steps_per_update", self.min_steps_per_update))
                if v is not None}


@dataclass
class EvalConfig:
    runs: int = 40
    zero_shot: str = "expect"
    populations: list | None = None
    cross: bool = False
    pacman_single: str | None = None     # checkpoint paths for the cross-play protocol
    pacman_mra: str | None = None
    ghost_single: str | None = None
    ghost_mra: str | None = None
    trajectories: int = 0                # episodes to dump as JSONL


@dataclass
class OracleConfig:
    game: str | None = None
    check: str = "nashconv"
    policy: str = "uniform"              # uniform, or a flat list of per-agent probabilities
    gamma: float | None = None           # overrides the game's discount when set
    eval_game: str | None = None         # second game for the sigma distance
    probes: int = 200
    cases: int = 200                     # random pairs for the lemma1 audit
    resolution: float = 0.05
    tol: float = 1e-3


@dataclass
class PlotConfig:
    metrics: list = field(default_factory=list)
    kinds: list = field(default_factory=lambda: ["returns"])
    trajectories: list = field(default_factory=list)


@dataclass
class RunConfig:
    command: str = "train"
    seed: int = 0
    output: str = "runs/default"
    checkpoint: str | None = None
    game_set: GameSetConfig = field(default_factory=GameSetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    plot: PlotConfig = field(default_factory=PlotConfig)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ParameterError(f"unknown command {self.command!r}")
        if self.eval.zero_shot not in ("expect", "enumerate"):
            raise ParameterError(f"zero_shot must be expect or enumerate, got {self.eval.zero_shot!r}")
        if self.oracle.check not in CHECKS:
            raise ParameterError(f"unknown oracle check {self.oracle.check!r}")
        bad = [k for k in self.plot.kinds if k not in PLOT_KINDS]
        if bad:
            raise ParameterError(f"unknown plot kinds {bad}")
        if self.eval.runs < 1 or self.adapt.episodes < 0:
            raise ParameterError("eval.runs must be >= 1 and adapt.episodes >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dump())
        return path

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)


# -- loading -----------------------------------------------------------------
def _line(node) -> int:
    return node.start_mark.line + 1


def _expected_types(cls) -> dict:
    """Allowed python types per field, read from its annotation."""
    out = {}
    hints = {f.name: f.type for f in dataclasses.fields(cls)}
    for f in dataclasses.fields(cls):
        t = str(hints[f.name])
        allowed = []
        for name, py in (("int", int), ("float", float), ("bool", bool), ("str", str), ("list", list)):
            if name in t:
                allowed.append(py)
        if "float" in t:
            allowed.append(int)
        out[f.name] = (tuple(allowed), "None" in t)
    return out


def _as_float(text: str, default):
    # YAML 1.1 reads 3e-4 as a string
    try:
        return float(text)
    except ValueError:
        return default


def _build(cls, node, path: str):
    if node is None:
        return cls()
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{path or 'config'} must be a mapping", _line(node))
    names = {f.name: f for f in dataclasses.fields(cls)}
    types = _expected_types(cls)
    kwargs, lines = {}, {}
    for key_node, val_node in node.value:
        key = key_node.value
        where = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(f"unknown key {where!r}", _line(key_node))
        lines[key] = _line(key_node)
        sub = _nested_type(cls, key)
        if sub is not None:
            kwargs[key] = _build(sub, val_node, where)
            continue
        value = yaml.safe_load(yaml.serialize(val_node))
        allowed, nullable = types[key]
        if isinstance(value, str) and float in allowed:
            value = _as_float(value, value)
        if value is None:
            if not nullable:
                raise ConfigError(f"{where} may not be null", _line(val_node))
        elif allowed and (not isinstance(value, allowed) or (isinstance(value, bool) and bool not in allowed)):
            want = "/".join(t.__name__ for t in allowed)
            raise ConfigError(f"{where} expects {want}, got {type(value).__name__}", _line(val_node))
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (ParameterError, ContractError) as e:
        line = next((n for k, n in lines.items() if k in str(e)), _line(node))
        raise ConfigError(f"{path or 'config'}: {e}", line) from e


_NESTED = {
    RunConfig: {"game_set": GameSetConfig, "train": TrainConfig, "adapt": AdaptConfig, "eval": EvalConfig,
                "oracle": OracleConfig, "plot": PlotConfig},
    TrainConfig: {"model": ModelConfig},
}


def _nested_type(cls, key):
    return _NESTED.get(cls, {}).get(key)


def parse_config(text: str) -> RunConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {e}", mark.line + 1 if mark else None) from e
    return _build(RunConfig, root, "")


def apply_env(cfg: RunConfig, env=None) -> RunConfig:
    """``MRA_SEED`` overrides the config seed."""
    env = os.environ if env is None else env
    if env.get("MRA_SEED") not in (None, ""):
        try:
            cfg.seed = int(env["MRA_SEED"])
        except ValueError as e:
            raise ConfigError(f"MRA_SEED must be an integer, got {env['MRA_SEED']!r}") from e
    return cfg


def load_config(path, env=None) -> RunConfig:
    """Parse a config file, then apply environment overrides."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return apply_env(parse_config(path.read_text()), env)
