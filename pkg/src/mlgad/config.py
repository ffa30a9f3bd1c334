"""Run configuration: defaults, ``key = value`` files and flag overrides.

Precedence is command-line flags over config-file values over defaults.
Config files hold one ``key = value`` per line; ``#`` starts a comment and
list values are comma separated (``levels = node, graph``).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .pipeline import TrainConfig

COMMANDS = ("synth", "sample", "train", "eval", "transfer", "oracle-check")


@dataclass
class RunConfig:
    command: str = ""
    input: str | None = None
    out: str | None = None
    checkpoint: str | None = None
    history: str | None = None
    seed: int = 0
    threads: int = 1
    allow_degenerate: bool = False
    # synth
    kind: str = "multi"
    n: int = 1000
    anomaly_rate: float = 0.05
    mode: str = "mixed"
    num_graphs: int = 200
    min_nodes: int = 30
    max_nodes_per_graph: int = 60
    graph_anomaly_rate: float = 0.2
    # sample
    targets: str = "nodes"
    # eval
    split: str = "test"
    # oracle-check
    trials: int = 200
    max_nodes: int = 12
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.kind not in ("single", "multi"):
            raise ConfigError("kind must be 'single' or 'multi'")
        if self.targets not in ("nodes", "edges", "all"):
            raise ConfigError("targets must be nodes, edges or all")
        if self.split not in ("train", "val", "test"):
            raise ConfigError("split must be train, val or test")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        return d


_RUN_KEYS = {f.name: f for f in fields(RunConfig) if f.name != "train"}
_TRAIN_KEYS = {f.name: f for f in fields(TrainConfig)}
# keys that set both the run and the training config
_SHARED = {"seed", "threads"}


def _coerce(key: str, raw, default):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    if isinstance(default, tuple):
        return tuple(p.strip() for p in text.split(",") if p.strip())
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _RUN_KEYS and key not in _TRAIN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def read_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config_text(path.read_text(), str(path))


def build_run_config(command: str, file_values: dict, flag_values: dict) -> RunConfig:
    """Merge defaults, file values and flags (in increasing priority)."""
    merged = {**file_values, **{k: v for k, v in flag_values.items() if v is not None}}
    unknown = set(merged) - set(_RUN_KEYS) - set(_TRAIN_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    run_defaults, train_defaults = RunConfig(), TrainConfig()
    run_kw, train_kw = {}, {}
    for key, raw in merged.items():
        if key in _RUN_KEYS:
            run_kw[key] = _coerce(key, raw, getattr(run_defaults, key))
        if key in _TRAIN_KEYS and (key not in _RUN_KEYS or key in _SHARED):
            train_kw[key] = _coerce(key, raw, getattr(train_defaults, key))
    run_kw["command"] = command
    return RunConfig(train=TrainConfig(**train_kw), **run_kw).validate()
