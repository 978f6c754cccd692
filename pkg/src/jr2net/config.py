"""Flat ``key = value`` run-config files.

One assignment per line, ``#`` starts a comment, keys are lowercase snake
case. Unknown keys are errors. Every problem in a file is collected and
reported together so a run never starts on a half-valid config.
"""
import re
from dataclasses import dataclass, field, fields

from .training import TrainConfig

PATH_KEYS = ("dataset_dir", "checkpoint_dir", "output_dir")
_KEY = re.compile(r"^[a-z][a-z0-9_]*$")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset_dir: str = None
    checkpoint_dir: str = "checkpoints"
    output_dir: str = "out"


def _coerce(raw, kind, key):
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        if raw.lower() in ("none", ""):
            return None
        return float(raw)
    return raw


def _field_types():
    """Map lowercase config key -> (TrainConfig field name, value type)."""
    out = {}
    for f in fields(TrainConfig):
        kind = float if f.name == "snr_db" else type(f.default)
        out[f.name.lower()] = (f.name, kind)
    return out


def parse_config(text, overrides=None):
    """Parse config text into a :class:`RunConfig`; raises :class:`ConfigError`."""
    types = _field_types()
    problems = []
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {n}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            problems.append(f"line {n}: key {key!r} is not lowercase snake case")
        elif key not in types and key not in PATH_KEYS:
            problems.append(f"line {n}: unknown key {key!r}")
        elif key in values:
            problems.append(f"line {n}: duplicate key {key!r}")
        else:
            values[key] = raw
    values.update(overrides or {})
    train_kwargs = {}
    run_kwargs = {}
    for key, raw in values.items():
        if key in PATH_KEYS:
            run_kwargs[key] = str(raw)
            continue
        name, kind = types[key.lower()]
        try:
            train_kwargs[name] = raw if not isinstance(raw, str) else _coerce(raw, kind, key)
        except ValueError:
            problems.append(f"{key}: cannot parse {raw!r} as {kind.__name__}")
    cfg = TrainConfig(**train_kwargs)
    problems += cfg.problems()
    if problems:
        raise ConfigError(problems)
    return RunConfig(train=cfg, **run_kwargs)


def load_config(path, overrides=None):
    with open(path) as fh:
        return parse_config(fh.read(), overrides)


def dump_config(run):
    lines = [f"{k} = {getattr(run, k)}" for k in PATH_KEYS if getattr(run, k) is not None]
    for f in fields(TrainConfig):
        v = getattr(run.train, f.name)
        lines.append(f"{f.name.lower()} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"
