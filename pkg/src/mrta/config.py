"""Run configuration: dataclasses plus the plain-text ``key = value`` file format.

A config file holds one ``key = value`` pair per line. ``#`` starts a comment.
Tuple-valued keys take comma-separated numbers, and ``mass_choices`` takes
``mass:probability`` pairs::

    n_robots = 3
    n_objects = 6
    spawn_region = 2, 8, 2, 8        # xmin, xmax, ymin, ymax
    mass_choices = 1:0.5, 3:0.5
    episodes = 2000

Keys that are not fields of :class:`WorldConfig` or :class:`TrainConfig`
are rejected.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed or out-of-range configuration."""


@dataclass(frozen=True)
class WorldConfig:
    n_robots: int = 3
    n_objects: int = 6
    k_neighbors: int = 2
    spawn_region: tuple[float, float, float, float] = (2.0, 8.0, 2.0, 8.0)
    goal_center: tuple[float, float] = (5.0, 5.0)
    goal_radius: float = 4.0
    robot_capacity: float = 1.0
    mass_choices: tuple[tuple[float, float], ...] = ((1.0, 0.5), (3.0, 0.5))
    robot_speed: float = 1.0
    carry_speed: float = 0.5
    attach_radius: float = 0.5
    selection_period: float = 1.0
    n_substeps: int = 10
    max_steps: int = 150
    completion_threshold: float = 0.05
    reward_lambda: float = 300.0
    # controller constants shared by every policy that runs on this world
    k_phi: float = 0.2
    stuck_threshold: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("n_robots", "n_objects", "k_neighbors", "n_substeps", "max_steps"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        for name in ("goal_radius", "robot_capacity", "robot_speed", "carry_speed",
                     "attach_radius", "selection_period", "completion_threshold",
                     "k_phi", "stuck_threshold"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        if not (math.isfinite(self.reward_lambda) and self.reward_lambda >= 0):
            raise ConfigError("reward_lambda must be finite and non-negative")
        xmin, xmax, ymin, ymax = self.spawn_region
        if not (xmax > xmin and ymax > ymin):
            raise ConfigError(f"spawn_region must have positive extent, got {self.spawn_region}")
        if len(self.goal_center) != 2:
            raise ConfigError("goal_center must be a 2D point")
        if not self.mass_choices:
            raise ConfigError("mass_choices must not be empty")
        probs = [p for _, p in self.mass_choices]
        if any(m <= 0 for m, _ in self.mass_choices) or any(p < 0 for p in probs):
            raise ConfigError("masses must be positive and probabilities non-negative")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError(f"mass probabilities must sum to 1, got {sum(probs)}")
        if self.completion_threshold >= self.attach_radius:
            raise ConfigError("completion_threshold must be smaller than attach_radius")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")

    @property
    def dt_sub(self):
        return self.selection_period / self.n_substeps

    def with_heavy_proportion(self, p, light=1.0, heavy=3.0):
        """Copy with masses drawn as ``heavy`` w.p. ``p`` and ``light`` otherwise."""
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"heavy proportion must be in [0, 1], got {p}")
        return dataclasses.replace(self, mass_choices=((light, 1.0 - p), (heavy, p)))

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class TrainConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    variant: str = "ours"
    episodes: int = 200_000
    batch_size: int = 1024
    gamma: float = 0.99
    tau: float = 0.01
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    hidden_layers: int = 4
    hidden_units: int = 64
    buffer_capacity: int = 1_000_000
    warmup_batches: int = 10
    noise_initial: float = 0.3
    noise_final: float = 0.05
    noise_decay_fraction: float = 0.5
    reward_scale: float = 1.0
    checkpoint_interval: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "hidden_layers", "hidden_units", "buffer_capacity",
                     "checkpoint_interval"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.episodes < 0 or self.warmup_batches < 0:
            raise ConfigError("episodes and warmup_batches must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must be in (0, 1]")
        if self.noise_initial < 0 or self.noise_final < 0:
            raise ConfigError("noise scales must be non-negative")

    @property
    def warmup(self):
        return self.warmup_batches * self.batch_size

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


_WORLD_KEYS = {f.name: f for f in fields(WorldConfig)}
_TRAIN_KEYS = {f.name: f for f in fields(TrainConfig) if f.name != "world"}


def _parse_value(key, raw, default):
    raw = raw.strip()
    try:
        if key == "mass_choices":
            pairs = []
            for item in raw.split(","):
                m, p = item.split(":")
                pairs.append((float(m), float(p)))
            return tuple(pairs)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.split(","))
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_kv_text(text):
    """Parse ``key = value`` lines into a dict of raw strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def build_configs(raw, extra_keys=()):
    """Split a raw mapping into (WorldConfig, TrainConfig, extras).

    ``extra_keys`` names keys the caller consumes itself (sweep grids, for
    instance); they are returned untouched. Anything else unknown is an error.
    """
    world_kw, train_kw, extras = {}, {}, {}
    world_defaults = WorldConfig()
    train_defaults = TrainConfig()
    for key, value in raw.items():
        if key in extra_keys:
            extras[key] = value
        elif key in _WORLD_KEYS:
            world_kw[key] = (_parse_value(key, value, getattr(world_defaults, key))
                             if isinstance(value, str) else value)
        elif key in _TRAIN_KEYS:
            train_kw[key] = (_parse_value(key, value, getattr(train_defaults, key))
                             if isinstance(value, str) else value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    # the world seed follows the training seed unless set explicitly
    if "seed" in world_kw and "seed" not in train_kw:
        train_kw["seed"] = world_kw["seed"]
    world = WorldConfig(**world_kw)
    return world, TrainConfig(world=world, **train_kw), extras


def load_config(path, overrides=None, extra_keys=()):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = parse_kv_text(path.read_text())
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_configs(raw, extra_keys)


def config_to_dict(cfg):
    d = dataclasses.asdict(cfg)
    return json.loads(json.dumps(d))


def dump_kv(cfg):
    """Render a WorldConfig or TrainConfig back to ``key = value`` text."""
    lines = []
    items = dataclasses.asdict(cfg)
    world = items.pop("world", None)
    if world is not None:
        items = {**world, **items}
    for key, value in items.items():
        if key == "mass_choices":
            value = ", ".join(f"{m!r}:{p!r}" for m, p in value)
        elif isinstance(value, (tuple, list)):
            value = ", ".join(repr(float(v)) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_hash(cfg):
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
