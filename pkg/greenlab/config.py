"""Experiment configuration.

Precedence: dataclass defaults < YAML file < command line flags. The file is
flat apart from the `grids` mapping:

    map: lattes_doubling
    seed: 7
    sample_count: 2000
    grids:
      rho: [0.2, 0.1, 0.05, 0.02]
      tau: [2, 10, 50]
      nu: [0.5, 0.3, 0.1]
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import List, Optional

import yaml

from greenlab.errors import ConfigError
from greenlab.green_measure import DEFAULT_BURN_IN, METHODS
from greenlab.linearization import NU_GRID, RHO_GRID, TAU_GRID

SEED_LIMIT = 1 << 64
GRIDS = ("rho", "tau", "nu")


@dataclass(frozen=True)
class ExperimentConfig:
    map: str = "lattes_doubling"
    seed: int = 0
    sample_count: int = 2000
    dimension_count: int = 5000
    burn_in: int = DEFAULT_BURN_IN
    chains: int = 1
    method: str = "backward_iteration"
    n_steps: int = 200
    n_orbits: int = 500
    n_range: List[int] = field(default_factory=lambda: list(range(13)))
    rho: List[float] = field(default_factory=lambda: list(RHO_GRID))
    tau: List[float] = field(default_factory=lambda: list(TAU_GRID))
    nu: List[float] = field(default_factory=lambda: list(NU_GRID))
    max_n: int = 10_000
    ball_radius: float = 0.01
    recurrence_radius: float = 0.1
    trace_points: int = 20
    r_min: Optional[float] = None
    r_max: Optional[float] = None
    output_dir: str = "greenlab-out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("sample_count", "dimension_count", "n_steps", "n_orbits", "chains", "max_n", "trace_points"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError("{} must be a positive integer, got {!r}".format(name, value))
        if not isinstance(self.burn_in, int) or self.burn_in < 0:
            raise ConfigError("burn_in must be a nonnegative integer, got {!r}".format(self.burn_in))
        if not isinstance(self.seed, int) or not 0 <= self.seed < SEED_LIMIT:
            raise ConfigError("seed must be a 64-bit unsigned integer, got {!r}".format(self.seed))
        if self.method not in METHODS:
            raise ConfigError("method must be one of {}, got {!r}".format(METHODS, self.method))
        if not self.n_range or min(self.n_range) < 0:
            raise ConfigError("n_range must be a non-empty list of nonnegative integers")
        for name in GRIDS:
            grid = getattr(self, name)
            if not grid or min(grid) <= 0:
                raise ConfigError("the {} grid must be non-empty and positive".format(name))
        if self.ball_radius <= 0 or self.recurrence_radius <= 0:
            raise ConfigError("ball_radius and recurrence_radius must be positive")

    def to_dict(self):
        data = asdict(self)
        data["grids"] = {name: data.pop(name) for name in GRIDS}
        return data

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping, got {}".format(type(data).__name__))

        data = dict(data)
        grids = data.pop("grids", None) or {}
        if not isinstance(grids, dict):
            raise ConfigError("grids must be a mapping of rho, tau and nu lists")
        unknown_grids = set(grids) - set(GRIDS)
        if unknown_grids:
            raise ConfigError("unknown grids: {}".format(", ".join(sorted(unknown_grids))))

        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError("unknown configuration keys: {}".format(", ".join(sorted(unknown))))

        values = dict(data)
        for name, grid in grids.items():
            values[name] = [float(v) for v in grid]
        if "n_range" in values:
            values["n_range"] = [int(n) for n in values["n_range"]]

        try:
            return cls(**values)
        except (TypeError, ValueError) as error:
            raise ConfigError("invalid configuration: {}".format(error))

    def with_overrides(self, **overrides):
        """Replace the fields given a non-None value (command line flags)."""
        given = {name: value for name, value in overrides.items() if value is not None}
        return replace(self, **given) if given else self

    def config_hash(self):
        """SHA-256 of the canonical JSON form (output directory excluded)."""
        data = self.to_dict()
        data.pop("output_dir")
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(path):
    try:
        with open(path) as file:
            data = yaml.safe_load(file)
    except OSError as error:
        raise ConfigError("cannot read configuration {}: {}".format(path, error))
    except yaml.YAMLError as error:
        raise ConfigError("malformed configuration {}: {}".format(path, error))

    return ExperimentConfig.from_dict(data or {})


def dump_config(config, path):
    with open(path, "w") as file:
        yaml.safe_dump(config.to_dict(), file, sort_keys=True, default_flow_style=None)
