"""Experiment configuration with Table-I style defaults."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .channel import TABLE_GAINS, LinkBudget
from .drl import Td3Config

DEFAULT_PAIRS = (
    ("random", "standard_lqr"),
    ("round_robin", "standard_lqr"),
    ("persistent", "standard_lqr"),
    ("csi_greedy", "standard_lqr"),
    ("aoi_greedy", "standard_lqr"),
    ("random", "modified_lqr"),
    ("aoi_greedy", "modified_lqr"),
    ("random", "zero"),
)


class ConfigError(ValueError):
    def __init__(self, key, msg):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass
class ExperimentConfig:
    K: int = 5
    M: int = 5
    N: int = 5
    L: int = 5
    world_seed: int = 0
    eig_low: float = 1.0
    eig_high: float = 1.1
    gain_levels: tuple = TABLE_GAINS
    p_max_dbm: float = 23.0
    noise_dbm: float = -60.0
    bits: int = 400
    blocklength: int = 200
    x_max: float = 100.0
    td3: Td3Config = field(default_factory=Td3Config)
    eval_episodes: int = 100
    eval_steps: int = 100
    eval_seed: int = 1234
    pairs: tuple = DEFAULT_PAIRS
    loss_warmup_episodes: int = 20
    include_starvation: bool = True

    @property
    def budget(self) -> LinkBudget:
        return LinkBudget(self.p_max_dbm, self.noise_dbm, self.bits, self.blocklength)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gain_levels"] = list(self.gain_levels)
        d["td3"]["hidden"] = list(self.td3.hidden)
        d["pairs"] = [list(p) for p in self.pairs]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        td3_known = {f.name for f in fields(Td3Config)}
        kw = {}
        for key, val in d.items():
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
            if key == "td3":
                if not isinstance(val, dict):
                    raise ConfigError("td3", "expected a mapping")
                for k in val:
                    if k not in td3_known:
                        raise ConfigError(f"td3.{k}", "unknown configuration key")
                sub = dict(val)
                if "hidden" in sub:
                    sub["hidden"] = tuple(int(h) for h in sub["hidden"])
                kw["td3"] = Td3Config(**sub)
            elif key == "pairs":
                kw["pairs"] = tuple(tuple(p) for p in val)
            elif key == "gain_levels":
                kw["gain_levels"] = tuple(float(g) for g in val)
            else:
                kw[key] = val
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self):
        for key in ("K", "M", "N", "L"):
            if int(getattr(self, key)) < 1:
                raise ConfigError(key, "must be a positive integer")
        if self.L > self.M + self.N:
            raise ConfigError("L", "must not exceed M + N")
        if not 0 < self.td3.beta <= 1:
            raise ConfigError("td3.beta", "must lie in (0, 1]")
        if self.td3.cost_transform not in ("log", "linear"):
            raise ConfigError("td3.cost_transform", "must be 'log' or 'linear'")

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"not valid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)
