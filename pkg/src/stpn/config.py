"""Flat key-value configuration shared by every subcommand.

Format: one ``key = value`` per line, ``#`` comments, keys namespaced with
dots (``model.heads``, ``data.flights_file``). Environment variables with
the ``STPN_`` prefix override file values: ``STPN_MODEL_HEADS=8`` overrides
``model.heads``. Lists are comma separated.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, asdict

ENV_PREFIX = "STPN_"

US_WEATHER_CATEGORIES = [
    "normal",
    "severe_cold",
    "fog",
    "hail",
    "rain",
    "snow",
    "storm",
    "other_precipitation",
]

CHINA_WEATHER_CATEGORIES = ["normal", "rain", "cloud", "thunderstorm", "fog", "storm", "snow"]


def parse_config_file(path) -> dict[str, str]:
    cfg: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            cfg[key.strip()] = value.strip()
    return cfg


def apply_env_overrides(cfg: dict[str, str], environ=None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    out = dict(cfg)
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX):
            out[key[len(ENV_PREFIX) :].lower().replace("_", ".")] = value
    return out


def load_config(path, environ=None) -> dict[str, str]:
    return apply_env_overrides(parse_config_file(path), environ)


def _get(cfg, key, default):
    return cfg.get(key, default)


def get_int(cfg, key, default: int) -> int:
    return int(_get(cfg, key, default))


def get_float(cfg, key, default: float) -> float:
    return float(_get(cfg, key, default))


def get_bool(cfg, key, default: bool) -> bool:
    v = _get(cfg, key, default)
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def get_list(cfg, key, default: list[str]) -> list[str]:
    v = _get(cfg, key, None)
    if v is None:
        return list(default)
    return [item.strip() for item in str(v).split(",") if item.strip()]


def get_int_list(cfg, key, default: list[int]) -> list[int]:
    return [int(x) for x in get_list(cfg, key, [str(d) for d in default])]


@dataclass
class ModelConfig:
    """Architecture and training hyperparameters.

    Defaults are the full-scale setup: four conv layers with hidden widths
    [128, 64, 32], 4 attention heads, diffusion order 2, SE reduction 16,
    4-dim weather embedding, Adam at lr 0.001.
    """

    n_airports: int = 0
    history_steps: int = 12
    horizon_steps: int = 12
    relations: int = 3
    diffusion_order: int = 2
    heads: int = 4
    pos_dim: int = 16
    qk_dim: int = 32
    weather_embed_dim: int = 4
    weather_categories: int = 8
    hidden_widths: list[int] = field(default_factory=lambda: [128, 64, 32])
    se_reduction: int = 16
    slots_per_day: int = 36
    include_identity: bool = True
    l_pos_init: float = 10000.0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 32
    grad_clip: float = 0.0  # 0 disables clipping

    def validate(self) -> None:
        if not self.hidden_widths:
            raise ValueError("hidden_widths must be nonempty")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        if self.diffusion_order < 0:
            raise ValueError("diffusion_order must be >= 0")
        if self.pos_dim < 2 or self.pos_dim % 2 != 0:
            raise ValueError(f"pos_dim must be even and >= 2, got {self.pos_dim}")
        if self.qk_dim % self.heads != 0:
            raise ValueError(f"qk_dim {self.qk_dim} must be divisible by heads {self.heads}")
        if self.weather_embed_dim < 1 or self.weather_categories < 1:
            raise ValueError("weather embedding dims must be >= 1")
        if self.se_reduction < 1:
            raise ValueError("se_reduction must be >= 1")
        if self.history_steps < 1 or self.horizon_steps < 1:
            raise ValueError("window lengths must be >= 1")
        if self.l_pos_init <= 0:
            raise ValueError("l_pos_init must be positive")

    @property
    def diffusion_orders(self) -> list[int]:
        start = 0 if self.include_identity else 1
        return list(range(start, self.diffusion_order + 1))

    @property
    def input_channels(self) -> int:
        return 2 + self.weather_embed_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_config_map(cls, cfg: dict[str, str]) -> "ModelConfig":
        base = cls()
        mc = cls(
            n_airports=get_int(cfg, "model.n_airports", base.n_airports),
            history_steps=get_int(cfg, "model.history_steps", base.history_steps),
            horizon_steps=get_int(cfg, "model.horizon_steps", base.horizon_steps),
            relations=get_int(cfg, "model.relations", base.relations),
            diffusion_order=get_int(cfg, "model.diffusion_order", base.diffusion_order),
            heads=get_int(cfg, "model.heads", base.heads),
            pos_dim=get_int(cfg, "model.pos_dim", base.pos_dim),
            qk_dim=get_int(cfg, "model.qk_dim", base.qk_dim),
            weather_embed_dim=get_int(cfg, "model.weather_embed_dim", base.weather_embed_dim),
            weather_categories=get_int(cfg, "model.weather_categories", base.weather_categories),
            hidden_widths=get_int_list(cfg, "model.hidden_widths", base.hidden_widths),
            se_reduction=get_int(cfg, "model.se_reduction", base.se_reduction),
            slots_per_day=get_int(cfg, "model.slots_per_day", base.slots_per_day),
            include_identity=get_bool(cfg, "model.include_identity", base.include_identity),
            l_pos_init=get_float(cfg, "model.l_pos_init", base.l_pos_init),
            lr=get_float(cfg, "train.lr", base.lr),
            beta1=get_float(cfg, "train.beta1", base.beta1),
            beta2=get_float(cfg, "train.beta2", base.beta2),
            eps=get_float(cfg, "train.eps", base.eps),
            epochs=get_int(cfg, "train.epochs", base.epochs),
            batch_size=get_int(cfg, "train.batch_size", base.batch_size),
            grad_clip=get_float(cfg, "train.grad_clip", base.grad_clip),
        )
        mc.validate()
        return mc
