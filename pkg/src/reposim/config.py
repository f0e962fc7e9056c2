"""Run configuration: one plain-text key-value file, flag overrides win.

Example config file::

    corpus_root = ./corpus
    out_dir = ./out
    seed = 42
    weights = All          # preset name or "1,0.5,0"
    agg = mean
    meta.epochs = 20
    struct.walk_length = 40
    struct.p = 1.0
    code.window = 5

Unknown keys are rejected. All randomness downstream flows from ``seed``
via named sub-streams.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .fusion import FusionWeights, variant_weights
from .structembed import AGGREGATORS, WalkConfig
from .textembed import EmbedConfig

_EMBED_KEYS = {"window", "negatives", "epochs", "initial_lr", "min_count"}
_WALK_KEYS = {"p", "q", "walks_per_node", "walk_length"}
_TOP_KEYS = {"corpus_root", "out_dir", "seed", "dim", "weights", "agg"}


@dataclass
class RunConfig:
    corpus_root: Path | None = None
    out_dir: Path = Path("out")
    seed: int = 42
    dim: int = 128
    weights: FusionWeights = field(default_factory=lambda: variant_weights("All"))
    agg: str = "mean"
    meta_embed: EmbedConfig = field(default_factory=EmbedConfig)
    struct_embed: EmbedConfig = field(default_factory=EmbedConfig)
    struct_walk: WalkConfig = field(default_factory=WalkConfig)
    code_embed: EmbedConfig = field(default_factory=EmbedConfig)

    def __post_init__(self) -> None:
        if self.agg not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {self.agg!r}")

    def describe(self) -> dict:
        """JSON-serializable view of everything that affects results."""

        def embed(cfg: EmbedConfig) -> dict:
            return {
                "window": cfg.window,
                "negatives": cfg.negatives,
                "epochs": cfg.epochs,
                "initial_lr": cfg.initial_lr,
                "min_count": cfg.min_count,
            }

        return {
            "seed": self.seed,
            "dim": self.dim,
            "weights": list(self.weights.as_tuple()),
            "agg": self.agg,
            "meta": embed(self.meta_embed),
            "struct": {
                **embed(self.struct_embed),
                "p": self.struct_walk.p,
                "q": self.struct_walk.q,
                "walks_per_node": self.struct_walk.walks_per_node,
                "walk_length": self.struct_walk.walk_length,
            },
            "code": embed(self.code_embed),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def parse_config_file(path: Path) -> dict[str, str]:
    """Key = value pairs; blank lines and # comments ignored."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def parse_weights(value: str) -> FusionWeights:
    """A preset name (M, MS, All) or three comma-separated floats."""
    value = value.strip()
    try:
        return variant_weights(value)
    except ValueError:
        pass
    parts = value.split(",")
    if len(parts) != 3:
        raise ValueError(f"weights must be a preset name or three floats, got {value!r}")
    return FusionWeights(*(float(p) for p in parts))


def apply_config(config: RunConfig, values: dict[str, str]) -> RunConfig:
    """Overlay parsed key-value pairs onto a RunConfig."""
    embed_updates: dict[str, dict] = {"meta": {}, "struct": {}, "code": {}}
    walk_updates: dict[str, float | int] = {}
    top: dict = {}
    for key, value in values.items():
        if key in _TOP_KEYS:
            if key in ("corpus_root", "out_dir"):
                top[key] = Path(value)
            elif key in ("seed", "dim"):
                top[key] = int(value)
            elif key == "weights":
                top[key] = parse_weights(value)
            else:
                top[key] = value
            continue
        if "." in key:
            section, sub = key.split(".", 1)
            if section in embed_updates and sub in _EMBED_KEYS:
                caster = float if sub == "initial_lr" else int
                embed_updates[section][sub] = caster(value)
                continue
            if section == "struct" and sub in _WALK_KEYS:
                caster = int if sub in ("walks_per_node", "walk_length") else float
                walk_updates[sub] = caster(value)
                continue
        raise ValueError(f"unknown config key {key!r}")

    config = replace(config, **top)
    if embed_updates["meta"]:
        config = replace(config, meta_embed=replace(config.meta_embed, **embed_updates["meta"]))
    if embed_updates["struct"]:
        config = replace(config, struct_embed=replace(config.struct_embed, **embed_updates["struct"]))
    if embed_updates["code"]:
        config = replace(config, code_embed=replace(config.code_embed, **embed_updates["code"]))
    if walk_updates:
        config = replace(config, struct_walk=replace(config.struct_walk, **walk_updates))
    return config


def load_config(path: Path | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then config file, then explicit overrides (flags win)."""
    config = RunConfig()
    if path is not None:
        config = apply_config(config, parse_config_file(path))
    if overrides:
        config = apply_config(config, overrides)
    return config
