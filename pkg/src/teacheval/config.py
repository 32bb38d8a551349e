"""Flat key=value configuration with dotted keys, typed schema, file loading,
override precedence (CLI > file > defaults), hashing, and seed derivation."""

from __future__ import annotations

import hashlib
from pathlib import Path

from .errors import ConfigError


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(text).split(",") if x.strip() != "")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(text).split(",") if x.strip() != "")


def _strs(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in str(text).split(",") if x.strip() != "")


# key -> (caster from string, default value)
SCHEMA: dict[str, tuple] = {
    "seed": (int, 0),
    "mode": (str, "full"),  # full | no_dualgcn | no_refine
    "data.path": (str, ""),
    "data.format": (str, "jsonl"),
    "data.synth_records": (int, 200),
    "data.synth_vocab": (int, 50),
    "data.synth_priors": (_floats, (0.3, 0.4, 0.3)),
    "split.train": (float, 0.70),
    "split.val": (float, 0.15),
    "split.test": (float, 0.15),
    "tokenizer.max_len": (int, 128),
    "encoder.provider": (str, "stub"),  # stub | pretrained
    "encoder.dim": (int, 768),
    "encoder.model": (str, ""),
    "parser.provider": (str, "stub"),  # stub | file
    "parser.file": (str, ""),
    "synergy.layers": (int, 3),
    "synergy.tau": (float, 1.0),
    "synergy.eta": (float, 0.3),
    "synergy.dropout": (float, 0.1),
    "loss.diff_reg_weight": (float, 0.0),
    "dims.words": (_strs, ("Professionalism", "Occupational", "Effectiveness", "Quality", "Other")),
    "dims.trainable_queries": (_bool, False),
    "refine.enabled": (_bool, True),
    "refine.segmentation": (str, "auto"),  # auto | annotated | uniform
    "dyt.alpha_init": (float, 0.5),
    "head.mode": (str, "shared"),  # shared | independent
    "head.dropout": (float, 0.1),
    "head.class_weights": (_floats, (1.0, 1.0, 1.0)),
    "train.batch_size": (int, 64),
    "train.epochs": (int, 10),
    "train.lr_init": (float, 2e-3),
    "train.lr_min": (float, 5e-4),
    "train.t_max": (int, 10),
    "train.seeds": (_ints, (0, 1, 2, 3, 4)),
    "train.clip_norm": (float, 5.0),
    "train.weight_decay": (float, 0.0),
    "train.threads": (int, 1),
    "eval.ece_bins": (int, 10),
    "eval.top_frac": (float, 0.2),
}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class Config:
    """Immutable resolved configuration."""

    def __init__(self, values: dict):
        unknown = sorted(set(values) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        self._values = {key: values.get(key, default) for key, (_, default) in SCHEMA.items()}

    def __getitem__(self, key: str):
        try:
            return self._values[key]
        except KeyError as e:
            raise ConfigError(f"unknown config key {key!r}") from e

    def get(self, key: str):
        return self[key]

    def with_overrides(self, overrides: dict) -> "Config":
        merged = dict(self._values)
        for key, raw in overrides.items():
            merged[key] = _cast(key, raw)
        return Config(merged)

    def resolved_text(self) -> str:
        return "".join(f"{k} = {_format_value(self._values[k])}\n" for k in sorted(self._values))

    def hash(self) -> str:
        return hashlib.sha256(self.resolved_text().encode("utf-8")).hexdigest()

    def items(self):
        return self._values.items()


def _cast(key: str, raw):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    caster, default = SCHEMA[key]
    try:
        if isinstance(raw, str):
            return caster(raw)
        if isinstance(raw, (list, tuple)):
            return caster(",".join(str(x) for x in raw))
        if isinstance(default, bool):
            return bool(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad value for {key}: {raw!r} ({e})") from e


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        values[key.strip()] = _cast(key.strip(), raw.strip())
    return values


def parse_overrides(pairs) -> dict:
    values: dict = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        values[key.strip()] = _cast(key.strip(), raw.strip())
    return values


def build_config(path: str | Path | None = None, overrides=None) -> Config:
    """Defaults, then config-file values, then command-line overrides."""
    values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(encoding="utf-8"), source=str(p)))
    if overrides:
        values.update(overrides if isinstance(overrides, dict) else parse_overrides(overrides))
    return Config(values)


def derive_seed(master: int, name: str) -> int:
    """Stable named sub-seed from the single master seed."""
    digest = hashlib.sha256(f"{master}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")
