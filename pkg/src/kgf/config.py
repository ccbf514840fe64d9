"""Flat YAML configuration covering every threshold and input path."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from kgf.errors import ConfigError

THRESHOLD_KEYS = (
    "delta_h", "tau_fuzzy", "gamma_ngram", "tau_typo", "alpha_lex", "map_floor",
    "delta_j", "epsilon_xi", "lambda1", "lambda2", "lambda3", "delta_t", "gamma_red",
    "n_variants", "max_inflight",
)
REQUIRED_KEYS = THRESHOLD_KEYS + ("corpus", "vocab_dir")

_UNIT_KEYS = ("delta_j", "epsilon_xi", "lambda1", "lambda2", "lambda3", "delta_t",
              "gamma_ngram", "alpha_lex", "map_floor")
_PATH_KEYS = ("corpus", "vocab_dir", "tbox", "rules", "mock_fixtures", "out")


@dataclass
class Config:
    delta_h: float
    tau_fuzzy: float
    gamma_ngram: float
    tau_typo: float
    alpha_lex: float
    map_floor: float
    delta_j: float
    epsilon_xi: float
    lambda1: float
    lambda2: float
    lambda3: float
    delta_t: float
    gamma_red: float
    n_variants: int
    max_inflight: int
    corpus: Path
    vocab_dir: Path
    tbox: Optional[Path] = None
    rules: Optional[Path] = None
    mock_fixtures: Optional[Path] = None
    out: Path = Path("out")
    n_perturbations: int = 5
    mean_entropy: bool = False
    encode_mode: str = "node"
    strict_encoding: bool = False
    strict_validation: bool = True
    endpoint: Optional[str] = None
    models: dict[str, str] = field(default_factory=dict)

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3)

    def fingerprint(self, *keys: str) -> str:
        """Hash of the named settings (all settings when none are named)."""
        data = {k: v for k, v in asdict(self).items() if not keys or k in keys}
        blob = json.dumps(data, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _number(data: Mapping[str, Any], key: str, kind=float):
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key '{key}' must be a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(f"config key '{key}' must be an integer")
    return kind(value)


def parse_config(data: Mapping[str, Any], base_dir: Path = Path("."),
                 overrides: Optional[Mapping[str, Any]] = None) -> Config:
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a key/value mapping")
    data = dict(data)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ConfigError(f"missing config key '{key}'")
    known = set(Config.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    values: dict[str, Any] = {}
    for key in THRESHOLD_KEYS:
        values[key] = _number(data, key, int if key in ("n_variants", "max_inflight") else float)
    for key in _UNIT_KEYS:
        if not 0.0 <= values[key] <= 1.0:
            raise ConfigError(f"config key '{key}' must lie in [0, 1]")
    if not 0.0 < values["gamma_red"] <= 1.0:
        raise ConfigError("config key 'gamma_red' must lie in (0, 1]")
    for key in ("tau_fuzzy", "tau_typo"):
        if not 0.0 <= values[key] <= 100.0:
            raise ConfigError(f"config key '{key}' must lie in [0, 100]")
    if values["delta_h"] < 0:
        raise ConfigError("config key 'delta_h' must be non-negative")
    if abs(values["lambda1"] + values["lambda2"] + values["lambda3"] - 1.0) > 1e-9:
        raise ConfigError("lambda1 + lambda2 + lambda3 must equal 1")
    if values["n_variants"] < 1 or values["max_inflight"] < 1:
        raise ConfigError("n_variants and max_inflight must be at least 1")

    for key in _PATH_KEYS:
        if data.get(key) is not None:
            p = Path(str(data[key]))
            values[key] = p if p.is_absolute() else (base_dir / p)
    for key in ("n_perturbations",):
        if key in data:
            values[key] = _number(data, key, int)
    for key in ("mean_entropy", "strict_encoding", "strict_validation"):
        if key in data:
            if not isinstance(data[key], bool):
                raise ConfigError(f"config key '{key}' must be true or false")
            values[key] = data[key]
    if "encode_mode" in data:
        if data["encode_mode"] not in ("edge", "node"):
            raise ConfigError("config key 'encode_mode' must be 'edge' or 'node'")
        values["encode_mode"] = data["encode_mode"]
    if "endpoint" in data:
        values["endpoint"] = str(data["endpoint"])
    if "models" in data:
        if not isinstance(data["models"], Mapping):
            raise ConfigError("config key 'models' must map agent roles to model names")
        values["models"] = {str(k): str(v) for k, v in data["models"].items()}
    cfg = Config(**values)
    _check_paths(cfg)
    return cfg


def _check_paths(cfg: Config) -> None:
    if not cfg.corpus.is_dir():
        raise ConfigError(f"corpus directory not found: {cfg.corpus}")
    if not cfg.vocab_dir.is_dir() or not any(cfg.vocab_dir.glob("*.tsv")):
        raise ConfigError(f"vocabulary directory missing or without .tsv files: {cfg.vocab_dir}")
    for key in ("tbox", "rules"):
        path = getattr(cfg, key)
        if path is not None and not path.is_file():
            raise ConfigError(f"{key} file not found: {path}")


def load_config(path: str | Path, overrides: Optional[Mapping[str, Any]] = None) -> Config:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(data or {}, path.parent, overrides)
