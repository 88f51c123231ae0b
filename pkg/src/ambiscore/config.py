"""Run configuration: one JSON file plus command-line overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .gateway import DEFAULT_BASE_URL, DEFAULT_EMBEDDING_MODEL


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: dict = field(default_factory=lambda: {"train": None, "dev": None, "test": None})
    field_map: dict | str | None = None
    base_url: str = DEFAULT_BASE_URL
    chat_model: str = "gpt-4o"
    embedding_model: str = DEFAULT_EMBEDDING_MODEL
    max_tokens: int = 16
    max_attempts: int = 4
    max_in_flight: int = 4
    timeout: float = 60.0
    mode: str = "few-shot"
    k: int = 1
    split: str = "dev"
    limit: int | None = None
    thresholds: str | None = None
    index_dir: str | None = None
    run: str | None = None
    cache_dir: str = ".ambiscore-cache"
    seed: int = 0
    out: str = "ambiscore-out"
    std_convention: str = "sample"
    use_mean_labels: bool = False
    embed_include_ending: bool = True
    embed_include_meaning: bool = True
    calibration_targets: list = field(default_factory=lambda: [1088, 631, 561])
    calibration_grid: dict | None = None
    ensemble: dict = field(default_factory=lambda: {
        "kind": "linear", "runs": {}, "grid": None, "params": {}, "folds": 5, "weight_metric": "spearman",
        "model": None,
    })
    sft: dict = field(default_factory=lambda: {"strategy": "single_annotator", "sense_hints": None,
                                               "hint_model": None})

    def validate(self) -> "RunConfig":
        if self.mode not in ("zero-shot", "few-shot"):
            raise ConfigError(f"mode must be zero-shot or few-shot, got {self.mode!r}")
        if self.mode == "few-shot" and int(self.k) < 1:
            raise ConfigError("few-shot mode needs k >= 1")
        if self.split not in ("train", "dev", "test"):
            raise ConfigError(f"unknown split {self.split!r}")
        if self.std_convention not in ("sample", "population"):
            raise ConfigError(f"unknown std convention {self.std_convention!r}")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")
        if len(self.calibration_targets) != 3:
            raise ConfigError("calibration_targets needs three counts (ambiguous, high, low)")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = cls()
        merged = {}
        for k, v in d.items():
            default = getattr(base, k)
            if isinstance(default, dict) and isinstance(v, dict):
                merged[k] = {**default, **v}
            else:
                merged[k] = v
        return cls(**merged)


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(doc: dict, assignment: str) -> None:
    """``a.b=value`` with value parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    cur = doc
    for p in parts[:-1]:
        nxt = cur.get(p)
        if nxt is None:
            nxt = cur[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot set {key}: {p} is not a mapping")
        cur = nxt
    cur[parts[-1]] = _parse_value(raw)


def load_config(path: str | Path | None, overrides: list[str] = (), **flags) -> RunConfig:
    """Paths inside the config file are relative to that file; flag values relative to the cwd."""
    doc: dict = {}
    if path:
        p = Path(path)
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config {p} must hold a JSON object")
        _resolve_paths(doc, p.parent)
    doc = copy.deepcopy(doc)
    for ov in overrides:
        apply_override(doc, ov)
    for k, v in flags.items():
        if v is not None:
            doc[k] = v
    return RunConfig.from_dict(doc).validate()


PATH_KEYS = ("thresholds", "index_dir", "run", "cache_dir", "out", "field_map")


def _resolve_paths(doc: dict, base: Path) -> None:
    def fix(v):
        if isinstance(v, str) and v and not Path(v).is_absolute():
            return str((base / v).resolve())
        return v

    if isinstance(doc.get("data"), dict):
        doc["data"] = {k: fix(v) for k, v in doc["data"].items()}
    for name in PATH_KEYS:
        if name in doc:
            doc[name] = fix(doc[name])
    ens = doc.get("ensemble")
    if isinstance(ens, dict):
        if isinstance(ens.get("runs"), dict):
            ens["runs"] = {k: fix(v) for k, v in ens["runs"].items()}
        if ens.get("model"):
            ens["model"] = fix(ens["model"])
    sft = doc.get("sft")
    if isinstance(sft, dict) and sft.get("sense_hints"):
        sft["sense_hints"] = fix(sft["sense_hints"])
