"""Run configuration and its ``key = value`` file format."""
from __future__ import annotations

import ast
import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Optional


@dataclass
class RunConfig:
    inputs: list[str] = field(default_factory=list)
    ontology: Optional[str] = None
    cfs_mode: str = "type"
    # type names, or '+'-joined property names in property mode; empty = every type
    cfs_keys: list[str] = field(default_factory=list)
    min_cfs_size: int = 2
    k: int = 10
    h: str = "variance"
    n_max: int = 4
    min_support: float = 0.5
    distinct_cap: int = 100
    distinct_ratio: float = 0.2
    max_lattices: int = 1000
    partition_extent: int = 16
    memory_budget: Optional[int] = None
    early_stop: bool = True
    sample_size: int = 60
    batches: int = 2
    alpha: float = 0.05
    max_idle_batches: int = 1
    derivations: bool = True
    keyword_min_avg_length: float = 20.0
    path_length: int = 1
    seed: int = 0
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    out: str = "out"
    max_error_fraction: float = 0.01

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.h not in ("variance", "skewness", "kurtosis"):
            raise ValueError(f"unknown interestingness {self.h!r}")
        if not 0.0 < self.min_support <= 1.0:
            raise ValueError("min_support must lie in (0, 1]")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.partition_extent < 1:
            raise ValueError("partition_extent must be >= 1")
        if self.sample_size < 2 or self.batches < 1:
            raise ValueError("sample_size >= 2 and batches >= 1 required")
        if self.cfs_mode not in ("type", "property"):
            raise ValueError("cfs_mode is 'type' or 'property'")
        if self.path_length not in (1, 2):
            raise ValueError("path_length is 1 or 2")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def batch_size(self) -> int:
        return -(-self.sample_size // self.batches)

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_LIST_FIELDS = {"inputs", "cfs_keys"}


def _coerce(name: str, raw: str, ftype: Any) -> Any:
    raw = raw.strip()
    if name in _LIST_FIELDS:
        if raw.startswith("["):
            return list(ast.literal_eval(raw))
        return [x.strip() for x in raw.split(",") if x.strip()]
    if raw.lower() in ("none", "null", ""):
        return None
    if raw.lower() in ("true", "on", "yes"):
        return True
    if raw.lower() in ("false", "off", "no"):
        return False
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw.strip("\"'")


def parse_config_text(text: str) -> dict[str, Any]:
    """``key = value`` lines; an optional ``[run]`` header; ``#`` comments."""
    fields = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValueError(f"bad configuration: {exc}") from exc
    out: dict[str, Any] = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            key = key.replace("-", "_")
            if key not in fields:
                raise ValueError(f"unknown key {key!r}")
            out[key] = _coerce(key, raw, fields[key])
    return out


def load_config(path: Optional[str] = None, **overrides: Any) -> RunConfig:
    """File values first, then non-None overrides (command-line flags)."""
    values: dict[str, Any] = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)
