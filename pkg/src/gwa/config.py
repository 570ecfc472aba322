"""YAML application configuration.

One file drives a whole deployment: backend selection, drive and
compression parameters, engine knobs, memory paths, and service
binding. Unknown keys are rejected so typos fail loudly at startup
instead of silently running with defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .drive import ClusterSet, DriveConfig
from .errors import StartupError
from .memory import CompressionConfig
from .nodes import NodeTemperatures

DEFAULT_BIND_ADDR = "127.0.0.1:8600"


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"  # "scripted" or "openai"
    base_url: str = "http://localhost:11434/v1"
    role_models: dict[str, str] = field(default_factory=dict)
    embed_model: str = "text-embedding-3-small"
    embed_dimension: int = 256
    script_path: str | None = None
    default_response: str = "1. I should continue reflecting on the current situation."

    def __post_init__(self) -> None:
        if self.kind not in ("scripted", "openai"):
            raise StartupError(f"backend.kind must be 'scripted' or 'openai', got {self.kind!r}")
        if self.embed_dimension < 2:
            raise StartupError(f"backend.embed_dimension must be >= 2, got {self.embed_dimension}")


@dataclass(frozen=True)
class EngineConfig:
    candidate_count: int = 3
    retrieval_k: int = 5
    max_retries: int = 2
    max_think_more_streak: int = 6
    idle_policy: str = "block_on_trigger"  # or "free_run"
    transport_retries: int = 3
    backoff_base_s: float = 0.5
    max_output_tokens: int = 1024
    run_log_path: str | None = None
    template_dir: str | None = None
    temperatures: NodeTemperatures = field(default_factory=NodeTemperatures)

    def __post_init__(self) -> None:
        if self.candidate_count < 1:
            raise StartupError(f"engine.candidate_count must be >= 1, got {self.candidate_count}")
        if self.retrieval_k < 1:
            raise StartupError(f"engine.retrieval_k must be >= 1, got {self.retrieval_k}")
        if self.max_retries < 0:
            raise StartupError(f"engine.max_retries must be >= 0, got {self.max_retries}")
        if self.max_think_more_streak < 1:
            raise StartupError(
                f"engine.max_think_more_streak must be >= 1, got {self.max_think_more_streak}"
            )
        if self.idle_policy not in ("block_on_trigger", "free_run"):
            raise StartupError(
                f"engine.idle_policy must be 'block_on_trigger' or 'free_run', got {self.idle_policy!r}"
            )
        if self.transport_retries < 0:
            raise StartupError(
                f"engine.transport_retries must be >= 0, got {self.transport_retries}"
            )
        if self.backoff_base_s < 0:
            raise StartupError(f"engine.backoff_base_s must be >= 0, got {self.backoff_base_s}")


@dataclass(frozen=True)
class MemoryConfig:
    ltm_path: str | None = None  # None keeps the archive in memory only


@dataclass(frozen=True)
class ServiceConfig:
    bind_addr: str = DEFAULT_BIND_ADDR

    def host_port(self) -> tuple[str, int]:
        host, sep, port = self.bind_addr.rpartition(":")
        if not sep or not port.isdigit():
            raise StartupError(f"service.bind_addr must be host:port, got {self.bind_addr!r}")
        return host, int(port)


@dataclass(frozen=True)
class AppConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    drive: DriveConfig = field(default_factory=DriveConfig)
    clusters: ClusterSet = field(default_factory=ClusterSet)
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    core_self_text: str | None = None
    genesis_text: str | None = None


def _check_keys(section: str, data: dict[str, Any], allowed: set[str]) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise StartupError(f"unknown {section} keys: {sorted(unknown)}")


def _dataclass_from(section: str, cls: type, data: dict[str, Any], **extra: Any) -> Any:
    allowed = {f.name for f in fields(cls)} - set(extra)
    _check_keys(section, data, allowed)
    try:
        return cls(**data, **extra)
    except (TypeError, ValueError) as exc:
        raise StartupError(f"invalid {section} config: {exc}") from exc


def load_config(path: Path | str) -> AppConfig:
    """Parse and validate a YAML config file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise StartupError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise StartupError(f"config file {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise StartupError(f"config root must be a mapping, got {type(raw).__name__}")
    return config_from_dict(raw)


def config_from_dict(raw: dict[str, Any]) -> AppConfig:
    _check_keys(
        "top-level",
        raw,
        {"backend", "drive", "compression", "engine", "memory", "service", "core_self", "genesis"},
    )
    for section in ("backend", "drive", "compression", "engine", "memory", "service"):
        value = raw.get(section)
        if value is not None and not isinstance(value, dict):
            raise StartupError(f"section {section!r} must be a mapping")

    backend = _dataclass_from("backend", BackendConfig, raw.get("backend") or {})

    drive_raw = dict(raw.get("drive") or {})
    cluster_raw = {
        key: drive_raw.pop(key)
        for key in ("k_max", "spawn_threshold", "ema_rate")
        if key in drive_raw
    }
    drive = _dataclass_from("drive", DriveConfig, drive_raw)
    clusters = _dataclass_from("drive", ClusterSet, cluster_raw)

    compression = _dataclass_from("compression", CompressionConfig, raw.get("compression") or {})

    engine_raw = dict(raw.get("engine") or {})
    temps_raw = engine_raw.pop("temperatures", None)
    engine = _dataclass_from("engine", EngineConfig, engine_raw)
    if temps_raw is not None:
        if not isinstance(temps_raw, dict):
            raise StartupError("engine.temperatures must be a mapping")
        temps = _dataclass_from("engine.temperatures", NodeTemperatures, temps_raw)
        engine = replace(engine, temperatures=temps)

    memory = _dataclass_from("memory", MemoryConfig, raw.get("memory") or {})
    service = _dataclass_from("service", ServiceConfig, raw.get("service") or {})

    core_self_text = raw.get("core_self")
    genesis_text = raw.get("genesis")
    for name, value in (("core_self", core_self_text), ("genesis", genesis_text)):
        if value is not None and (not isinstance(value, str) or not value.strip()):
            raise StartupError(f"{name} must be a nonempty string when present")

    return AppConfig(
        backend=backend,
        drive=drive,
        clusters=clusters,
        compression=compression,
        engine=engine,
        memory=memory,
        service=service,
        core_self_text=core_self_text,
        genesis_text=genesis_text,
    )
