"""Deployment configuration: which reformulation tasks run, where the backend
and classifier live, and how the gateway behaves under failure.

Config is a single JSON file; the backend bearer token comes from the
``REFORMGUARD_API_KEY`` environment variable, never from the file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .reformulate import DEFAULT_BATCH_CAP, GenerationParams, Task

DEFAULT_TIEBREAK_ORDER = (Task.SUMMARIZE, Task.PARAPHRASE, Task.BACK_TRANSLATE)


class ConfigError(Exception):
    """Invalid or inconsistent deployment configuration."""


@dataclass(frozen=True)
class BackendSettings:
    base_url: str
    model_name: str = "default"
    temperature: float = 0.0
    max_output_tokens: int = 512
    timeout: float = 30.0

    @property
    def params(self) -> GenerationParams:
        return GenerationParams(
            model_name=self.model_name,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            timeout=self.timeout,
        )


@dataclass(frozen=True)
class ClassifierSettings:
    base_url: str


@dataclass
class DefenseConfig:
    """Validated settings shared by the gateway and the batch CLI."""

    backend: BackendSettings
    classifier: ClassifierSettings
    enabled_tasks: tuple[Task, ...] = tuple(DEFAULT_TIEBREAK_ORDER)
    tiebreak_order: tuple[Task, ...] | None = None
    batch_cap: int = DEFAULT_BATCH_CAP
    fail_open: bool = True
    listen_address: str = "127.0.0.1:8470"

    def __post_init__(self):
        try:
            self.enabled_tasks = tuple(Task(t) for t in self.enabled_tasks)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if len(set(self.enabled_tasks)) != len(self.enabled_tasks):
            raise ConfigError("enabled_tasks contains duplicates")
        if self.tiebreak_order is None:
            self.tiebreak_order = tuple(
                t for t in DEFAULT_TIEBREAK_ORDER if t in self.enabled_tasks
            )
        else:
            try:
                self.tiebreak_order = tuple(Task(t) for t in self.tiebreak_order)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if sorted(self.tiebreak_order) != sorted(self.enabled_tasks):
            raise ConfigError("tiebreak_order must be a permutation of enabled_tasks")
        if self.batch_cap < 1:
            raise ConfigError("batch_cap must be positive")
        host, sep, port = self.listen_address.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise ConfigError(f"listen_address must be host:port, got {self.listen_address!r}")

    @property
    def host(self) -> str:
        return self.listen_address.rpartition(":")[0]

    @property
    def port(self) -> int:
        return int(self.listen_address.rpartition(":")[2])

    @classmethod
    def from_dict(cls, obj: dict) -> "DefenseConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        for key in ("backend", "classifier"):
            if key not in obj or "base_url" not in obj[key]:
                raise ConfigError(f"config requires {key}.base_url")
        backend_obj = dict(obj["backend"])
        params = backend_obj.pop("params", {})
        try:
            backend = BackendSettings(
                base_url=backend_obj["base_url"],
                model_name=backend_obj.get("model_name", "default"),
                temperature=params.get("temperature", 0.0),
                max_output_tokens=params.get("max_output_tokens", 512),
                timeout=params.get("timeout", 30.0),
            )
        except ValueError as exc:
            raise ConfigError(f"invalid backend params: {exc}") from exc
        kwargs = {}
        for key in ("enabled_tasks", "tiebreak_order", "batch_cap", "fail_open",
                    "listen_address"):
            if key in obj:
                kwargs[key] = obj[key]
        return cls(backend=backend,
                   classifier=ClassifierSettings(base_url=obj["classifier"]["base_url"]),
                   **kwargs)

    def to_dict(self) -> dict:
        return {
            "enabled_tasks": [t.value for t in self.enabled_tasks],
            "tiebreak_order": [t.value for t in self.tiebreak_order or ()],
            "backend": {
                "base_url": self.backend.base_url,
                "model_name": self.backend.model_name,
                "params": {
                    "temperature": self.backend.temperature,
                    "max_output_tokens": self.backend.max_output_tokens,
                    "timeout": self.backend.timeout,
                },
            },
            "classifier": {"base_url": self.classifier.base_url},
            "batch_cap": self.batch_cap,
            "fail_open": self.fail_open,
            "listen_address": self.listen_address,
        }


def load_config(path: str | Path) -> DefenseConfig:
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
    return DefenseConfig.from_dict(obj)
