"""Model catalog, provider discovery and TTL caching."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields, replace
from decimal import Decimal
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional

import yaml

from ..core.costs import to_decimal
from ..core.errors import KernelError, UnknownModel
from ..core.events import EventBus

logger = logging.getLogger(__name__)

DEFAULT_TTL_SECONDS = 3600.0
DEFAULT_QUALITY = 0.5


@dataclass(frozen=True)
class ModelInfo:
    model_id: str
    provider: str
    quality_score: float = DEFAULT_QUALITY
    input_rate: float = 0.0
    output_rate: float = 0.0
    context_window: int = 8192
    origin: str = "static"

    def __post_init__(self):
        if not 0 <= self.quality_score <= 1:
            raise ValueError(f"{self.model_id}: quality_score must be in [0, 1]")
        if self.input_rate < 0 or self.output_rate < 0:
            raise ValueError(f"{self.model_id}: rates must be >= 0")

    @property
    def combined_rate(self) -> float:
        return self.input_rate + self.output_rate

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: Mapping, provider: str = "", origin: Optional[str] = None) -> "ModelInfo":
        data = {
            "model_id": d.get("model_id", d.get("id")),
            "provider": d.get("provider", provider),
            "quality_score": d.get("quality_score", d.get("quality", DEFAULT_QUALITY)),
            "input_rate": d.get("input_rate", 0.0),
            "output_rate": d.get("output_rate", 0.0),
            "context_window": d.get("context_window", d.get("contextWindow", 8192)),
            "origin": origin or d.get("origin", "static"),
        }
        if not data["model_id"]:
            raise ValueError(f"model entry without id: {dict(d)}")
        return cls(**data)


@dataclass(frozen=True)
class Catalog:
    """Immutable snapshot; refreshing produces a new instance."""

    models: Mapping[str, ModelInfo] = field(default_factory=dict)
    fetched_at: float = 0.0
    ttl_seconds: float = DEFAULT_TTL_SECONDS
    warnings: tuple[str, ...] = ()

    @classmethod
    def of(cls, models: Iterable[ModelInfo], fetched_at: float = 0.0, ttl_seconds: float = DEFAULT_TTL_SECONDS):
        table: dict[str, ModelInfo] = {}
        for m in models:
            if m.model_id in table:
                raise ValueError(f"duplicate model id {m.model_id!r}")
            table[m.model_id] = m
        return cls(table, fetched_at, ttl_seconds)

    def __len__(self) -> int:
        return len(self.models)

    def __iter__(self):
        return iter(self.models.values())

    def __contains__(self, model_id: str) -> bool:
        return model_id in self.models

    def get(self, model_id: str) -> ModelInfo:
        try:
            return self.models[model_id]
        except KeyError:
            raise UnknownModel(model_id) from None

    def rates(self, model_id: str) -> tuple[Decimal, Decimal]:
        m = self.get(model_id)
        return to_decimal(m.input_rate), to_decimal(m.output_rate)

    def is_fresh(self, now: float) -> bool:
        return now - self.fetched_at < self.ttl_seconds


ProviderClient = Callable[[], Iterable]


def discover_models(
    providers: Mapping[str, ProviderClient],
    static_entries: Iterable[ModelInfo] = (),
    now: float = 0.0,
    ttl_seconds: float = DEFAULT_TTL_SECONDS,
    bus: Optional[EventBus] = None,
    task_id: str = "system",
) -> Catalog:
    """Union of every provider's models; static entries win on id collision.

    A failing provider is skipped with a warning.
    """
    merged: dict[str, ModelInfo] = {}
    warnings = []
    for name in sorted(providers):
        try:
            listed = list(providers[name]())
        except Exception as exc:
            msg = f"provider {name} failed: {exc}"
            logger.warning(msg)
            warnings.append(msg)
            if bus is not None:
                bus.emit("discovery:provider_failed", task_id, {"provider": name, "error": str(exc)})
            continue
        for entry in listed:
            info = entry if isinstance(entry, ModelInfo) else ModelInfo.from_dict(entry, provider=name)
            info = replace(info, origin="discovered")
            merged.setdefault(info.model_id, info)
    for info in static_entries:
        merged[info.model_id] = replace(info, origin="static")
    catalog = Catalog(dict(sorted(merged.items())), now, ttl_seconds, tuple(warnings))
    if bus is not None:
        bus.emit("discovery:completed", task_id, {"models": len(catalog), "providers": sorted(providers)})
    return catalog


def get_catalog(
    cached: Optional[Catalog],
    now: float,
    refresh: Callable[[], Catalog],
    force: bool = False,
    bus: Optional[EventBus] = None,
    task_id: str = "system",
) -> Catalog:
    if cached is not None and not force and cached.is_fresh(now):
        return cached
    try:
        return refresh()
    except Exception as exc:
        if cached is None:
            raise KernelError(f"catalog refresh failed and no cache is available: {exc}") from exc
        logger.warning("catalog refresh failed, serving stale cache: %s", exc)
        if bus is not None:
            bus.emit("discovery:stale_cache", task_id, {"error": str(exc), "fetched_at": cached.fetched_at})
        return replace(cached, warnings=cached.warnings + (f"stale: {exc}",))


def load_structured(path: str | Path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return json.loads(text)
    return yaml.safe_load(text)


def load_fixture_dir(directory: str | Path) -> tuple[dict[str, ProviderClient], list[ModelInfo]]:
    """Read provider fixtures from a directory.

    Each file is either ``{provider: name, models: [...], fail: bool}`` or
    ``{static: [...]}`` for statically configured entries.
    """
    providers: dict[str, ProviderClient] = {}
    static: list[ModelInfo] = []
    for path in sorted(Path(directory).iterdir()):
        if path.suffix not in (".json", ".yaml", ".yml"):
            continue
        doc = load_structured(path) or {}
        if "static" in doc:
            static.extend(ModelInfo.from_dict(m, origin="static") for m in doc["static"])
            continue
        name = doc.get("provider", path.stem)

        def client(doc=doc, name=name):
            if doc.get("fail"):
                raise ConnectionError(doc.get("error", f"{name} unavailable"))
            return [ModelInfo.from_dict(m, provider=name) for m in doc.get("models", [])]

        providers[name] = client
    return providers, static
