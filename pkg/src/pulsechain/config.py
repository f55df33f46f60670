"""``pulse.toml`` settings."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .prompting import DEFAULT_REPAIR_LIMIT


@dataclass
class Config:
    endpoint: str | None = None
    # per-agent model names: plan, mmap, lchart, embed (and an optional default)
    models: dict[str, str] = field(default_factory=dict)
    parallelism: int = 4
    repair_limit: int = DEFAULT_REPAIR_LIMIT
    raster_size: tuple[int, int] = (1024, 768)
    mmap_prompt: str | None = None
    lchart_prompt: str | None = None
    retry_seed: int = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        with open(path, "rb") as fh:
            data = tomli.load(fh)
        base = Path(path).parent
        raster = data.get("raster", {})
        prompts = data.get("prompts", {})

        def rel(p):
            return str(base / p) if p else None

        return cls(
            endpoint=data.get("endpoint"),
            models=dict(data.get("models", {})),
            parallelism=int(data.get("parallelism", 4)),
            repair_limit=int(data.get("repair_limit", DEFAULT_REPAIR_LIMIT)),
            raster_size=(int(raster.get("width", 1024)), int(raster.get("height", 768))),
            mmap_prompt=rel(prompts.get("mmap")),
            lchart_prompt=rel(prompts.get("lchart")),
            retry_seed=int(data.get("retry_seed", 0)),
        )
