"""Run configuration: file schema, defaults, and environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

import yaml

from .corpus import DEFAULT_MAX_CHUNK_LINES, DEFAULT_OVERLAP_LINES
from .judge import DEFAULT_RETRY_LIMIT, GenerationParams
from .retrieval import DEFAULT_EMBEDDING_DIMS, DEFAULT_TOP_K


class ConfigError(ValueError):
    pass


DEFAULT_EXTENSIONS = (
    "py", "java", "js", "jsx", "ts", "tsx", "go", "rb", "rs", "c", "cc", "cpp",
    "h", "hpp", "cs", "php", "scala", "kt", "swift", "sh", "sql",
)

# Markdown files whose repo-relative path contains one of these substrings
# are treated as ADR candidates.
DEFAULT_ADR_PATH_MARKERS = ("adr", "arch", "design", "decision")


@dataclass(frozen=True)
class ModelSlot:
    slot_id: str
    endpoint: str
    model: str


@dataclass(frozen=True)
class ChunkingConfig:
    max_lines: int = DEFAULT_MAX_CHUNK_LINES
    overlap: int = DEFAULT_OVERLAP_LINES


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "local"  # "local" (hashing) or "http"
    dims: int = DEFAULT_EMBEDDING_DIMS
    endpoint: str = ""
    model: str = ""


@dataclass(frozen=True)
class RunConfig:
    project_roots: tuple[str, ...]
    out_dir: str
    extensions: tuple[str, ...] = DEFAULT_EXTENSIONS
    adr_path_markers: tuple[str, ...] = DEFAULT_ADR_PATH_MARKERS
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    judge_slot: ModelSlot = ModelSlot("judge", "mock", "mock")
    validator_slots: tuple[ModelSlot, ...] = (
        ModelSlot("V1", "mock", "mock"),
        ModelSlot("V2", "mock", "mock"),
        ModelSlot("V3", "mock", "mock"),
    )
    generation: GenerationParams = field(default_factory=GenerationParams)
    k: int = DEFAULT_TOP_K
    retry_limit: int = DEFAULT_RETRY_LIMIT
    seed: int = 42
    workers: int = 4
    mock_providers: bool = False
    blind_validation: bool = False
    use_provider_splitter: bool = False

    def __post_init__(self) -> None:
        if not self.project_roots:
            raise ConfigError("at least one project root is required")
        if len(self.validator_slots) != 3:
            raise ConfigError("exactly three validator slots are required")
        ids = {s.slot_id for s in self.validator_slots}
        if len(ids) != 3:
            raise ConfigError("validator slot ids must be distinct")
        if self.k < 1 or self.retry_limit < 1 or self.workers < 1:
            raise ConfigError("k, retry_limit, and workers must be positive")


def _slot(data: dict, default_id: str) -> ModelSlot:
    return ModelSlot(
        slot_id=str(data.get("id", default_id)),
        endpoint=os.path.expandvars(str(data.get("endpoint", "mock"))),
        model=str(data.get("model", "mock")),
    )


def load_config(path: str | Path, **overrides) -> RunConfig:
    """Load a YAML run configuration.

    Endpoint strings may reference environment variables (``$VAR``) so
    credentials stay out of the file. Keyword overrides (from CLI flags) win
    over file values.
    """
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    try:
        kwargs: dict = {
            "project_roots": tuple(str(p) for p in raw.get("project_roots", ())),
            "out_dir": str(raw.get("out_dir", "out")),
        }
        if "extensions" in raw:
            kwargs["extensions"] = tuple(str(e) for e in raw["extensions"])
        if "adr_path_markers" in raw:
            kwargs["adr_path_markers"] = tuple(str(m).lower() for m in raw["adr_path_markers"])
        if "chunking" in raw:
            kwargs["chunking"] = ChunkingConfig(
                max_lines=int(raw["chunking"].get("max_lines", DEFAULT_MAX_CHUNK_LINES)),
                overlap=int(raw["chunking"].get("overlap", DEFAULT_OVERLAP_LINES)),
            )
        if "embedder" in raw:
            e = raw["embedder"]
            kwargs["embedder"] = EmbedderConfig(
                kind=str(e.get("kind", "local")),
                dims=int(e.get("dims", DEFAULT_EMBEDDING_DIMS)),
                endpoint=os.path.expandvars(str(e.get("endpoint", ""))),
                model=str(e.get("model", "")),
            )
        if "judge" in raw:
            kwargs["judge_slot"] = _slot(raw["judge"], "judge")
        if "validators" in raw:
            slots = raw["validators"]
            kwargs["validator_slots"] = tuple(
                _slot(s, f"V{i + 1}") for i, s in enumerate(slots)
            )
        if "generation" in raw:
            kwargs["generation"] = GenerationParams(**raw["generation"])
        for key in ("k", "retry_limit", "seed", "workers"):
            if key in raw:
                kwargs[key] = int(raw[key])
        for key in ("mock_providers", "blind_validation", "use_provider_splitter"):
            if key in raw:
                kwargs[key] = bool(raw[key])
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def config_snapshot(cfg: RunConfig) -> dict:
    """JSON-safe snapshot of every knob, recorded in the run manifest."""
    return asdict(cfg)
