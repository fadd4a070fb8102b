"""Shared fixtures: deterministic fixture repositories and pipeline helpers."""

from __future__ import annotations

from pathlib import Path

import pytest
import yaml

from adrcheck import cli

DB_PY = '''"""Database session handling."""
from sqlalchemy import create_engine

engine = create_engine("postgresql://app@db/main")


def get_session():
    return engine.connect()
'''

CACHE_PY = '''import redis

cache = redis.Redis(host="cache", port=6379)


def get(key):
    return cache.get(key)
'''

API_PY = '''from fastapi import FastAPI

app = FastAPI()


@app.get("/health")
def health():
    return {"ok": True}
'''

ADR_DATASTORE = """# 1. Datastore choices

## Status

Accepted

## Context

We need persistent storage and caching.

## Decision

- We will use PostgreSQL as the primary datastore via sqlalchemy create_engine.
- We will use Redis for caching.
- All architecture review meetings happen quarterly with the team.

## Consequences

Operations must run both services.
"""

ADR_API = """# 2. API framework

## Status

Proposed

## Context

We expose an HTTP API.

## Decision

We will build the HTTP API with FastAPI.

## Consequences

None.
"""


def make_fixture_repo(root: Path) -> Path:
    """3 source files + 2 ADRs that split into 4 accepted decisions."""
    (root / "src").mkdir(parents=True)
    (root / "docs" / "adr").mkdir(parents=True)
    (root / "src" / "db.py").write_text(DB_PY, encoding="utf-8")
    (root / "src" / "cache.py").write_text(CACHE_PY, encoding="utf-8")
    (root / "src" / "api.py").write_text(API_PY, encoding="utf-8")
    (root / "docs" / "adr" / "0001-datastore.md").write_text(ADR_DATASTORE, encoding="utf-8")
    (root / "docs" / "adr" / "0002-api.md").write_text(ADR_API, encoding="utf-8")
    return root


def make_gating_repo(root: Path) -> Path:
    """4 ADRs with 3 bullet decisions each; one ADR rejected: 12 total, 9 accepted."""
    (root / "src").mkdir(parents=True)
    (root / "docs" / "adr").mkdir(parents=True)
    (root / "src" / "app.py").write_text(API_PY, encoding="utf-8")
    statuses = ["Accepted", "Accepted", "Rejected", "Proposed"]
    for i, status in enumerate(statuses, start=1):
        body = (
            f"# ADR {i}\n\n## Status\n\n{status}\n\n## Context\n\nSome context.\n\n"
            "## Decision\n\n- First decision item.\n- Second decision item.\n"
            "- Third decision item.\n\n## Consequences\n\nNone.\n"
        )
        (root / "docs" / "adr" / f"{i:04d}-adr.md").write_text(body, encoding="utf-8")
    return root


def write_config(path: Path, roots: list[Path], out_dir: Path, **extra) -> Path:
    data = {
        "project_roots": [str(r) for r in roots],
        "out_dir": str(out_dir),
        "extensions": ["py"],
        "mock_providers": True,
        **extra,
    }
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


PIPELINE_STAGES = ("scan", "adrs", "index", "judge", "validate")


def run_stages(config: Path, stages=PIPELINE_STAGES, extra_flags: list[str] | None = None) -> list[int]:
    flags = extra_flags or []
    return [cli.main(["--config", str(config), *flags, stage]) for stage in stages]


@pytest.fixture
def fixture_repo(tmp_path: Path) -> Path:
    return make_fixture_repo(tmp_path / "proj")


@pytest.fixture
def pipeline_run(tmp_path: Path, fixture_repo: Path):
    """Full mock-provider pipeline over the fixture repo; returns (config, out_dir)."""
    out_dir = tmp_path / "out"
    config = write_config(tmp_path / "config.yaml", [fixture_repo], out_dir)
    codes = run_stages(config)
    assert codes == [0, 0, 0, 0, 0]
    return config, out_dir
