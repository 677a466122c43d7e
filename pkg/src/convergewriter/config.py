"""Run configuration: a TOML file with ``${VAR}`` environment interpolation.

Example::

    topic = "Solar sail"
    seed = 7

    [chat]
    kind = "openai"
    base_url = "http://localhost:8000"
    model = "Qwen3-14B"
    api_key_env = "LLM_API_KEY"

    [embedding]
    kind = "openai"
    base_url = "${EMBED_URL:-http://localhost:8001}"
    model = "Qwen3-Embedding-0.6B"

    [source]
    kind = "wikipedia"
    user_agent = "my-lab-writer/1.0 (me@example.org)"
"""

from __future__ import annotations

import dataclasses
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import httpx

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .cache import DiskCache
from .errors import ConfigError
from .gateway import Gateway
from .mock import HashEmbeddingProvider, OfflineChat
from .providers import HTTPReranker, OpenAIChatProvider, OpenAIEmbeddingProvider
from .sources import LocalCorpusSource, ReplayTransport, WikipediaSource

_VAR = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")

MODES = ("full", "no_clustering")
MAPPINGS = ("bijective", "injective")


def interpolate(value: Any, env: Mapping[str, str] | None = None) -> Any:
    """Replace ``${VAR}`` / ``${VAR:-default}`` in every string of a nested structure."""
    env = os.environ if env is None else env
    if isinstance(value, str):
        def sub(m: re.Match) -> str:
            name, default = m.group(1), m.group(2)
            if name in env:
                return env[name]
            if default is not None:
                return default
            raise ConfigError(f"environment variable {name} is not set")
        return _VAR.sub(sub, value)
    if isinstance(value, dict):
        return {k: interpolate(v, env) for k, v in value.items()}
    if isinstance(value, list):
        return [interpolate(v, env) for v in value]
    return value


@dataclass
class RunConfig:
    topic: str = ""
    mode: str = "full"
    seed: int = 0
    out_dir: str = "run"
    # clustering
    k_min: int = 2
    k_max: int = 8
    sample_size: int | None = 512
    parts: int = 5
    # budgets, in tokens
    max_context_tokens: int = 24_000
    leaf_budget: int = 300
    cluster_budget: int = 800
    summary_input_tokens: int = 6000
    judge_tokens: int = 1500
    evidence_tokens: int = 800
    # retrieval / writing
    max_results: int = 5
    per_doc_keywords: int = 5
    max_expanded_keywords: int = 40
    top_m: int = 6
    mapping: str = "bijective"
    outline_retries: int = 2
    concurrency: int = 4
    # providers and sources, as raw tables
    chat: dict = field(default_factory=lambda: {"kind": "offline"})
    judge: dict | None = None
    embedding: dict = field(default_factory=lambda: {"kind": "hash", "dim": 64})
    rerank: dict = field(default_factory=lambda: {"kind": "embedding"})
    source: dict = field(default_factory=lambda: {"kind": "local"})
    rubric: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mapping not in MAPPINGS:
            raise ConfigError(f"mapping must be one of {MAPPINGS}, got {self.mapping!r}")
        if self.max_context_tokens <= 0:
            raise ConfigError("max_context_tokens must be positive")
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError(f"need 1 <= k_min <= k_max, got [{self.k_min}, {self.k_max}]")
        if self.k_min < 2 and self.mode == "full":
            raise ConfigError("k_min must be at least 2")
        for name in ("top_m", "parts", "leaf_budget", "cluster_budget", "summary_input_tokens", "max_results"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        flat: dict[str, Any] = {}
        for key, value in data.items():
            if key in ("clustering", "budgets", "writer", "outline", "gateway", "retrieval") and isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        if "out" in flat:
            flat["out_dir"] = flat.pop("out")
        if isinstance(flat.get("mode"), str):
            flat["mode"] = flat["mode"].replace("-", "_")
        unknown = set(flat) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**flat).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | os.PathLike | None = None, **overrides) -> RunConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    data = interpolate(data)
    if path is not None:
        _anchor_paths(data, Path(path).resolve().parent)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)


def _anchor_paths(data: dict, base: Path) -> None:
    # Relative corpus/fixture paths are relative to the config file; making
    # them absolute keeps the manifest snapshot usable from any cwd on resume.
    source = data.get("source")
    if not isinstance(source, dict):
        return
    for key in ("path", "fixtures"):
        value = source.get(key)
        if isinstance(value, str) and value and not Path(value).is_absolute():
            source[key] = str(base / value)


# -- factories ----------------------------------------------------------------


def _http_kwargs(table: Mapping[str, Any]) -> dict:
    if "base_url" not in table or "model" not in table:
        raise ConfigError(f"provider table needs base_url and model: {dict(table)}")
    return {
        "base_url": table["base_url"],
        "model": table["model"],
        "api_key_env": table.get("api_key_env"),
        "timeout": float(table.get("timeout", 120.0)),
    }


def build_chat(table: Mapping[str, Any]):
    kind = table.get("kind", "offline")
    if kind == "offline":
        return OfflineChat(
            keywords=table.get("keywords"),
            expansions=table.get("expansions"),
            relevant_terms=table.get("relevant_terms"),
            rubric_score=float(table.get("rubric_score", 4.0)),
        )
    if kind == "openai":
        return OpenAIChatProvider(**_http_kwargs(table))
    raise ConfigError(f"unknown chat provider kind {kind!r}")


def build_embedder(table: Mapping[str, Any]):
    kind = table.get("kind", "hash")
    if kind == "hash":
        return HashEmbeddingProvider(int(table.get("dim", 64)))
    if kind == "openai":
        return OpenAIEmbeddingProvider(**_http_kwargs(table))
    raise ConfigError(f"unknown embedding provider kind {kind!r}")


def build_reranker(table: Mapping[str, Any]):
    kind = table.get("kind", "embedding")
    if kind == "embedding":
        return None
    if kind == "http":
        return HTTPReranker(**_http_kwargs(table))
    raise ConfigError(f"unknown rerank kind {kind!r}")


def build_gateway(config: RunConfig, cache_dir: str | os.PathLike | None = None) -> Gateway:
    return Gateway(
        build_chat(config.chat),
        build_embedder(config.embedding),
        judge=build_chat(config.judge) if config.judge else None,
        reranker=build_reranker(config.rerank),
        cache=DiskCache(cache_dir) if cache_dir is not None else None,
        max_context_tokens=config.max_context_tokens,
        max_in_flight=config.concurrency,
    )


def build_source(config: RunConfig, base_dir: str | os.PathLike = "."):
    table = config.source
    kind = table.get("kind", "local")
    if kind == "local":
        if "path" not in table:
            raise ConfigError("local source needs a path to a JSON Lines corpus")
        path = Path(table["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        try:
            return LocalCorpusSource.from_jsonl(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load local corpus {path}: {exc}") from exc
    if kind == "wikipedia":
        transport: httpx.BaseTransport | None = None
        if table.get("fixtures"):
            transport = ReplayTransport(table["fixtures"])
        kwargs = {k: table[k] for k in ("api_url", "user_agent") if k in table}
        return WikipediaSource(transport=transport, **kwargs)
    raise ConfigError(f"unknown source kind {kind!r}")
