"""Engine configuration.

Everything that varies per deployment lives here: storage root, provider
choice, the model used inside generated experiments, sandbox entry command,
retry caps. Credentials are never stored in config files; a provider config
names the environment variable holding the key.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

DEFAULT_TARGET_MODEL = "mini-experiment-model"
DEFAULT_PIPELINE_MODEL = "pipeline-model"


@dataclass(frozen=True)
class LanguageConfig:
    """How generated experiment programs are written and launched."""

    entry_filename: str = "main.py"
    command: tuple[str, ...] = ("python3", "main.py")


@dataclass(frozen=True)
class EngineConfig:
    root: Path = Path("workspace")
    pipeline_model: str = DEFAULT_PIPELINE_MODEL
    target_model: str = DEFAULT_TARGET_MODEL
    retry_cap: int = 3
    dedup_threshold: float = 0.92
    stream_cap_bytes: int = 16 * 1024 * 1024
    log_excerpt_bytes: int = 8 * 1024
    max_output_tokens: int = 8192
    language: LanguageConfig = field(default_factory=LanguageConfig)
    scenario_path: Path | None = None
    provider_config_path: Path | None = None
    api_token: str | None = None

    def with_root(self, root: Path) -> "EngineConfig":
        return replace(self, root=Path(root))


def load_config(path: str | Path | None = None, root: str | Path | None = None) -> EngineConfig:
    """Build an EngineConfig from an optional YAML file plus overrides.

    Recognized keys mirror the EngineConfig fields; unknown keys are rejected
    so typos surface early. ``LABLOOP_API_TOKEN`` in the environment takes
    precedence over any configured API token.
    """
    data: dict = {}
    if path is not None:
        raw = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(raw) or {}
        if not isinstance(data, dict):
            raise ValueError(f"config file {path} must contain a mapping")

    known = {
        "root",
        "pipeline_model",
        "target_model",
        "retry_cap",
        "dedup_threshold",
        "stream_cap_bytes",
        "log_excerpt_bytes",
        "max_output_tokens",
        "language",
        "scenario_path",
        "provider_config_path",
        "api_token",
    }
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    kwargs: dict = {}
    for key in known:
        if key not in data:
            continue
        value = data[key]
        if key in {"root", "scenario_path", "provider_config_path"} and value is not None:
            value = Path(value)
        if key == "language":
            value = LanguageConfig(
                entry_filename=value.get("entry_filename", "main.py"),
                command=tuple(value.get("command", ("python3", "main.py"))),
            )
        kwargs[key] = value

    config = EngineConfig(**kwargs)
    if root is not None:
        config = config.with_root(Path(root))
    env_token = os.environ.get("LABLOOP_API_TOKEN")
    if env_token:
        config = replace(config, api_token=env_token)
    return config
