"""Minimal ``key = value`` config files shared by feature, scenario and run configs."""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def read_pairs(path: str | Path) -> list[tuple[str, str, int]]:
    """Return ``(key, value, line_number)`` triples; ``#`` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        pairs.append((key, value, lineno))
    return pairs


def parse_list(value: str, cast=str) -> list:
    items = [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]
    try:
        return [cast(v) for v in items]
    except ValueError as exc:
        raise ConfigError(f"bad list value {value!r}: {exc}") from exc


def parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    raise ConfigError(f"bad boolean {value!r}")
