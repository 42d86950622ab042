"""Bundled scenario files."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

__all__ = ["ALIASES", "preset_names", "preset_path", "preset_library"]

# older names kept working after renames
ALIASES = {"remark-2-4-tiny-dispersion": "remark-tiny-dispersion"}


def _root():
    return resources.files("kdvlab") / "presets"


def preset_names() -> list[str]:
    return sorted(p.name[:-4] for p in _root().iterdir() if p.name.endswith(".ini"))


def preset_path(name: str) -> Path:
    name = ALIASES.get(name, name)
    path = _root() / f"{name}.ini"
    if not path.is_file():
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return Path(str(path))


def preset_library() -> dict[str, Path]:
    return {name: preset_path(name) for name in preset_names()}
