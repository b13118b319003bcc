"""Versioned prompt templates shipped as text assets under ``prompts/``."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template

from .backend import render_tags


@lru_cache(maxsize=None)
def _load(name: str) -> Template:
    text = (resources.files("persistent_agent") / "prompts" / f"{name}.txt").read_text("utf-8")
    return Template(text)


def render(name: str, tags: dict, **fields) -> str:
    return _load(name).substitute(tags=render_tags(tags), **fields)


def creed_section(creed, ids) -> str:
    if not ids:
        return "(none)"
    return "\n".join(f"[creed:{i}] {creed[i - 1]}" for i in sorted(ids))


def bullets(items, empty: str = "(none)") -> str:
    items = [str(i) for i in items]
    return "\n".join(f"- {i}" for i in items) if items else empty
