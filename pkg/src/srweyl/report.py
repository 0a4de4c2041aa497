"""Deterministic text/JSON reports."""

from __future__ import annotations

import json
from typing import Any

import yaml


def render_text(doc: dict) -> str:
    """Indented plain-text rendering; dict order is preserved, so output is stable."""
    lines: list[str] = []

    def emit(key, value, indent):
        pad = "  " * indent
        if isinstance(value, dict) and not value:
            lines.append(f"{pad}{key}: {{}}")
        elif isinstance(value, dict):
            lines.append(f"{pad}{key}:")
            for k, v in value.items():
                emit(k, v, indent + 1)
        elif isinstance(value, list) and any(isinstance(v, (dict, list)) for v in value):
            lines.append(f"{pad}{key}:")
            for i, v in enumerate(value):
                emit(f"[{i + 1}]", v, indent + 1)
        elif isinstance(value, list):
            lines.append(f"{pad}{key}: [{', '.join(_scalar(v) for v in value)}]")
        else:
            lines.append(f"{pad}{key}: {_scalar(value)}")

    for k, v in doc.items():
        if k == "input":
            lines.append("input:")
            echo = yaml.safe_dump(v, sort_keys=False, default_flow_style=None).rstrip("\n")
            lines.extend("  " + ln for ln in echo.splitlines())
        else:
            emit(k, v, 0)
    return "\n".join(lines) + "\n"


def _scalar(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6e}"
    if v is None:
        return "none"
    return str(v)


def render_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, default=str) + "\n"


def echo_from_text(text: str) -> dict:
    """Extract the input echo from a rendered text report."""
    lines = text.splitlines()
    start = lines.index("input:") + 1
    body = []
    for ln in lines[start:]:
        if not ln.startswith("  "):
            break
        body.append(ln[2:])
    return yaml.safe_load("\n".join(body))
