"""JSONL reading/writing with stable byte output."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .errors import FileUnreadable, MalformedDocument, OutputUnwritable


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    """Write one compact JSON object per line; key order is insertion order."""
    try:
        target = Path(path)
        if target.parent != Path(""):
            target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8", newline="\n") as handle:
            for row in rows:
                handle.write(json.dumps(row, ensure_ascii=False))
                handle.write("\n")
    except OSError as exc:
        raise OutputUnwritable(f"cannot write {path}: {exc}") from exc


def read_jsonl(path: str | Path) -> list[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    rows: list[dict] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"{path}:{line_no}: invalid JSON: {exc}") from exc
        if not isinstance(row, dict):
            raise MalformedDocument(f"{path}:{line_no}: row is not an object")
        rows.append(row)
    return rows


def write_json(path: str | Path, obj: object) -> None:
    try:
        target = Path(path)
        if target.parent != Path(""):
            target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8", newline="\n") as handle:
            json.dump(obj, handle, indent=2, ensure_ascii=False)
            handle.write("\n")
    except OSError as exc:
        raise OutputUnwritable(f"cannot write {path}: {exc}") from exc


def read_json(path: str | Path) -> object:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{path}: invalid JSON: {exc}") from exc
