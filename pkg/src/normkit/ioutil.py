"""Small file-writing helpers: atomic writes and stable JSON encoding.

Writers in this package go through these helpers so that reruns with the
same inputs produce byte-identical files and interrupted runs never leave a
half-written artifact behind.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any


def dump_json(obj: Any) -> str:
    """Deterministic single-line JSON: sorted keys, no trailing whitespace."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename over."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_lines(path: str | Path, lines: list[str]) -> None:
    """One string per line, LF endings, trailing newline."""
    body = "".join(line + "\n" for line in lines)
    atomic_write_text(path, body)
