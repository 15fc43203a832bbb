"""
Tab-separated file helpers shared by the snapshot loader and stage writers.

Tabs, newlines and backslashes inside a field are escaped as ``\\t``, ``\\n``
and ``\\\\`` so one record is always one physical line.
"""

import logging
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

_ESCAPES = {"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}


def escape_field(value) -> str:
    text = "" if value is None else str(value)
    return (
        text.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def unescape_field(text: str) -> str:
    if "\\" not in text:
        return text
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text) and text[i + 1] in _ESCAPES:
            out.append(_ESCAPES[text[i + 1]])
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def read_tsv(path: Path, skip_header: bool = False) -> Iterator[Tuple[int, List[str]]]:
    """Yield ``(line_no, fields)``; blank lines and ``#`` comments are skipped."""
    with open(path, "r", encoding="utf-8", newline="\n") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            if skip_header and line_no == 1:
                continue
            yield line_no, [unescape_field(f) for f in line.split("\t")]


def write_tsv(path: Path, rows: Iterable[Sequence], header: Optional[Sequence[str]] = None) -> int:
    """Write rows (escaped) and return how many data rows were written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        if header:
            handle.write("\t".join(header) + "\n")
        for row in rows:
            handle.write("\t".join(escape_field(v) for v in row) + "\n")
            count += 1
    logger.debug(f"Wrote {count} rows to {path}")
    return count


def format_score(value: float) -> str:
    """Fixed-precision float rendering so stage files are byte-stable."""
    return f"{value:.6f}"
