"""
File utilities.
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator, List, Type, TypeVar

from pydantic import BaseModel, ValidationError

from app.core.errors import ArtifactIOError

ModelT = TypeVar("ModelT", bound=BaseModel)


def ensure_dir(path: str) -> str:
    """Create a directory (and parents) if missing and return it."""
    os.makedirs(path, exist_ok=True)
    return path


def get_file_extension(filename: str) -> str:
    """Get file extension from filename."""
    return os.path.splitext(filename)[1].lower().lstrip('.')


def atomic_write_text(path: str, text: str) -> None:
    """Write text so readers never observe a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    ensure_dir(directory)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise ArtifactIOError(f"Cannot write {path}", error=str(e))


def write_json(path: str, data: Any) -> None:
    atomic_write_text(path, json.dumps(data, indent=2, ensure_ascii=False) + "\n")


def read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ArtifactIOError(f"File not found: {path}")
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactIOError(f"Cannot read JSON from {path}", error=str(e))


def write_jsonl(path: str, records: Iterable[BaseModel]) -> int:
    """Write one model per line in field-definition order; returns the count."""
    lines = [record.model_dump_json() for record in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    return len(lines)


def iter_jsonl(path: str) -> Iterator[dict]:
    try:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    raise ArtifactIOError(f"Malformed record in {path}", line=lineno, error=str(e))
    except FileNotFoundError:
        raise ArtifactIOError(f"File not found: {path}")


def read_jsonl(path: str, model: Type[ModelT]) -> List[ModelT]:
    """Read a JSONL file into pydantic models."""
    try:
        return [model.model_validate(item) for item in iter_jsonl(path)]
    except ValidationError as e:
        raise ArtifactIOError(f"Record in {path} does not match {model.__name__}", error=str(e))


def read_lines(path: str) -> List[str]:
    """Non-empty, stripped lines of a UTF-8 text file (``#`` starts a comment)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ArtifactIOError(f"File not found: {path}")
    lines = []
    for raw in text.splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return lines
