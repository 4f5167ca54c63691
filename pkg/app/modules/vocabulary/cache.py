"""
Versioned on-disk cache of subject parses.

File layout (UTF-8 JSON lines): a header ``{"format": ..., "version": N}``
followed by one SubjectParse per line in field order. Keys are the exact
class-name strings; later lines override earlier ones.
"""

import json
import os
import threading
from typing import Dict, Iterator, Optional

import structlog

from app.core.errors import ArtifactIOError
from app.utils.file_utils import atomic_write_text, ensure_dir, iter_jsonl

from .types import SubjectParse

logger = structlog.get_logger(__name__)

CACHE_FORMAT = "guided-parse-cache"
CACHE_VERSION = 1


class ParseCache:
    """Thread-safe parse cache; reads are lock-free, writes are serialized."""

    def __init__(self, path: Optional[str] = None, version: int = CACHE_VERSION):
        self.path = path
        self.version = version
        self.entries: Dict[str, SubjectParse] = {}
        self._lock = threading.Lock()
        self._header_written = False

    @classmethod
    def load(cls, path: str) -> "ParseCache":
        """Open a cache file, creating an empty cache if it does not exist."""
        cache = cls(path)
        if not os.path.exists(path):
            return cache
        items = iter_jsonl(path)
        header = next(items, None)
        if header is None:
            return cache
        if header.get("format") != CACHE_FORMAT:
            raise ArtifactIOError(f"Not a parse cache: {path}")
        if header.get("version") != CACHE_VERSION:
            raise ArtifactIOError(
                "Unsupported parse cache version", path=path, version=header.get("version")
            )
        for item in items:
            parse = SubjectParse.model_validate(item)
            cache.entries[parse.input_name] = parse
        cache._header_written = True
        logger.info("Parse cache loaded", path=path, entries=len(cache.entries))
        return cache

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __iter__(self) -> Iterator[SubjectParse]:
        return iter(list(self.entries.values()))

    def lookup(self, name: str) -> Optional[SubjectParse]:
        return self.entries.get(name)

    def store(self, parse: SubjectParse) -> None:
        with self._lock:
            self.entries[parse.input_name] = parse
            if self.path:
                self._append(parse)

    def save(self) -> None:
        """Rewrite the file compactly (one line per name)."""
        if not self.path:
            return
        with self._lock:
            atomic_write_text(self.path, self._render())
            self._header_written = True

    def _header(self) -> str:
        return json.dumps({"format": CACHE_FORMAT, "version": self.version})

    def _render(self) -> str:
        lines = [self._header()] + [p.model_dump_json() for p in self.entries.values()]
        return "".join(line + "\n" for line in lines)

    def _append(self, parse: SubjectParse) -> None:
        try:
            ensure_dir(os.path.dirname(os.path.abspath(self.path)))
            with open(self.path, "a", encoding="utf-8") as f:
                if not self._header_written:
                    f.write(self._header() + "\n")
                    self._header_written = True
                f.write(parse.model_dump_json() + "\n")
        except OSError as e:
            raise ArtifactIOError(f"Cannot write parse cache {self.path}", error=str(e))
