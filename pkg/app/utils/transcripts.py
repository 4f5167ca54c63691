"""
Record/replay transcripts for language and vision-language backends.

One JSON object per line: ``{"channel": ..., "request": ..., "response": ...}``.
The vocabulary LLM client and the generative scorer share this format.
"""

import json
import os
import threading
from typing import Dict, Optional, Tuple

from pydantic import BaseModel

from app.core.errors import ArtifactIOError
from app.utils.file_utils import ensure_dir, iter_jsonl


class TranscriptRecord(BaseModel):
    channel: str
    request: str
    response: str


class TranscriptStore:
    """Append-only transcript file with an in-memory index (last record wins)."""

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self._records: Dict[Tuple[str, str], TranscriptRecord] = {}
        self._lock = threading.Lock()
        if path and os.path.exists(path):
            for item in iter_jsonl(path):
                record = TranscriptRecord.model_validate(item)
                self._records[(record.channel, record.request)] = record

    def __len__(self) -> int:
        return len(self._records)

    def lookup(self, channel: str, request: str) -> Optional[str]:
        record = self._records.get((channel, request))
        return record.response if record else None

    def append(self, channel: str, request: str, response: str) -> None:
        record = TranscriptRecord(channel=channel, request=request, response=response)
        with self._lock:
            self._records[(channel, request)] = record
            if self.path:
                try:
                    ensure_dir(os.path.dirname(os.path.abspath(self.path)))
                    with open(self.path, "a", encoding="utf-8") as f:
                        f.write(record.model_dump_json() + "\n")
                except OSError as e:
                    raise ArtifactIOError(f"Cannot append to transcript {self.path}", error=str(e))


def canonical_request(payload: dict) -> str:
    """Stable string key for structured requests."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))
