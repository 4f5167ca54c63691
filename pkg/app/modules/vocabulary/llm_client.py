"""
LLM clients for subject identification.

All clients share one async interface, ``complete(prompt) -> str``. The HTTP
client talks to any OpenAI-compatible ``/chat/completions`` endpoint; the
replay and recording clients read and write the shared transcript format so
tests never need a live model.
"""

import asyncio
from typing import Optional, Protocol

import httpx
import structlog

from app.core.config import LLMConfig
from app.core.errors import BackendTransportError, ConfigError, TranscriptMissError
from app.utils.transcripts import TranscriptStore

logger = structlog.get_logger(__name__)

LLM_CHANNEL = "llm"


class LLMClient(Protocol):
    async def complete(self, prompt: str) -> str:
        ...


class HttpLLMClient:
    """OpenAI-compatible chat client with timeout, retries and an in-flight bound."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: Optional[str] = None,
        timeout: float = 30.0,
        retries: int = 2,
        max_in_flight: int = 4,
        transport: Optional[httpx.AsyncBaseTransport] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.retries = retries
        self.max_in_flight = max_in_flight
        self._transport = transport
        self._semaphore: Optional[asyncio.Semaphore] = None

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    async def complete(self, prompt: str) -> str:
        # created lazily so the semaphore binds to the running loop
        if self._semaphore is None:
            self._semaphore = asyncio.Semaphore(self.max_in_flight)
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        last_error: Optional[Exception] = None
        async with self._semaphore:
            async with httpx.AsyncClient(
                base_url=self.base_url,
                timeout=self.timeout,
                headers=self._headers(),
                transport=self._transport,
            ) as client:
                for attempt in range(self.retries + 1):
                    try:
                        response = await client.post("/chat/completions", json=payload)
                        response.raise_for_status()
                        body = response.json()
                        return body["choices"][0]["message"]["content"] or ""
                    except (httpx.HTTPError, KeyError, IndexError, ValueError) as e:
                        last_error = e
                        logger.warning("LLM request failed", attempt=attempt + 1, error=str(e))
        raise BackendTransportError(
            "LLM backend unreachable", base_url=self.base_url, error=str(last_error)
        )


class ReplayLLMClient:
    """Answers prompts from a recorded transcript."""

    def __init__(self, store: TranscriptStore):
        self.store = store

    async def complete(self, prompt: str) -> str:
        response = self.store.lookup(LLM_CHANNEL, prompt)
        if response is None:
            raise TranscriptMissError("No recorded LLM response for prompt", prompt=prompt[-80:])
        return response


class RecordingLLMClient:
    """Forwards to a live client and appends every exchange to a transcript."""

    def __init__(self, inner: LLMClient, store: TranscriptStore):
        self.inner = inner
        self.store = store

    async def complete(self, prompt: str) -> str:
        response = await self.inner.complete(prompt)
        self.store.append(LLM_CHANNEL, prompt, response)
        return response


def get_llm_client(config: LLMConfig) -> LLMClient:
    """Build the client selected by configuration.

    A transcript path without ``record`` replays; with ``record`` the live
    client is wrapped so every exchange is written to the transcript.
    """
    if config.transcript_path and not config.record:
        return ReplayLLMClient(TranscriptStore(config.transcript_path))
    live = HttpLLMClient(
        base_url=config.base_url,
        model=config.model,
        api_key=config.api_key,
        timeout=config.timeout,
        retries=config.retries,
        max_in_flight=config.max_in_flight,
    )
    if config.record:
        if not config.transcript_path:
            raise ConfigError("llm.record requires llm.transcript_path")
        return RecordingLLMClient(live, TranscriptStore(config.transcript_path))
    return live
