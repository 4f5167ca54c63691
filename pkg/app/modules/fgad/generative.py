"""
Generative-VLM fine scoring.

A generative vision-language model is asked, per region and caption,
whether the region matches the caption; its probability of answering "yes"
replaces the cosine similarity. Per-box probabilities over the vocabulary are
renormalized with a softmax scaled by ``m_fine``.
"""

import json
import threading
from typing import Dict, List, Optional, Protocol, Tuple

import httpx
import structlog
import torch
from torch import Tensor

from app.core.config import GenerativeConfig
from app.core.errors import BackendTransportError, ConfigError, GenerativeBackendError, TranscriptMissError
from app.modules.encoders.types import SpatialFeatureMap
from app.utils.transcripts import TranscriptStore, canonical_request

from .types import GenerativeRequest, ScoringContext

logger = structlog.get_logger(__name__)

VLM_CHANNEL = "vlm"
MATCH_PROMPT = (
    "Does this image match the attributes described in the following caption? "
    "If so, output yes, if not, output no."
)


class GenerativeBackend(Protocol):
    model: str

    def yes_probability(self, request: GenerativeRequest) -> float:
        ...


def _check_probability(value, request: GenerativeRequest) -> float:
    if value is None:
        raise GenerativeBackendError("Backend reported no yes-probability", caption=request.caption)
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise GenerativeBackendError("Yes-probability is not a number", value=value)
    if not 0.0 <= value <= 1.0:
        raise GenerativeBackendError("Yes-probability outside [0, 1]", value=value)
    return value


class HttpGenerativeBackend:
    """JSON endpoint ``POST {base_url}/yes_probability`` answering ``{"yes_probability": p}``."""

    def __init__(
        self,
        base_url: str,
        model: str,
        timeout: float = 60.0,
        retries: int = 2,
        max_in_flight: int = 4,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.retries = retries
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def yes_probability(self, request: GenerativeRequest) -> float:
        last_error: Optional[Exception] = None
        with self._slots:
            for attempt in range(self.retries + 1):
                try:
                    response = self._client.post("/yes_probability", json=request.model_dump())
                    response.raise_for_status()
                    body = response.json()
                except (httpx.HTTPError, ValueError) as e:
                    last_error = e
                    logger.warning("Generative backend request failed", attempt=attempt + 1, error=str(e))
                    continue
                return _check_probability(body.get("yes_probability"), request)
        raise BackendTransportError("Generative backend unreachable", base_url=self.base_url, error=str(last_error))

    def close(self) -> None:
        self._client.close()


class CannedGenerativeBackend:
    """Fixed yes-probabilities per caption (oracle and uninformative fakes)."""

    def __init__(self, probabilities: Dict[str, float], default: Optional[float] = None, model: str = "canned"):
        self.probabilities = dict(probabilities)
        self.default = default
        self.model = model

    def yes_probability(self, request: GenerativeRequest) -> float:
        return _check_probability(self.probabilities.get(request.caption, self.default), request)


class ReplayGenerativeBackend:
    def __init__(self, store: TranscriptStore, model: str):
        self.store = store
        self.model = model

    def yes_probability(self, request: GenerativeRequest) -> float:
        response = self.store.lookup(VLM_CHANNEL, canonical_request(request.model_dump()))
        if response is None:
            raise TranscriptMissError("No recorded VLM response", image_id=request.image_id, caption=request.caption)
        return _check_probability(json.loads(response).get("yes_probability"), request)


class RecordingGenerativeBackend:
    def __init__(self, inner: GenerativeBackend, store: TranscriptStore):
        self.inner = inner
        self.store = store
        self.model = inner.model

    def yes_probability(self, request: GenerativeRequest) -> float:
        value = self.inner.yes_probability(request)
        self.store.append(
            VLM_CHANNEL,
            canonical_request(request.model_dump()),
            json.dumps({"yes_probability": value}),
        )
        return value


def get_generative_backend(config: GenerativeConfig) -> GenerativeBackend:
    if config.backend == "replay":
        if not config.transcript_path:
            raise ConfigError("generative.backend=replay requires generative.transcript_path")
        return ReplayGenerativeBackend(TranscriptStore(config.transcript_path), config.model)
    live = HttpGenerativeBackend(
        config.base_url,
        config.model,
        timeout=config.timeout,
        retries=config.retries,
        max_in_flight=config.max_in_flight,
    )
    if config.record:
        if not config.transcript_path:
            raise ConfigError("generative.record requires generative.transcript_path")
        return RecordingGenerativeBackend(live, TranscriptStore(config.transcript_path))
    return live


def generative_score(backend: GenerativeBackend, image_id: str, box, caption: str) -> float:
    """Yes-probability of one region/caption pair."""
    request = GenerativeRequest(
        model=backend.model,
        image_id=image_id,
        box=[round(float(v), 6) for v in box],
        prompt=MATCH_PROMPT,
        caption=caption,
    )
    return backend.yes_probability(request)


class GenerativeFineScorer:
    """Softmax over m_fine-scaled yes-probabilities of every caption."""

    def __init__(self, backend: GenerativeBackend, m_fine: float = 100.0):
        self.backend = backend
        self.m_fine = m_fine

    def score(self, fmap: SpatialFeatureMap, boxes: Tensor, context: ScoringContext) -> Tuple[Tensor, List[bool]]:
        if not context.class_names:
            raise GenerativeBackendError("Generative scoring needs the caption of every class")
        image_id = context.image_id or "image"
        rows = []
        for box in boxes:
            probabilities = torch.tensor(
                [generative_score(self.backend, image_id, box.tolist(), c) for c in context.class_names],
                dtype=context.refined_full.dtype,
            )
            rows.append(torch.softmax(self.m_fine * probabilities, dim=0))
        return torch.stack(rows), [False] * len(rows)
