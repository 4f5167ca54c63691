"""
Text and image encoder backends.

The synthetic backends derive every direction from a seeded hash of its
token, so the pipeline runs end to end with no pretrained weights. The file
backends load precomputed embeddings and feature grids from disk.
"""

import math
import os
import threading
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import structlog
import torch

from app.core.errors import ArtifactIOError, DimensionMismatchError, EncoderError, UnsupportedImageError
from app.modules.vocabulary.service import STOP_WORDS
from app.utils.file_utils import ensure_dir, get_file_extension
from app.utils.tensor_utils import DTYPE, l2_normalize, seeded_direction

from .types import SceneSpec, SpatialFeatureMap

logger = structlog.get_logger(__name__)

EMBEDDING_MAGIC = b"GEMB"
EMBEDDING_VERSION = 1

ImageInput = Union[SceneSpec, str]


class TextBackend(Protocol):
    dim: int

    def encode(self, text: str) -> torch.Tensor:
        ...


class ImageBackend(Protocol):
    dim: int

    def encode(self, image: ImageInput) -> SpatialFeatureMap:
        ...


@lru_cache(maxsize=65536)
def _direction(key: str, dim: int) -> torch.Tensor:
    return seeded_direction(key, dim)


def _text_tokens(text: str) -> List[str]:
    return [t for t in (w.strip(",;.!?\"'()").lower() for w in text.split()) if t]


class DirectionRegistry:
    """Seeded direction for every subject and attribute phrase of a world.

    Subjects share one direction between text and image. Attribute phrases
    get a text direction only partly aligned with their visual direction
    (``attribute_alignment`` is the cosine between the two).
    """

    def __init__(
        self,
        dim: int,
        seed: int = 0,
        attribute_alignment: float = 1.0,
        subjects: Iterable[str] = (),
        attributes: Iterable[str] = (),
    ):
        self.dim = dim
        self.seed = seed
        self.attribute_alignment = attribute_alignment
        self.subjects: Dict[str, None] = {}
        self.attributes: Dict[str, None] = {}
        self.register(subjects, attributes)

    def register(self, subjects: Iterable[str] = (), attributes: Iterable[str] = ()) -> None:
        for s in subjects:
            self.subjects[s.lower()] = None
        for a in attributes:
            self.attributes[a.lower()] = None

    @property
    def max_phrase_len(self) -> int:
        phrases = list(self.subjects) + list(self.attributes)
        return max((len(p.split()) for p in phrases), default=1)

    def role(self, phrase: str) -> Optional[str]:
        if phrase in self.subjects:
            return "subject"
        if phrase in self.attributes:
            return "attribute"
        return None

    def visual(self, phrase: str) -> torch.Tensor:
        return _direction(f"{self.seed}:{phrase.lower()}", self.dim)

    def text_attribute(self, phrase: str) -> torch.Tensor:
        rho = self.attribute_alignment
        if rho >= 1.0:
            return self.visual(phrase)
        gap = _direction(f"{self.seed}:text-gap:{phrase.lower()}", self.dim)
        return l2_normalize(rho * self.visual(phrase) + math.sqrt(1.0 - rho * rho) * gap)

    def subject_matrix(self, extra: Iterable[str] = ()) -> torch.Tensor:
        names = list(dict.fromkeys(list(self.subjects) + [e.lower() for e in extra]))
        if not names:
            return torch.zeros(0, self.dim, dtype=DTYPE)
        return torch.stack([self.visual(n) for n in names])


class SyntheticTextBackend:
    """Weighted sum of matched phrase directions, unit-normalized.

    Phrases are matched greedily (longest first) against the registry;
    stop words are skipped and any other token contributes its own seeded
    direction with ``unknown_weight``.
    """

    def __init__(
        self,
        registry: DirectionRegistry,
        subject_weight: float = 1.0,
        attribute_weight: float = 1.5,
        unknown_weight: float = 0.5,
    ):
        self.registry = registry
        self.dim = registry.dim
        self.subject_weight = subject_weight
        self.attribute_weight = attribute_weight
        self.unknown_weight = unknown_weight
        self._cache: Dict[str, torch.Tensor] = {}
        self._lock = threading.Lock()

    def encode(self, text: str) -> torch.Tensor:
        if not text or not text.strip():
            raise EncoderError("Cannot encode empty text")
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        vector = self._encode(text)
        with self._lock:
            self._cache[text] = vector
        return vector

    def _encode(self, text: str) -> torch.Tensor:
        tokens = _text_tokens(text)
        total = torch.zeros(self.dim, dtype=DTYPE)
        matched = False
        longest = self.registry.max_phrase_len
        i = 0
        while i < len(tokens):
            for length in range(min(longest, len(tokens) - i), 0, -1):
                phrase = " ".join(tokens[i:i + length])
                role = self.registry.role(phrase)
                if role == "subject":
                    total = total + self.subject_weight * self.registry.visual(phrase)
                    break
                if role == "attribute":
                    total = total + self.attribute_weight * self.registry.text_attribute(phrase)
                    break
            else:
                length = 1
                if tokens[i] not in STOP_WORDS:
                    total = total + self.unknown_weight * self.registry.visual(tokens[i])
                else:
                    i += 1
                    continue
            matched = True
            i += length
        if not matched or total.norm() < 1e-12:
            return _direction(f"{self.registry.seed}:{text.lower()}", self.dim)
        return l2_normalize(total)


class FileTextBackend:
    """Precomputed embeddings looked up by exact text."""

    def __init__(self, path: str, expected_dim: Optional[int] = None):
        self.path = path
        names, matrix = read_embedding_file(path)
        if expected_dim is not None and matrix.shape[1] != expected_dim:
            raise DimensionMismatchError(
                "Embedding file dimension differs from encoder.dim",
                path=path,
                file_dim=matrix.shape[1],
                expected=expected_dim,
            )
        self.dim = int(matrix.shape[1])
        rows = l2_normalize(torch.from_numpy(matrix.astype(np.float64)))
        self._rows = {name: rows[i] for i, name in enumerate(names)}
        logger.info("Text embeddings loaded", path=path, count=len(names), dim=self.dim)

    def encode(self, text: str) -> torch.Tensor:
        row = self._rows.get(text)
        if row is None:
            raise EncoderError(f"No precomputed embedding for {text!r}", path=self.path)
        return row


def write_embedding_file(path: str, names: Sequence[str], matrix: np.ndarray) -> None:
    """Write the precomputed-embedding format (little-endian, float32 rows)."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != len(names):
        raise ArtifactIOError("Embedding matrix must have one row per name", shape=matrix.shape)
    header = np.array([EMBEDDING_VERSION, matrix.shape[1], len(names)], dtype="<u4").tobytes()
    chunks = [EMBEDDING_MAGIC, header]
    for name in names:
        encoded = name.encode("utf-8")
        chunks.append(np.array([len(encoded)], dtype="<u4").tobytes())
        chunks.append(encoded)
    chunks.append(matrix.astype("<f4").tobytes())
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def read_embedding_file(path: str) -> Tuple[List[str], np.ndarray]:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError:
        raise ArtifactIOError(f"Embedding file not found: {path}")
    if data[:4] != EMBEDDING_MAGIC:
        raise ArtifactIOError(f"Not an embedding file: {path}")
    version, dim, count = (int(v) for v in np.frombuffer(data, dtype="<u4", count=3, offset=4))
    if version != EMBEDDING_VERSION:
        raise ArtifactIOError("Unsupported embedding file version", path=path, version=version)
    pos = 16
    names = []
    for _ in range(count):
        (length,) = np.frombuffer(data, dtype="<u4", count=1, offset=pos)
        pos += 4
        names.append(data[pos:pos + int(length)].decode("utf-8"))
        pos += int(length)
    expected = pos + count * dim * 4
    if len(data) != expected:
        raise ArtifactIOError("Embedding file is truncated or padded", path=path)
    matrix = np.frombuffer(data, dtype="<f4", count=count * dim, offset=pos).reshape(count, dim)
    return names, matrix.copy()


class SyntheticImageBackend:
    """Plants subject and attribute directions into a noisy feature grid.

    Background noise is projected off the span of the subject directions, so
    empty cells carry no subject evidence. Each object overwrites the cells
    whose centers fall inside its box with
    ``normalize(ws * subject + wa * sum(attributes)) + noise``; later objects
    are painted over earlier ones.
    """

    def __init__(
        self,
        registry: DirectionRegistry,
        noise_scale: float = 0.05,
        subject_weight: float = 1.0,
        attribute_weight: float = 0.5,
    ):
        self.registry = registry
        self.dim = registry.dim
        self.noise_scale = noise_scale
        self.subject_weight = subject_weight
        self.attribute_weight = attribute_weight

    def encode(self, image: ImageInput) -> SpatialFeatureMap:
        if not isinstance(image, SceneSpec):
            raise UnsupportedImageError("Synthetic image backend needs a scene description")
        height, width = image.image_size
        if height < image.stride or width < image.stride:
            raise EncoderError("Image is smaller than one stride", image_size=image.image_size)
        rows = math.ceil(height / image.stride)
        cols = math.ceil(width / image.stride)

        generator = torch.Generator().manual_seed(int(image.seed))
        noise = torch.randn(rows, cols, self.dim, generator=generator, dtype=DTYPE) * self.noise_scale
        span = self.registry.subject_matrix(o.subject for o in image.objects)
        if span.shape[0] > 0:
            basis, _ = torch.linalg.qr(span.T)
            noise = noise - (noise @ basis) @ basis.T

        features = noise.clone()
        fmap = SpatialFeatureMap(features=features, stride=image.stride, image_size=(height, width))
        centers = fmap.cell_centers().reshape(rows, cols, 2)
        for obj in image.objects:
            signal = self.subject_weight * self.registry.visual(obj.subject)
            for attribute in obj.attributes:
                signal = signal + self.attribute_weight * self.registry.visual(attribute)
            signal = l2_normalize(signal)
            mask = cells_inside(centers, obj.box)
            features[mask] = signal + noise[mask]
        return fmap


def cells_inside(centers: torch.Tensor, box: Sequence[float]) -> torch.Tensor:
    """Mask of cells whose center lies in the box (inclusive); never empty.

    ``centers`` has shape (..., 2) holding normalized (x, y). When no center
    falls inside, the cell nearest to the box center is selected.
    """
    cx, cy, w, h = (float(v) for v in box)
    x, y = centers[..., 0], centers[..., 1]
    mask = (x >= cx - w / 2) & (x <= cx + w / 2) & (y >= cy - h / 2) & (y <= cy + h / 2)
    if not bool(mask.any()):
        distance = (x - cx) ** 2 + (y - cy) ** 2
        flat = torch.zeros(distance.numel(), dtype=torch.bool)
        flat[int(torch.argmin(distance.reshape(-1)))] = True
        mask = flat.reshape(distance.shape)
    return mask


class FileImageBackend:
    """Precomputed (H, W, d) ``.npy`` feature grids."""

    def __init__(self, image_dir: Optional[str], stride: int, expected_dim: Optional[int] = None):
        self.image_dir = image_dir
        self.stride = stride
        self.dim = expected_dim or 0

    def _resolve(self, image: ImageInput) -> str:
        if isinstance(image, SceneSpec):
            name = image.feature_file or f"{image.image_id}.npy"
        else:
            name = image
        if self.image_dir and not os.path.isabs(name):
            name = os.path.join(self.image_dir, name)
        return name

    def encode(self, image: ImageInput) -> SpatialFeatureMap:
        path = self._resolve(image)
        if get_file_extension(path) != "npy":
            raise UnsupportedImageError(f"Unsupported image format: {path}")
        try:
            grid = np.load(path, allow_pickle=False)
        except FileNotFoundError:
            raise ArtifactIOError(f"Feature file not found: {path}")
        except ValueError as e:
            raise UnsupportedImageError(f"Unreadable feature file: {path}", error=str(e))
        if grid.ndim != 3:
            raise UnsupportedImageError("Feature grid must have shape (H, W, d)", path=path)
        if self.dim and grid.shape[2] != self.dim:
            raise DimensionMismatchError(
                "Feature grid dimension differs from encoder.dim", path=path, file_dim=grid.shape[2]
            )
        rows, cols = grid.shape[:2]
        if isinstance(image, SceneSpec):
            image_size = tuple(image.image_size)
        else:
            image_size = (rows * self.stride, cols * self.stride)
        return SpatialFeatureMap(
            features=torch.from_numpy(grid.astype(np.float64)),
            stride=self.stride,
            image_size=image_size,
        )
