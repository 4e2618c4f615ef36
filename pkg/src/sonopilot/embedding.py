"""Text embedding backends.

The default backend is a deterministic feature-hashing embedder: no model
weights, no network, bit-identical output on every platform. A remote backend
can call any embeddings-API-compatible HTTP service instead, which is where a
trained domain model plugs in.

Hashing rule (frozen, relied on by golden fixtures): lowercase the text, split
it into maximal runs of alphanumeric characters, and for each token emit the
token itself plus every character trigram of the token padded with '#' on both
ends. Each feature is hashed with FNV-1a 64-bit; the bucket is ``hash mod d``
and the sign is +1 when bit 63 of the hash is 0, else -1. Signs accumulate
into buckets and the result is L2-normalized (an all-zero vector stays zero).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import httpx

DEFAULT_DIMENSION = 256

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

ENDPOINT_ENV_VAR = "SONOPILOT_EMBED_ENDPOINT"
MODEL_ENV_VAR = "SONOPILOT_EMBED_MODEL"


class EmbeddingBackendError(Exception):
    """Base class for remote embedding failures."""


class EmbeddingTransportError(EmbeddingBackendError):
    """The embedding service could not be reached."""


class EmbeddingServiceError(EmbeddingBackendError):
    """The embedding service answered with a non-2xx status."""

    def __init__(self, status_code: int, detail: str = ""):
        self.status_code = status_code
        super().__init__(f"embedding service returned status {status_code}" + (f": {detail}" if detail else ""))


class EmbeddingResponseError(EmbeddingBackendError):
    """The embedding service answered 2xx but the body was not usable."""


class DimensionMismatchError(ValueError):
    """Two vectors (or a vector and an index) disagree on dimension."""


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-dimension vector that is either all-zero or unit-normalized."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding values must be finite")
        norm = self.norm()
        if norm != 0.0 and abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm must be 0 or 1, got {norm!r}")

    @property
    def dimension(self) -> int:
        return len(self.values)

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)


class EmbedderBackend(str, Enum):
    HASHING = "hashing"
    REMOTE = "remote"


@dataclass(frozen=True)
class EmbedderConfig:
    """How to turn text into vectors; remote fields are set iff backend is remote."""

    dimension: int = DEFAULT_DIMENSION
    backend: EmbedderBackend = EmbedderBackend.HASHING
    remote_endpoint: str | None = None
    remote_model_name: str | None = None

    def __post_init__(self) -> None:
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        is_remote = self.backend is EmbedderBackend.REMOTE
        has_remote_fields = self.remote_endpoint is not None and self.remote_model_name is not None
        if is_remote and not has_remote_fields:
            raise ValueError("remote backend requires remote_endpoint and remote_model_name")
        if not is_remote and (self.remote_endpoint is not None or self.remote_model_name is not None):
            raise ValueError("remote fields are only valid with the remote backend")

    @property
    def label(self) -> str:
        """Short name used in evaluation tables."""
        if self.backend is EmbedderBackend.REMOTE:
            return str(self.remote_model_name)
        return f"hashing-{self.dimension}"

    @classmethod
    def remote_from_env(cls, dimension: int = DEFAULT_DIMENSION) -> "EmbedderConfig":
        """Build a remote config from SONOPILOT_EMBED_ENDPOINT / _MODEL."""
        endpoint = os.environ.get(ENDPOINT_ENV_VAR)
        model = os.environ.get(MODEL_ENV_VAR)
        if not endpoint or not model:
            raise ValueError(f"{ENDPOINT_ENV_VAR} and {MODEL_ENV_VAR} must both be set")
        return cls(
            dimension=dimension,
            backend=EmbedderBackend.REMOTE,
            remote_endpoint=endpoint,
            remote_model_name=model,
        )


def fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    current: list[str] = []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


def _token_features(token: str) -> list[str]:
    padded = "#" + token + "#"
    return [token] + [padded[i : i + 3] for i in range(len(padded) - 2)]


def _hashing_embed(text: str, dimension: int) -> EmbeddingVector:
    buckets = [0] * dimension
    for token in _tokenize(text):
        for feature in _token_features(token):
            h = fnv1a_64(feature.encode("utf-8"))
            sign = 1 if (h >> 63) & 1 == 0 else -1
            buckets[h % dimension] += sign
    return _normalized(buckets)


def _normalized(values: Sequence[float]) -> EmbeddingVector:
    norm = math.sqrt(sum(v * v for v in values))
    if norm == 0.0:
        return EmbeddingVector(tuple(0.0 for _ in values))
    return EmbeddingVector(tuple(v / norm for v in values))


def _remote_embed(text: str, config: EmbedderConfig, timeout: float) -> EmbeddingVector:
    payload = {"model": config.remote_model_name, "input": [text]}
    try:
        response = httpx.post(str(config.remote_endpoint), json=payload, timeout=timeout)
    except httpx.HTTPError as exc:
        raise EmbeddingTransportError(f"embedding request failed: {exc}") from exc
    if not (200 <= response.status_code < 300):
        raise EmbeddingServiceError(response.status_code, response.text[:200])
    try:
        data = response.json()["data"]
        raw = data[0]["embedding"]
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise EmbeddingResponseError(f"malformed embedding response: {exc}") from exc
    if not isinstance(raw, list) or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in raw):
        raise EmbeddingResponseError("embedding response values must be finite numbers")
    if len(raw) != config.dimension:
        raise DimensionMismatchError(
            f"embedding service returned dimension {len(raw)}, expected {config.dimension}"
        )
    return _normalized([float(v) for v in raw])


def embed_text(text: str, config: EmbedderConfig | None = None, *, timeout: float = 30.0) -> EmbeddingVector:
    """Embed ``text`` under ``config``.

    The hashing backend is pure and cannot fail; empty or non-alphanumeric
    text maps to the zero vector so degenerate queries rank last instead of
    raising. The remote backend reports transport failures, non-2xx statuses,
    malformed bodies, and dimension mismatches as distinct errors.
    """
    if config is None:
        config = EmbedderConfig()
    if config.backend is EmbedderBackend.HASHING:
        return _hashing_embed(text, config.dimension)
    return _remote_embed(text, config, timeout)
