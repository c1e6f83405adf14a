"""
Embedding providers for the documentation knowledge base.
"""

import hashlib
import logging
import re
import time
from typing import List, Optional, Sequence

import numpy as np
import requests

from .config import EmbeddingConfig, read_secret
from .errors import ProviderError


LOG = logging.getLogger(__name__)


_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+")


class HashingEmbedder:
    """
    Deterministic local embedder: signed feature hashing of lower-cased word tokens.

    Needs no network and gives identical vectors for identical texts, across processes.
    """

    name = "hashing"

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("Embedding dimension must be positive")
        self._dimension = dimension

    def __repr__(self):
        return "<{}: {}>".format(self.__class__.__name__, self._dimension)

    def dimension(self) -> int:
        return self._dimension

    def _vector(self, text: str) -> List[float]:
        vector = np.zeros(self._dimension)
        for token in _TOKEN.findall(text.lower()):
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            sign = 1.0 if value & 1 else -1.0
            vector[(value >> 1) % self._dimension] += sign
        return vector.tolist()

    def embed(self, texts: Sequence[str]) -> List[List[float]]:
        return [self._vector(text) for text in texts]


class HTTPEmbeddingProvider:
    """
    Client for an OpenAI-style `/embeddings` endpoint.

    Transport errors are retried with exponential backoff; anything still failing raises
    `ProviderError`.
    """

    name = "http"

    def __init__(self, config: EmbeddingConfig, session: Optional[requests.Session] = None):
        if not config.endpoint:
            raise ValueError("HTTP embedding provider needs an endpoint")
        self.config = config
        self.session = session or requests.Session()
        key = read_secret(config.api_key_env)
        if key:
            self.session.headers["Authorization"] = "Bearer {}".format(key)

    def __repr__(self):
        return "<{}: {} @ {}>".format(self.__class__.__name__, self.config.model, self.config.endpoint)

    def dimension(self) -> int:
        return self.config.dimension

    def embed(self, texts: Sequence[str]) -> List[List[float]]:
        if not texts:
            return []
        payload = {"model": self.config.model, "input": list(texts)}
        delay = self.config.backoff
        for attempt in range(1, self.config.retries + 1):
            try:
                resp = self.session.post(self.config.endpoint, json=payload, timeout=self.config.timeout)
                resp.raise_for_status()
                data = resp.json()["data"]
            except (requests.RequestException, ValueError, KeyError) as ex:
                if attempt == self.config.retries:
                    raise ProviderError("Embedding request failed after {} attempts: {}".format(attempt, ex))
                LOG.warning("Embedding request failed (attempt %d): %s", attempt, ex)
                time.sleep(delay)
                delay *= 2
                continue
            vectors = [item["embedding"] for item in sorted(data, key=lambda item: item.get("index", 0))]
            for vector in vectors:
                if len(vector) != self.config.dimension:
                    raise ProviderError("Expected {}-dimensional embeddings, got {}".format(
                        self.config.dimension, len(vector),
                    ))
            return vectors
        raise ProviderError("Embedding request not attempted")


def embedder_for(config: EmbeddingConfig):
    """
    Construct the embedding provider named by `config.kind`.
    """
    if config.kind == "http":
        return HTTPEmbeddingProvider(config)
    return HashingEmbedder(config.dimension)
