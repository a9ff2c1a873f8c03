"""Text embedders.

The default :class:`HashEmbedder` is a signed feature-hashing model over word
tokens and character trigrams. It needs no model weights or network, and the
same text always yields the same unit vector, which keeps memory builds and
benchmarks reproducible. :class:`HttpEmbedder` talks to an external service
and falls back to the hash model when the service misbehaves.
"""
from __future__ import annotations

import hashlib
import json
import logging
import re
import urllib.request
from functools import lru_cache

import numpy as np

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z0-9]+")
_STOPWORDS = frozenset({"a", "an", "the", "of", "with", "and", "in", "on", "to"})


class EmbeddingError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.findall(text.lower()) if t not in _STOPWORDS]


WORD_WEIGHT = 1.0
TRIGRAM_WEIGHT = 0.5


def features(text: str) -> list[tuple[str, float]]:
    """Weighted word tokens plus boundary-marked character trigrams."""
    out = []
    for tok in tokenize(text):
        out.append(("w:" + tok, WORD_WEIGHT))
        padded = f"#{tok}#"
        out.extend(("c:" + padded[i:i + 3], TRIGRAM_WEIGHT) for i in range(len(padded) - 2))
    return out


@lru_cache(maxsize=1 << 16)
def _bucket(feature: str, dim: int) -> tuple[int, float]:
    h = int.from_bytes(hashlib.blake2b(feature.encode(), digest_size=8).digest(), "little")
    return h % dim, (1.0 if (h >> 63) & 1 else -1.0)


class HashEmbedder:
    kind = "hash"

    def __init__(self, dim: int = 256):
        if dim < 4:
            raise EmbeddingError("embedding dim must be >= 4")
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmbeddingError("cannot embed empty text")
        hit = self._cache.get(text)
        if hit is not None:
            return hit
        feats = features(text)
        if not feats:
            # punctuation-only text still gets a stable vector
            feats = [("raw:" + text, 1.0)]
        v = np.zeros(self.dim)
        for f, w in feats:
            i, sign = _bucket(f, self.dim)
            v[i] += sign * w
        n = np.linalg.norm(v)
        if n == 0.0:
            v[_bucket("raw:" + text, self.dim)[0]] = 1.0
            n = 1.0
        v = v / n
        v.flags.writeable = False
        self._cache[text] = v
        return v

    def embed_many(self, texts) -> np.ndarray:
        return np.array([self.embed(t) for t in texts]).reshape(-1, self.dim)

    def spec(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


class HttpEmbedder:
    """Client for ``POST {"texts": [...]} -> {"vectors": [[...]]}``.

    Any transport or payload problem logs a warning and the batch is embedded
    by the deterministic fallback instead.
    """

    kind = "http"

    def __init__(self, url: str, dim: int = 256, timeout: float = 5.0):
        self.url = url
        self.dim = dim
        self.timeout = timeout
        self.fallback = HashEmbedder(dim)

    def _post(self, texts: list[str]) -> np.ndarray:
        body = json.dumps({"texts": texts}).encode()
        req = urllib.request.Request(self.url, body, {"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            payload = json.loads(resp.read())
        vecs = np.asarray(payload["vectors"], dtype=float)
        if vecs.shape != (len(texts), self.dim):
            raise EmbeddingError(f"service returned shape {vecs.shape}")
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise EmbeddingError("service returned a zero vector")
        return vecs / norms

    def embed_many(self, texts) -> np.ndarray:
        texts = list(texts)
        for t in texts:
            if not t or not t.strip():
                raise EmbeddingError("cannot embed empty text")
        try:
            return self._post(texts)
        except Exception as exc:  # noqa: BLE001 - any failure means fallback
            log.warning("embedding service %s failed (%s); using hash embedder", self.url, exc)
            return self.fallback.embed_many(texts)

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def spec(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "url": self.url}


def embedder_from_spec(spec: dict | None, url: str | None = None):
    spec = spec or {"kind": "hash", "dim": 256}
    dim = int(spec.get("dim", 256))
    url = url or (spec.get("url") if spec.get("kind") == "http" else None)
    if url:
        return HttpEmbedder(url, dim)
    return HashEmbedder(dim)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise EmbeddingError("cosine of a zero vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def unit_similarity(cos: float | np.ndarray):
    """Map cosine from [-1, 1] onto [0, 1]."""
    return (1.0 + cos) / 2.0
