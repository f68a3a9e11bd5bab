"""Text embedding backends.

The offline backend is a hashed bag of words: each token lands in one slot
with a +/-1 sign, both chosen by a seeded 64-bit hash, and the accumulation
is L2-normalized. It is order-invariant on purpose, so near-duplicate
sentences with opposite meanings ("turn on" vs "turn off") stay near
neighbors; that is the failure mode the trimming pipeline exists to fix.

The remote backend POSTs ``{"texts": [...]}`` to an HTTP endpoint and expects
``{"vectors": [[...], ...]}`` back.
"""
from __future__ import annotations

import hashlib
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from .errors import (
    DegenerateVector,
    DimensionMismatch,
    EmptyInput,
    EmptyText,
    MalformedRecord,
    RemoteUnavailable,
)
from .model import Sentence

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)

_REMOTE_CHUNK = 64


@dataclass(frozen=True)
class EmbedderSpec:
    """How to embed text: ``kind`` is "hashed-bag" or "remote"."""

    kind: str
    dim: int
    seed: int = 0
    endpoint: str | None = None
    parallelism: int = 4

    def __post_init__(self):
        if self.kind not in ("hashed-bag", "remote"):
            raise MalformedRecord(f"unknown embedder kind: {self.kind!r}")
        if not isinstance(self.dim, int) or self.dim < 1:
            raise MalformedRecord("embedder dim must be a positive integer")
        if self.kind == "remote" and not self.endpoint:
            raise MalformedRecord("remote embedder needs an endpoint")
        if self.parallelism < 1:
            raise MalformedRecord("parallelism must be >= 1")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop empty tokens."""
    return _TOKEN.findall(text.lower())


def _token_hash(token: str, seed: int) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def _hashed_bag(text: str, dim: int, seed: int) -> np.ndarray:
    if not text:
        raise EmptyText("cannot embed empty text")
    acc = np.zeros(dim, dtype=np.float64)
    for token in tokenize(text):
        h = _token_hash(token, seed)
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        acc[h % dim] += sign
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        raise DegenerateVector(f"all tokens cancelled for text {text!r}")
    return (acc / norm).astype(np.float32)


class RemoteEmbedder:
    """HTTP embedding client with a bounded number of in-flight requests."""

    def __init__(self, spec: EmbedderSpec, timeout: float = 30.0):
        self.spec = spec
        self.timeout = timeout
        self._session = requests.Session()

    def _post_chunk(self, texts: list[str]) -> list[np.ndarray]:
        try:
            resp = self._session.post(
                self.spec.endpoint, json={"texts": texts}, timeout=self.timeout
            )
        except requests.RequestException as e:
            raise RemoteUnavailable(f"embedder endpoint failed: {e}") from e
        if not 200 <= resp.status_code < 300:
            raise RemoteUnavailable(
                f"embedder endpoint returned status {resp.status_code}"
            )
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError) as e:
            raise RemoteUnavailable(f"embedder reply missing vectors: {e}") from e
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise RemoteUnavailable("embedder reply has wrong vector count")
        out = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1 or arr.shape[0] != self.spec.dim:
                raise DimensionMismatch(
                    f"remote vector has {arr.shape} entries, expected {self.spec.dim}"
                )
            norm = float(np.linalg.norm(arr))
            if norm == 0.0:
                raise DegenerateVector("remote endpoint returned a zero vector")
            out.append((arr / norm).astype(np.float32))
        return out

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        chunks = [texts[i : i + _REMOTE_CHUNK] for i in range(0, len(texts), _REMOTE_CHUNK)]
        if len(chunks) == 1:
            return self._post_chunk(chunks[0])
        with ThreadPoolExecutor(max_workers=self.spec.parallelism) as pool:
            parts = list(pool.map(self._post_chunk, chunks))
        return [vec for part in parts for vec in part]


def embed_text(spec: EmbedderSpec, text: str) -> np.ndarray:
    """Embed one text to a unit-norm float32 vector of length spec.dim."""
    if spec.kind == "hashed-bag":
        return _hashed_bag(text, spec.dim, spec.seed)
    if not text:
        raise EmptyText("cannot embed empty text")
    return RemoteEmbedder(spec).embed_batch([text])[0]


def embed_batch(spec: EmbedderSpec, texts: Sequence[str]) -> list[np.ndarray]:
    """Embed texts in order; an element failure is re-raised with its index."""
    texts = list(texts)
    if not texts:
        raise EmptyInput("no texts to embed")
    if spec.kind == "hashed-bag":
        out = []
        for i, text in enumerate(texts):
            try:
                out.append(_hashed_bag(text, spec.dim, spec.seed))
            except (EmptyText, DegenerateVector) as e:
                raise type(e)(f"texts[{i}]: {e}") from e
        return out
    for i, text in enumerate(texts):
        if not text:
            raise EmptyText(f"texts[{i}]: cannot embed empty text")
    return RemoteEmbedder(spec).embed_batch(texts)


def embed_corpus(spec: EmbedderSpec, sentences: Sequence[Sentence]) -> list[Sentence]:
    """Return a copy of the corpus with missing embeddings filled in.

    Rows that already carry an embedding are kept as-is after a width check.
    """
    for s in sentences:
        if s.embedding is not None and s.embedding.shape[0] != spec.dim:
            raise DimensionMismatch(
                f"sentence {s.id!r} has a {s.embedding.shape[0]}-wide embedding, "
                f"embedder dim is {spec.dim}"
            )
    missing = [s for s in sentences if s.embedding is None]
    if not missing:
        return list(sentences)
    vectors = iter(embed_batch(spec, [s.text for s in missing]))
    return [
        Sentence(s.id, s.text, s.components, next(vectors) if s.embedding is None else s.embedding)
        for s in sentences
    ]
