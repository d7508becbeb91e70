"""Byte-level corpus ingestion and deterministic batching.

Tokens are raw byte values 0..255 plus a BOS separator (id 256) prepended to
every document, so the vocabulary is 257 entries and detokenization is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .config import ConfigError

BOS_ID = 256
VOCAB_SIZE = 257

_CACHE_MAGIC = b"LMTOK001"


def tokenize_bytes(data: bytes) -> np.ndarray:
    """One document -> uint16 token ids, BOS prepended."""
    toks = np.empty(len(data) + 1, dtype=np.uint16)
    toks[0] = BOS_ID
    toks[1:] = np.frombuffer(data, dtype=np.uint8)
    return toks

def detokenize_bytes(tokens: np.ndarray) -> bytes:
    """Inverse of tokenize_bytes; BOS markers are dropped."""
    toks = np.asarray(tokens)
    return bytes(toks[toks != BOS_ID].astype(np.uint8))


@dataclass
class Corpus:
    tokens: np.ndarray                      # uint16, concatenated documents
    doc_offsets: np.ndarray                 # start index of each document
    manifest: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if np.any(self.tokens >= VOCAB_SIZE):
            raise ValueError("corpus contains out-of-vocabulary tokens")
        if len(self.doc_offsets) > 1 and np.any(np.diff(self.doc_offsets) <= 0):
            raise ValueError("document offsets must be strictly increasing")

    def __len__(self) -> int:
        return int(self.tokens.size)


def corpus_from_documents(docs: list[bytes], names: list[str] | None = None) -> Corpus:
    parts = [tokenize_bytes(d) for d in docs]
    offsets = np.cumsum([0] + [p.size for p in parts[:-1]]) if parts else np.zeros(0)
    manifest = [{"path": (names[i] if names else f"doc{i}"), "bytes": len(docs[i])}
                for i in range(len(docs))]
    tokens = np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint16)
    return Corpus(tokens=tokens, doc_offsets=np.asarray(offsets, dtype=np.int64),
                  manifest=manifest)


def load_corpus(paths: list[str | Path]) -> Corpus:
    """Read documents from plain text/binary files; `.tok` files are loaded
    through the token cache format instead of being re-tokenized."""
    parts: list[np.ndarray] = []
    manifest = []
    for p in paths:
        p = Path(p)
        if p.suffix == ".tok":
            toks = load_token_cache(p)
        else:
            toks = tokenize_bytes(p.read_bytes())
        parts.append(toks)
        manifest.append({"path": str(p), "bytes": int((toks != BOS_ID).sum())})
    tokens = np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint16)
    offsets = np.flatnonzero(tokens == BOS_ID).astype(np.int64)
    if offsets.size == 0:
        offsets = np.zeros(1 if tokens.size else 0, dtype=np.int64)
    return Corpus(tokens=tokens, doc_offsets=offsets, manifest=manifest)


def save_token_cache(path: str | Path, tokens: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(np.ascontiguousarray(tokens, dtype="<u2").tobytes())


def load_token_cache(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[: len(_CACHE_MAGIC)] != _CACHE_MAGIC:
        raise ValueError(f"{path}: not a token cache (bad magic)")
    return np.frombuffer(raw, dtype="<u2", offset=len(_CACHE_MAGIC)).copy()


@dataclass
class TokenBatch:
    inputs: np.ndarray    # (B, T) int64
    targets: np.ndarray   # (B, T) int64, stream successor of each input


def batches_per_epoch(n_tokens: int, batch_size: int, seq_len: int) -> int:
    return (n_tokens - 1) // (batch_size * seq_len)


def batch_at(corpus: Corpus, batch_size: int, seq_len: int, seed: int, index: int) -> TokenBatch:
    """Batch `index` of the deterministic stream: contiguous disjoint windows,
    reshuffled every epoch with an integer-seeded permutation."""
    span = batch_size * seq_len
    bpe = batches_per_epoch(len(corpus), batch_size, seq_len)
    if bpe < 1:
        raise ConfigError("train.batch_size",
                          f"corpus has {len(corpus)} tokens; need at least {span + 1}")
    epoch, slot = divmod(index, bpe)
    perm = np.random.default_rng([seed, epoch]).permutation(bpe)
    start = int(perm[slot]) * span
    window = corpus.tokens[start: start + span + 1].astype(np.int64)
    return TokenBatch(inputs=window[:-1].reshape(batch_size, seq_len),
                      targets=window[1:].reshape(batch_size, seq_len))


def batch_iter(corpus: Corpus, batch_size: int, seq_len: int, seed: int) -> Iterator[TokenBatch]:
    """Endless deterministic batch stream (epochs reshuffle)."""
    index = 0
    while True:
        yield batch_at(corpus, batch_size, seq_len, seed, index)
        index += 1


def split_corpus(corpus: Corpus, val_fraction: float) -> tuple[Corpus, Corpus]:
    """Token-level split; the tail becomes validation."""
    if not 0 <= val_fraction < 1:
        raise ConfigError("val_fraction", "must lie in [0, 1)")
    cut = len(corpus) - int(round(len(corpus) * val_fraction))
    def sub(lo: int, hi: int) -> Corpus:
        offs = corpus.doc_offsets[(corpus.doc_offsets >= lo) & (corpus.doc_offsets < hi)] - lo
        if offs.size == 0 or offs[0] != 0:
            offs = np.concatenate([[0], offs])
        return Corpus(tokens=corpus.tokens[lo:hi], doc_offsets=offs.astype(np.int64),
                      manifest=corpus.manifest)
    return sub(0, cut), sub(cut, len(corpus))
