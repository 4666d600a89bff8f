"""Streaming average-anchor accumulation.

A word's anchor is the mean of all its token embeddings.  Accumulators keep
64-bit sums and counts per word id, so shards can be merged in any order and
the result matches single-pass accumulation up to float addition tolerance.
"""

from __future__ import annotations

import numpy as np

from .embed_io import AnchorTable, TokenRecord, TokenStreamReader, Vocab
from .errors import DataError


class AnchorAccumulator:
    """Mergeable per-word sum/count state over a token stream."""

    def __init__(self, dim: int, n_words_hint: int = 0):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        cap = max(int(n_words_hint), 1)
        self._sums = np.zeros((cap, self.dim), dtype=np.float64)
        self._counts = np.zeros(cap, dtype=np.int64)
        self._max_id = -1

    def _ensure(self, word_id: int) -> None:
        if word_id >= len(self._counts):
            cap = max(word_id + 1, 2 * len(self._counts))
            sums = np.zeros((cap, self.dim), dtype=np.float64)
            counts = np.zeros(cap, dtype=np.int64)
            sums[: len(self._counts)] = self._sums
            counts[: len(self._counts)] = self._counts
            self._sums, self._counts = sums, counts
        if word_id > self._max_id:
            self._max_id = word_id

    def accumulate(self, record: TokenRecord | tuple) -> None:
        word_id, _, vector = record
        word_id = int(word_id)
        if word_id < 0:
            raise DataError("negative word id")
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise DataError(
                f"vector of length {vector.shape[0]} fed to dim-{self.dim} accumulator"
            )
        self._ensure(word_id)
        self._sums[word_id] += vector
        self._counts[word_id] += 1

    def accumulate_batch(self, word_ids: np.ndarray, vectors: np.ndarray) -> None:
        """Vectorized equivalent of accumulating each record in order."""
        word_ids = np.asarray(word_ids, dtype=np.int64)
        if word_ids.size == 0:
            return
        if word_ids.min() < 0:
            raise DataError("negative word id")
        vectors = np.asarray(vectors)
        if vectors.shape != (len(word_ids), self.dim):
            raise DataError("vector block shape does not match accumulator dim")
        top = int(word_ids.max())
        self._ensure(top)
        m = top + 1
        self._counts[:m] += np.bincount(word_ids, minlength=m)
        for j in range(self.dim):
            self._sums[:m, j] += np.bincount(
                word_ids, weights=vectors[:, j].astype(np.float64), minlength=m
            )

    def merge(self, other: "AnchorAccumulator") -> "AnchorAccumulator":
        """Combine two shards; commutative and associative on sums/counts."""
        if other.dim != self.dim:
            raise DataError("cannot merge accumulators of different dims")
        out = AnchorAccumulator(self.dim, max(self._max_id, other._max_id) + 1)
        a, b = self._max_id + 1, other._max_id + 1
        out._sums[:a] += self._sums[:a]
        out._sums[:b] += other._sums[:b]
        out._counts[:a] += self._counts[:a]
        out._counts[:b] += other._counts[:b]
        out._max_id = max(self._max_id, other._max_id)
        return out

    def count(self, word_id: int) -> int:
        if word_id > self._max_id:
            return 0
        return int(self._counts[word_id])

    def finalize(self, vocab: Vocab, min_count: int = 1) -> AnchorTable:
        """Mean anchors for every vocab word with at least ``min_count`` tokens.

        Rows come out in vocabulary (frequency rank) order.  Words with zero
        tokens are always dropped.
        """
        min_count = max(int(min_count), 1)
        if self._max_id >= len(vocab):
            raise DataError(
                f"word id {self._max_id} outside vocabulary of size {len(vocab)}"
            )
        keys = []
        rows = []
        counts = []
        for word_id in range(len(vocab)):
            c = self.count(word_id)
            if c >= min_count:
                keys.append(vocab.surface(word_id))
                rows.append(self._sums[word_id] / c)
                counts.append(c)
        vectors = np.asarray(rows, dtype=np.float64).reshape(len(keys), self.dim)
        return AnchorTable(self.dim, keys, vectors, np.asarray(counts, dtype=np.int64))


def new_accumulator(dim: int) -> AnchorAccumulator:
    return AnchorAccumulator(dim)


def build_anchor_table(
    stream: TokenStreamReader, vocab: Vocab, min_count: int = 1
) -> AnchorTable:
    """One-pass anchor construction over an open token stream."""
    acc = AnchorAccumulator(stream.dim, len(vocab))
    for word_ids, _context_ids, vectors in stream.iter_batches():
        acc.accumulate_batch(word_ids, vectors)
    return acc.finalize(vocab, min_count)
