"""Readers and writers for token streams, vocabularies, and anchor tables.

Binary token streams (``.tkeb``) hold one fixed-width record per token
occurrence: ``word_id`` (u32 LE), ``context_id`` (u32 LE), then ``dim``
float32 LE components.  The header is ``TKEB`` magic, format version (u32),
dimensionality (u32) and record count (u64), all little-endian.

Anchor tables travel in the usual text format: a ``"<n> <d>"`` header line
followed by ``n`` rows of ``surface v1 .. vd``.  Floats are serialized with
shortest round-trip decimals, so write/read is value-exact.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DataError, FormatError, TruncationError

MAGIC = b"TKEB"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
HEADER_SIZE = _HEADER.size

_DEFAULT_BATCH = 65536


class TokenRecord(NamedTuple):
    word_id: int
    context_id: int
    vector: np.ndarray


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("word_id", "<u4"), ("context_id", "<u4"), ("vector", "<f4", (dim,))])


class TokenStreamReader:
    """Streaming reader over a binary token file.

    Iterating yields :class:`TokenRecord` in file order with O(1) memory per
    record; :meth:`iter_batches` exposes the same data as numpy arrays for
    bulk consumers.  Payload floats are validated to be finite.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "rb")
        head = self._fh.read(HEADER_SIZE)
        if len(head) < HEADER_SIZE:
            self._fh.close()
            raise FormatError(f"{self.path}: file too short for stream header")
        magic, version, dim, n_records = _HEADER.unpack(head)
        if magic != MAGIC:
            self._fh.close()
            raise FormatError(f"{self.path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            self._fh.close()
            raise FormatError(f"{self.path}: unsupported version {version}")
        if dim == 0:
            self._fh.close()
            raise FormatError(f"{self.path}: dimensionality must be positive")
        self.dim = int(dim)
        self.n_records = int(n_records)
        self._dtype = _record_dtype(self.dim)
        self._stride = self._dtype.itemsize
        self._check_size()

    def _check_size(self) -> None:
        end = self._fh.seek(0, 2)
        expected = HEADER_SIZE + self.n_records * self._stride
        if end < expected:
            complete = (end - HEADER_SIZE) // self._stride
            self._fh.close()
            raise TruncationError(complete + 1, self.n_records, end)
        if end > expected:
            self._fh.close()
            raise FormatError(
                f"{self.path}: {end - expected} trailing bytes after "
                f"{self.n_records} declared records"
            )
        self._fh.seek(HEADER_SIZE)

    def iter_batches(
        self, batch_size: int = _DEFAULT_BATCH
    ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Yield ``(word_ids, context_ids, vectors)`` array chunks in file order."""
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        done = 0
        while done < self.n_records:
            want = min(batch_size, self.n_records - done)
            raw = self._fh.read(want * self._stride)
            if len(raw) < want * self._stride:
                complete = done + len(raw) // self._stride
                raise TruncationError(
                    complete + 1, self.n_records, HEADER_SIZE + done * self._stride + len(raw)
                )
            block = np.frombuffer(raw, dtype=self._dtype)
            vectors = block["vector"]
            if not np.isfinite(vectors).all():
                bad = int(np.argwhere(~np.isfinite(vectors).all(axis=1))[0, 0])
                raise DataError(f"{self.path}: non-finite component in record {done + bad}")
            yield block["word_id"], block["context_id"], vectors
            done += want

    def __iter__(self) -> Iterator[TokenRecord]:
        for word_ids, context_ids, vectors in self.iter_batches():
            for i in range(len(word_ids)):
                yield TokenRecord(int(word_ids[i]), int(context_ids[i]), vectors[i])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TokenStreamReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_token_stream(path: str | Path) -> TokenStreamReader:
    """Open a binary token stream for reading."""
    return TokenStreamReader(path)


def _validate_ids(values: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.size and (arr.min() < 0 or arr.max() >= 2**32):
        raise DataError(f"{what} out of u32 range")
    return arr.astype("<u4")


def write_token_arrays(
    path: str | Path,
    word_ids: np.ndarray,
    context_ids: np.ndarray,
    vectors: np.ndarray,
) -> int:
    """Write a whole token stream from parallel arrays. Returns the record count."""
    vectors = np.asarray(vectors)
    if vectors.ndim != 2:
        raise DataError("vectors must be a 2-d array")
    n, dim = vectors.shape
    if len(word_ids) != n or len(context_ids) != n:
        raise DataError("word_ids, context_ids and vectors must have equal length")
    if dim == 0:
        raise DataError("dimensionality must be positive")
    if not np.isfinite(vectors).all():
        bad = int(np.argwhere(~np.isfinite(vectors).all(axis=1))[0, 0])
        raise DataError(f"non-finite component in record {bad}")
    block = np.empty(n, dtype=_record_dtype(dim))
    block["word_id"] = _validate_ids(word_ids, "word_id")
    block["context_id"] = _validate_ids(context_ids, "context_id")
    block["vector"] = vectors.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, n))
        fh.write(block.tobytes())
    return n


def write_token_stream(
    path: str | Path, records: Iterable[TokenRecord | tuple], dim: int
) -> int:
    """Write records one by one; the count field is patched once the input ends."""
    if dim <= 0:
        raise DataError("dimensionality must be positive")
    dtype = _record_dtype(dim)
    one = np.empty(1, dtype=dtype)
    n = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, 0))
        for rec in records:
            word_id, context_id, vector = rec
            vector = np.asarray(vector, dtype=np.float64)
            if vector.shape != (dim,):
                raise DataError(f"record {n}: vector shape {vector.shape} != ({dim},)")
            if not np.isfinite(vector).all():
                raise DataError(f"record {n}: non-finite component")
            if not (0 <= int(word_id) < 2**32 and 0 <= int(context_id) < 2**32):
                raise DataError(f"record {n}: id out of u32 range")
            one["word_id"][0] = word_id
            one["context_id"][0] = context_id
            one["vector"][0] = vector.astype("<f4")
            fh.write(one.tobytes())
            n += 1
        fh.seek(0)
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, n))
    return n


@dataclass
class Vocab:
    """Rank-ordered vocabulary: row ``i`` is the ``i``-th most frequent word."""

    surfaces: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {}
        for i, s in enumerate(self.surfaces):
            if not s:
                raise DataError(f"vocab row {i}: empty surface")
            if "#" in s:
                raise DataError(f"vocab row {i}: '#' is reserved for cluster keys ({s!r})")
            if s in self.index:
                raise DataError(f"vocab row {i}: duplicate surface {s!r}")
            self.index[s] = i

    def __len__(self) -> int:
        return len(self.surfaces)

    def __contains__(self, surface: str) -> bool:
        return surface in self.index

    def surface(self, word_id: int) -> str:
        return self.surfaces[word_id]

    def rank(self, surface: str) -> int:
        return self.index[surface]


def load_vocab(path: str | Path) -> Vocab:
    """Read a ``word_id<TAB>surface`` sidecar; ids must be dense and in order."""
    surfaces = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno + 1}: expected 2 tab-separated fields")
            ident, surface = parts
            try:
                word_id = int(ident)
            except ValueError:
                raise FormatError(f"{path}:{lineno + 1}: bad word id {ident!r}") from None
            if word_id != len(surfaces):
                raise FormatError(
                    f"{path}:{lineno + 1}: word ids must be dense 0..n-1 in file order"
                )
            surfaces.append(surface)
    return Vocab(surfaces)


def save_vocab(vocab: Vocab, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, s in enumerate(vocab.surfaces):
            fh.write(f"{i}\t{s}\n")


def parent_surface(key: str) -> str:
    """Strip a trailing ``#<idx>`` cluster suffix; plain keys map to themselves."""
    base, sep, suffix = key.rpartition("#")
    if sep and base and suffix.isdigit():
        return base
    return key


class AnchorTable:
    """Ordered word -> (vector, count) table.

    Row order is meaningful: tables derived from a vocabulary keep its
    frequency-descending rank order, and cluster rows occupy their parent
    word's position.  All vectors are float64.
    """

    def __init__(
        self,
        dim: int,
        keys: Sequence[str],
        vectors: np.ndarray,
        counts: np.ndarray | None = None,
    ):
        vectors = np.asarray(vectors, dtype=np.float64).reshape(len(keys), dim)
        if counts is None:
            counts = np.ones(len(keys), dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (len(keys),):
            raise DataError("counts length does not match keys")
        if not np.isfinite(vectors).all():
            raise DataError("non-finite anchor component")
        self.dim = int(dim)
        self.keys: list[str] = list(keys)
        self.vectors = vectors
        self.counts = counts
        self.key_index: dict[str, int] = {}
        for i, k in enumerate(self.keys):
            if k in self.key_index:
                raise DataError(f"duplicate anchor key {k!r}")
            self.key_index[k] = i

    @classmethod
    def empty(cls, dim: int) -> "AnchorTable":
        return cls(dim, [], np.zeros((0, dim)), np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: str) -> bool:
        return key in self.key_index

    def row(self, key: str) -> tuple[np.ndarray, int]:
        i = self.key_index[key]
        return self.vectors[i], int(self.counts[i])

    def head(self, k: int) -> "AnchorTable":
        """First ``k`` rows (the most frequent ones under rank order)."""
        k = min(k, len(self.keys))
        return AnchorTable(self.dim, self.keys[:k], self.vectors[:k], self.counts[:k])

    def select(self, indices: Sequence[int]) -> "AnchorTable":
        idx = np.asarray(indices, dtype=np.int64)
        return AnchorTable(
            self.dim, [self.keys[i] for i in idx], self.vectors[idx], self.counts[idx]
        )

    def parents(self) -> set[str]:
        return {parent_surface(k) for k in self.keys}

    def splice(
        self,
        key: str,
        new_keys: Sequence[str],
        new_vectors: np.ndarray,
        new_counts: Sequence[int],
    ) -> "AnchorTable":
        """Replace one row by a run of rows at the same position."""
        if key not in self.key_index:
            raise KeyError(key)
        i = self.key_index[key]
        keys = self.keys[:i] + list(new_keys) + self.keys[i + 1 :]
        vectors = np.vstack([self.vectors[:i], new_vectors, self.vectors[i + 1 :]])
        counts = np.concatenate(
            [self.counts[:i], np.asarray(new_counts, dtype=np.int64), self.counts[i + 1 :]]
        )
        return AnchorTable(self.dim, keys, vectors, counts)


def read_embedding_text(path: str | Path) -> AnchorTable:
    """Read a ``"<n> <d>"`` headed text table; counts default to 1."""
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise FormatError(f"{path}:1: header must be '<n> <d>'")
        try:
            n, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(f"{path}:1: header must be '<n> <d>'") from None
        if n < 0 or dim <= 0:
            raise FormatError(f"{path}:1: bad table shape {n} x {dim}")
        keys: list[str] = []
        vectors = np.empty((n, dim), dtype=np.float64)
        for i in range(n):
            line = fh.readline()
            if not line:
                raise FormatError(f"{path}: expected {n} rows, found {i}")
            fields = line.split()
            if len(fields) != dim + 1:
                raise FormatError(
                    f"{path}:{i + 2}: expected {dim + 1} fields, found {len(fields)}"
                )
            keys.append(fields[0])
            try:
                vectors[i] = [float(x) for x in fields[1:]]
            except ValueError:
                raise FormatError(f"{path}:{i + 2}: unparseable float") from None
        if fh.readline().strip():
            raise FormatError(f"{path}: trailing content after {n} rows")
    if not np.isfinite(vectors).all():
        raise DataError(f"{path}: non-finite embedding component")
    try:
        return AnchorTable(dim, keys, vectors)
    except DataError as e:
        raise DataError(f"{path}: {e}") from None


def write_embedding_text(table: AnchorTable, path: str | Path) -> None:
    """Write a table with shortest round-trip decimals; re-reading is value-exact."""
    for k in table.keys:
        if any(c.isspace() for c in k):
            raise DataError(f"surface {k!r} contains whitespace, not encodable")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for i, k in enumerate(table.keys):
            row = " ".join(repr(float(v)) for v in table.vectors[i])
            fh.write(f"{k} {row}\n")


def export_projector(
    labeled: Iterable[tuple[str, np.ndarray]], out_dir: str | Path
) -> tuple[Path, Path]:
    """Write Embedding Projector TSVs: ``vectors.tsv`` + ``metadata.tsv``.

    Row ``i`` of both files describes the same point.  Tabs and newlines
    inside labels would break the TSV, so they are replaced by spaces with a
    warning.  Mixed vector dimensions raise :class:`DataError`.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vec_path = out / "vectors.tsv"
    meta_path = out / "metadata.tsv"
    dim = None
    dirty = 0
    with open(vec_path, "w", encoding="utf-8", newline="\n") as vfh, open(
        meta_path, "w", encoding="utf-8", newline="\n"
    ) as mfh:
        mfh.write("label\n")
        for label, vector in labeled:
            vector = np.asarray(vector, dtype=np.float64)
            if dim is None:
                dim = vector.shape[0]
            elif vector.shape != (dim,):
                raise DataError(
                    f"projector vector for {label!r} has dim {vector.shape}, expected ({dim},)"
                )
            fixed = label.replace("\t", " ").replace("\n", " ").replace("\r", " ")
            if fixed != label:
                dirty += 1
            vfh.write("\t".join(repr(float(v)) for v in vector) + "\n")
            mfh.write(fixed + "\n")
    if dirty:
        warnings.warn(f"replaced tabs/newlines in {dirty} projector labels", stacklevel=2)
    return vec_path, meta_path
