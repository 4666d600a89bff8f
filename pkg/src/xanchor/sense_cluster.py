"""Per-word sense discovery by spectral clustering of token embeddings.

Token vectors of one word are mean-centered (the shared word direction
dominates raw cosines), turned into a shifted-cosine affinity with row-wise
top-fraction sparsification, and clustered on the bottom eigenvectors of the
normalized Laplacian.  The cluster count comes from the largest eigengap.

Everything is deterministic given (tokens, params, seed) and invariant to the
order tokens arrive in: records are canonicalized by context id before any
sampling, so context ids must be unique within a word.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embed_io import AnchorTable, TokenRecord
from .errors import DataError, FormatError, IneligibleError

_DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class ClusterParams:
    min_tokens: int = 160
    max_sample: int = 10_000
    k_max: int = 10
    eigen_cap: int = 2_000
    keep_fraction: float = 0.4
    kmeans_restarts: int = 20
    kmeans_iters: int = 100


@dataclass
class ClusterModel:
    """Clustering result for one word.

    ``assignments`` pairs each clustered token's context id with its cluster
    index; indices are ordered by cluster size (majority sense first).
    """

    word: str
    k: int
    anchors: np.ndarray
    counts: np.ndarray
    assignments: list[tuple[int, int]]
    sampled: bool
    sample_size: int


def word_seed(base_seed: int, word: str) -> np.random.Generator:
    """Stable per-word generator so shard order cannot leak into results."""
    digest = hashlib.sha256(word.encode("utf-8")).digest()
    return np.random.default_rng([base_seed, int.from_bytes(digest[:8], "little")])


def sample_tokens(
    tokens: Sequence[TokenRecord | tuple], max_sample: int, seed: int
) -> list:
    """Uniform sample without replacement once over ``max_sample`` tokens.

    Inputs at or under the cap are returned unchanged.  Larger inputs are
    canonicalized by context id first, so the same seed picks the same sample
    regardless of arrival order.
    """
    tokens = list(tokens)
    if len(tokens) <= max_sample:
        return tokens
    canon = sorted(tokens, key=lambda r: r[1])
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(canon), size=max_sample, replace=False))
    return [canon[i] for i in idx]


def affinity_matrix(vectors: np.ndarray, keep_fraction: float = 0.4) -> np.ndarray:
    """Shifted-cosine affinity, row-sparsified and max-symmetrized.

    Each row keeps its ``ceil(keep_fraction * n)`` largest entries (the unit
    diagonal always survives) and zeroes the rest; ``max(A, A^T)`` restores
    symmetry.
    """
    x = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    u = x / safe[:, None]
    a = (1.0 + u @ u.T) / 2.0
    np.clip(a, 0.0, 1.0, out=a)
    np.fill_diagonal(a, 1.0)
    n = a.shape[0]
    keep = max(1, int(np.ceil(keep_fraction * n)))
    if keep < n:
        cut = np.partition(a, n - keep, axis=1)[:, n - keep]
        a = np.where(a >= cut[:, None], a, 0.0)
    return np.maximum(a, a.T)


def normalized_laplacian(affinity: np.ndarray) -> np.ndarray:
    d = affinity.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.where(d == 0, 1.0, d))
    lap = -affinity * inv_sqrt[:, None] * inv_sqrt[None, :]
    np.fill_diagonal(lap, np.diag(lap) + 1.0)
    return (lap + lap.T) / 2.0


def choose_k_eigengap(eigenvalues: np.ndarray, k_max: int) -> int:
    """Index of the largest gap among the smallest eigenvalues; ties go low."""
    vals = np.asarray(eigenvalues, dtype=np.float64)
    m = min(k_max, len(vals) - 1)
    if m < 1:
        return 1
    gaps = vals[1 : m + 1] - vals[:m]
    return int(np.argmax(gaps)) + 1


def _kmeans_once(x: np.ndarray, k: int, rng: np.random.Generator, iters: int):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total == 0:
            centers[c] = x[int(rng.integers(n))]
        else:
            centers[c] = x[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, np.sum((x - centers[c]) ** 2, axis=1))
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(dist, axis=1)
        for c in range(k):
            mask = new_labels == c
            if mask.any():
                centers[c] = x[mask].mean(axis=0)
            else:
                far = int(np.argmax(dist[np.arange(n), new_labels]))
                centers[c] = x[far]
                new_labels[far] = c
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    inertia = float(dist[np.arange(n), labels].sum())
    return labels, inertia


def _kmeans(x: np.ndarray, k: int, rng: np.random.Generator, restarts: int, iters: int):
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        labels, inertia = _kmeans_once(x, k, rng, iters)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels, best_inertia


def cluster_word(
    word: str,
    tokens: Sequence[TokenRecord | tuple],
    params: ClusterParams = ClusterParams(),
    seed: int = 0,
) -> ClusterModel:
    """Cluster one word's tokens into sense groups.

    Raises ``IneligibleError`` below the token floor.  Above the eigen cap, a
    uniform subset drives the eigendecomposition and the remaining tokens are
    assigned to the nearest cluster centroid in the original space.
    """
    if "#" in word:
        raise DataError(f"word {word!r} contains reserved '#'")
    tokens = list(tokens)
    if len(tokens) < params.min_tokens:
        raise IneligibleError(
            f"{word!r} has {len(tokens)} tokens, needs {params.min_tokens}"
        )
    canon = sorted(tokens, key=lambda r: r[1])
    sampled = len(canon) > params.max_sample
    rng = word_seed(seed, word)
    if sampled:
        idx = np.sort(rng.choice(len(canon), size=params.max_sample, replace=False))
        canon = [canon[i] for i in idx]
    m = len(canon)
    vectors = np.asarray([np.asarray(r[2], dtype=np.float64) for r in canon])
    context_ids = np.asarray([int(r[1]) for r in canon], dtype=np.int64)
    if len(np.unique(context_ids)) != m:
        raise DataError(f"{word!r}: duplicate context ids break order canonicalization")

    mu = vectors.mean(axis=0)
    dev = vectors - mu
    scale = float(np.abs(vectors).max()) or 1.0
    if float(np.abs(dev).max()) <= _DEGENERATE_EPS * scale:
        labels = np.zeros(m, dtype=np.int64)
        k = 1
    else:
        if m > params.eigen_cap:
            eig_idx = np.sort(rng.choice(m, size=params.eigen_cap, replace=False))
        else:
            eig_idx = np.arange(m)
        aff = affinity_matrix(dev[eig_idx], params.keep_fraction)
        lap = normalized_laplacian(aff)
        vals, vecs = np.linalg.eigh(lap)
        k = choose_k_eigengap(vals, min(params.k_max, len(eig_idx) - 1))
        if k == 1:
            labels = np.zeros(m, dtype=np.int64)
        else:
            emb = vecs[:, :k]
            norms = np.linalg.norm(emb, axis=1)
            emb = emb / np.where(norms == 0, 1.0, norms)[:, None]
            eig_labels, _ = _kmeans(
                emb, k, rng, params.kmeans_restarts, params.kmeans_iters
            )
            labels = np.empty(m, dtype=np.int64)
            labels[eig_idx] = eig_labels
            if len(eig_idx) < m:
                centroids = np.stack(
                    [vectors[eig_idx][eig_labels == c].mean(axis=0) for c in range(k)]
                )
                rest = np.setdiff1d(np.arange(m), eig_idx, assume_unique=True)
                d2 = ((vectors[rest, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
                labels[rest] = np.argmin(d2, axis=1)

    present, sizes = np.unique(labels, return_counts=True)
    order = sorted(
        range(len(present)),
        key=lambda i: (-sizes[i], int(context_ids[labels == present[i]].min())),
    )
    relabel = {int(present[o]): new for new, o in enumerate(order)}
    labels = np.asarray([relabel[int(l)] for l in labels], dtype=np.int64)
    k = len(present)

    anchors = np.stack([vectors[labels == c].mean(axis=0) for c in range(k)])
    counts = np.asarray([(labels == c).sum() for c in range(k)], dtype=np.int64)
    assignments = [(int(context_ids[i]), int(labels[i])) for i in range(m)]
    return ClusterModel(word, k, anchors, counts, assignments, sampled, m)


def replace_with_cluster_anchors(
    table: AnchorTable, models: Iterable[ClusterModel]
) -> AnchorTable:
    """Swap each multi-cluster word's row for its ``word#j`` cluster rows.

    Cluster rows take over the parent's table position, so they inherit its
    frequency rank.  Single-cluster models leave the table unchanged; a model
    for a word without a row raises ``KeyError``.
    """
    out = table
    for model in models:
        if model.word not in out.key_index:
            raise KeyError(model.word)
        if model.k == 1:
            continue
        keys = [f"{model.word}#{j}" for j in range(model.k)]
        out = out.splice(model.word, keys, model.anchors, model.counts)
    return out


def save_models(models: Sequence[ClusterModel], path: str | Path) -> None:
    payload = {
        "version": 1,
        "models": [
            {
                "word": m.word,
                "k": m.k,
                "sampled": m.sampled,
                "sample_size": m.sample_size,
                "counts": [int(c) for c in m.counts],
                "anchors": [[float(v) for v in row] for row in m.anchors],
                "assignments": [[int(c), int(j)] for c, j in m.assignments],
            }
            for m in models
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_models(path: str | Path) -> list[ClusterModel]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict) or payload.get("version") != 1:
        raise FormatError(f"{path}: unsupported cluster model file")
    models = []
    for m in payload["models"]:
        models.append(
            ClusterModel(
                word=m["word"],
                k=int(m["k"]),
                anchors=np.asarray(m["anchors"], dtype=np.float64),
                counts=np.asarray(m["counts"], dtype=np.int64),
                assignments=[(int(c), int(j)) for c, j in m["assignments"]],
                sampled=bool(m["sampled"]),
                sample_size=int(m["sample_size"]),
            )
        )
    return models
