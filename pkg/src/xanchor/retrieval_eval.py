"""Nearest-neighbor and CSLS retrieval over anchor tables, plus P@k evaluation.

CSLS rescales cosine by the local neighborhood densities on both sides:
``score(x, y) = 2 cos(x, y) - r_T(x) - r_S(y)`` where ``r_T(x)`` is the mean
cosine of the query to its K nearest candidates and ``r_S(y)`` the mean cosine
of the candidate to its K nearest mapped source vectors.  This penalizes hub
candidates that are close to everything.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align_supervised import LinearMap
from .embed_io import AnchorTable, parent_surface
from .errors import DataError, EvalError
from .lexicon import BilingualLexicon

RETRIEVALS = ("nn", "csls_knn_10")
DEFAULT_KNN = 10
CONTEXT_CAP = 50_000


def unit_rows(x: np.ndarray) -> np.ndarray:
    """Row-normalize; all-zero rows are left at zero (cosine 0 by convention)."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    return x / safe[:, None]


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return unit_rows(a) @ unit_rows(b).T


def _mean_topk(sim: np.ndarray, k: int) -> np.ndarray:
    """Per-row mean of the k largest similarities."""
    k = min(k, sim.shape[1])
    part = np.partition(sim, sim.shape[1] - k, axis=1)[:, sim.shape[1] - k :]
    return part.mean(axis=1)


class CslsScorer:
    """Precomputed CSLS scoring against a fixed candidate table.

    ``context`` holds the mapped source vectors used for the candidate-side
    neighborhood term; both neighborhoods are capped to their top rows by the
    caller.
    """

    def __init__(self, candidates: np.ndarray, context: np.ndarray, knn: int = DEFAULT_KNN):
        self._cand = unit_rows(candidates)
        n = self._cand.shape[0]
        if knn > n:
            warnings.warn(f"CSLS neighborhood {knn} clamped to {n} candidates", stacklevel=2)
        self.knn = min(knn, n)
        ctx = unit_rows(context)
        if knn > ctx.shape[0]:
            warnings.warn(
                f"CSLS neighborhood {knn} clamped to {ctx.shape[0]} context rows",
                stacklevel=2,
            )
        k_ctx = min(knn, ctx.shape[0])
        self.r_candidates = _mean_topk(self._cand @ ctx.T, k_ctx)

    def score_block(self, queries: np.ndarray) -> np.ndarray:
        cos = unit_rows(queries) @ self._cand.T
        r_query = _mean_topk(cos, self.knn)
        return 2.0 * cos - r_query[:, None] - self.r_candidates[None, :]


def _ranked_parents(
    scores: np.ndarray, keys: list[str], k: int
) -> list[list[tuple[str, float]]]:
    """Collapse cluster rows (best row wins) then truncate to k per query row.

    Score ties break toward the lower row index, i.e. the more frequent word.
    """
    order = np.argsort(-scores, axis=1, kind="stable")
    out = []
    for r in range(scores.shape[0]):
        seen: set[str] = set()
        ranked: list[tuple[str, float]] = []
        for idx in order[r]:
            p = parent_surface(keys[idx])
            if p in seen:
                continue
            seen.add(p)
            ranked.append((p, float(scores[r, idx])))
            if len(ranked) >= k:
                break
        out.append(ranked)
    return out


def _query_matrix(query: np.ndarray, dim: int) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape != (1, dim):
        raise DataError(f"query must have dimension {dim}")
    if not np.isfinite(q).all():
        raise DataError("non-finite query")
    if np.linalg.norm(q) == 0:
        raise DataError("zero-norm query has no direction")
    return q


def nn_retrieve(query: np.ndarray, candidates: AnchorTable, k: int) -> list[tuple[str, float]]:
    """Top-k candidates by cosine, cluster rows collapsed to their parent."""
    q = _query_matrix(query, candidates.dim)
    scores = cosine_matrix(q, candidates.vectors)
    return _ranked_parents(scores, candidates.keys, k)[0]


def csls_retrieve(
    query: np.ndarray,
    src_context: np.ndarray | AnchorTable,
    candidates: AnchorTable,
    k: int,
    knn: int = DEFAULT_KNN,
) -> list[tuple[str, float]]:
    """Top-k candidates by CSLS; ``src_context`` holds the mapped source table."""
    q = _query_matrix(query, candidates.dim)
    ctx = src_context.vectors if isinstance(src_context, AnchorTable) else src_context
    scorer = CslsScorer(candidates.vectors, ctx, knn)
    scores = scorer.score_block(q)
    return _ranked_parents(scores, candidates.keys, k)[0]


@dataclass
class GoldLexicon:
    """Word-level gold: source word -> acceptable target surfaces."""

    mapping: dict[str, set[str]] = field(default_factory=dict)

    @classmethod
    def from_lexicon(cls, lex: BilingualLexicon) -> "GoldLexicon":
        mapping: dict[str, set[str]] = {}
        for s, t in lex.pairs:
            mapping.setdefault(s, set()).add(t)
        return cls(mapping)

    def __len__(self) -> int:
        return len(self.mapping)


def load_gold(path: str | Path) -> GoldLexicon:
    from .lexicon import load_lexicon

    return GoldLexicon.from_lexicon(load_lexicon(path))


@dataclass
class EvalReport:
    retrieval: str
    precision_at: dict[int, float]
    n_queries: int
    oov_queries: int

    def to_dict(self) -> dict:
        return {
            "retrieval": self.retrieval,
            "precision_at": {str(k): v for k, v in self.precision_at.items()},
            "n_queries": self.n_queries,
            "oov_queries": self.oov_queries,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def evaluate(
    lm: LinearMap,
    src_table: AnchorTable,
    tgt_table: AnchorTable,
    gold: GoldLexicon,
    retrieval: str = "nn",
    ks: tuple[int, ...] = (1, 5, 10),
    knn: int = DEFAULT_KNN,
    context_cap: int = CONTEXT_CAP,
) -> EvalReport:
    """Precision@k over gold words with anchors; OOV words are reported, not scored.

    A multi-sense source word queries once per cluster row and counts as a hit
    if any of its queries ranks an acceptable target inside the top k.
    """
    if retrieval not in RETRIEVALS:
        raise EvalError(f"unknown retrieval {retrieval!r}")
    if not gold.mapping:
        raise EvalError("empty gold lexicon")
    src_rows: dict[str, list[int]] = {}
    for i, key in enumerate(src_table.keys):
        src_rows.setdefault(parent_surface(key), []).append(i)

    words = []
    owner: list[int] = []
    rows: list[int] = []
    oov = 0
    for w in gold.mapping:
        idxs = src_rows.get(w)
        if not idxs:
            oov += 1
            continue
        words.append(w)
        for i in idxs:
            owner.append(len(words) - 1)
            rows.append(i)
    if not words:
        raise EvalError("no gold source word has an anchor")

    mapped = lm.apply(src_table.vectors[rows])
    scorer = None
    if retrieval == "csls_knn_10":
        context = lm.apply(src_table.head(context_cap).vectors)
        scorer = CslsScorer(tgt_table.head(context_cap).vectors, context, knn)

    kmax = max(ks)
    hits = {k: np.zeros(len(words), dtype=bool) for k in ks}
    block = 512
    for start in range(0, len(rows), block):
        q = mapped[start : start + block]
        if scorer is None:
            scores = cosine_matrix(q, tgt_table.vectors)
        else:
            scores = scorer.score_block(q)
        ranked = _ranked_parents(scores, tgt_table.keys, kmax)
        for r, per_query in enumerate(ranked):
            w_idx = owner[start + r]
            acceptable = gold.mapping[words[w_idx]]
            for k in ks:
                if hits[k][w_idx]:
                    continue
                if any(t in acceptable for t, _ in per_query[:k]):
                    hits[k][w_idx] = True

    n = len(words)
    precision = {k: 100.0 * float(hits[k].sum()) / n for k in ks}
    return EvalReport(retrieval, precision, n, oov)
