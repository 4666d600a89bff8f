"""Supervised linear mapping between anchor spaces.

Two estimators over dictionary-supervised pairs: plain least squares, and
orthogonal Procrustes from the SVD of the cross-covariance.  Both solve for
``W`` minimizing ``||X W^T - Y||_F`` over their matrix class, with rows of
``X``/``Y`` holding source/target anchors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embed_io import AnchorTable, parent_surface
from .errors import AmbiguityError, DataError, FormatError
from .lexicon import BilingualLexicon

ORTHO_TOL = 1e-6


@dataclass
class LinearMap:
    """A d x d real map applied as ``x -> W x``.

    ``orthogonal`` certifies ``||W^T W - I||_F <= 1e-6 * d``; constructing a
    map with a false certificate raises.
    """

    dim: int
    matrix: np.ndarray
    orthogonal: bool = False
    residual: float | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.shape != (self.dim, self.dim):
            raise DataError(f"map matrix must be {self.dim} x {self.dim}")
        if not np.isfinite(self.matrix).all():
            raise DataError("non-finite map entry")
        if self.orthogonal and self.orthogonality_defect() > ORTHO_TOL * self.dim:
            raise DataError("map claims orthogonality but W^T W deviates from I")

    def orthogonality_defect(self) -> float:
        g = self.matrix.T @ self.matrix
        return float(np.linalg.norm(g - np.eye(self.dim), "fro"))

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """Map row vectors: returns ``vectors @ W^T``."""
        return np.asarray(vectors, dtype=np.float64) @ self.matrix.T


@dataclass
class TrainingPairs:
    source: np.ndarray
    target: np.ndarray
    keys: list[tuple[str, str]]

    def __len__(self) -> int:
        return len(self.keys)


def _expansion(table: AnchorTable) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for i, k in enumerate(table.keys):
        out.setdefault(parent_surface(k), []).append(i)
    return out


def build_pairs(
    lex: BilingualLexicon,
    src_table: AnchorTable,
    tgt_table: AnchorTable,
    normalize: bool,
) -> TrainingPairs:
    """Resolve dictionary pairs to anchor rows.

    A side covered only by cluster rows contributes one training row per
    cluster, so a multi-sense source with k clusters and a plain target yields
    k rows (and both sides clustered yield the cross product).  With
    ``normalize`` the rows are unit-normalized; zero vectors are rejected.
    """
    src_rows = _expansion(src_table)
    tgt_rows = _expansion(tgt_table)
    xs, ys, keys = [], [], []
    for s, t in lex.pairs:
        if s not in src_rows or t not in tgt_rows:
            raise DataError(f"pair ({s!r}, {t!r}) not resolvable against the anchor tables")
        for i in src_rows[s]:
            for j in tgt_rows[t]:
                xs.append(src_table.vectors[i])
                ys.append(tgt_table.vectors[j])
                keys.append((src_table.keys[i], tgt_table.keys[j]))
    if not keys:
        raise DataError("no training pairs")
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if normalize:
        for arr, side in ((x, 0), (y, 1)):
            norms = np.linalg.norm(arr, axis=1)
            if (norms == 0).any():
                bad = keys[int(np.argwhere(norms == 0)[0, 0])][side]
                raise DataError(f"cannot normalize zero anchor for {bad!r}")
            arr /= norms[:, None]
    return TrainingPairs(x, y, keys)


def fit_least_squares(pairs: TrainingPairs) -> LinearMap:
    """Unconstrained least squares; minimum-norm solution on rank deficiency."""
    d = pairs.source.shape[1]
    bt, _, rank, _ = np.linalg.lstsq(pairs.source, pairs.target, rcond=None)
    if rank < d:
        warnings.warn(
            f"source matrix rank {rank} < {d}, using minimum-norm solution", stacklevel=2
        )
    w = bt.T
    residual = float(np.linalg.norm(pairs.source @ bt - pairs.target, "fro"))
    return LinearMap(d, w, orthogonal=False, residual=residual)


def fit_procrustes(pairs: TrainingPairs) -> LinearMap:
    """Orthogonal Procrustes solution ``W = U V^T`` from ``svd(Y^T X)``.

    SVD signs are fixed by flipping each column of U so its largest-magnitude
    entry is positive (rows of V^T flip along).  An all-zero cross-covariance
    has no preferred rotation and raises ``AmbiguityError``.
    """
    d = pairs.source.shape[1]
    m = pairs.target.T @ pairs.source
    if not m.any():
        raise AmbiguityError("cross-covariance is zero, rotation undetermined")
    u, _, vt = np.linalg.svd(m)
    for j in range(d):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            u[:, j] = -u[:, j]
            vt[j, :] = -vt[j, :]
    w = u @ vt
    residual = float(np.linalg.norm(pairs.source @ w.T - pairs.target, "fro"))
    lm = LinearMap(d, w, orthogonal=True, residual=residual)
    return lm


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random rotation via QR with sign correction."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def write_map(lm: LinearMap, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{lm.dim}\n")
        for row in lm.matrix:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        fh.write(f"orthogonal: {'true' if lm.orthogonal else 'false'}\n")


def read_map(path: str | Path) -> LinearMap:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty map file")
    try:
        d = int(lines[0].strip())
    except ValueError:
        raise FormatError(f"{path}:1: expected dimensionality") from None
    if d <= 0 or len(lines) != d + 2:
        raise FormatError(f"{path}: expected {d} matrix rows plus trailer")
    rows = []
    for i in range(1, d + 1):
        fields = lines[i].split()
        if len(fields) != d:
            raise FormatError(f"{path}:{i + 1}: expected {d} floats")
        try:
            rows.append([float(x) for x in fields])
        except ValueError:
            raise FormatError(f"{path}:{i + 1}: unparseable float") from None
    trailer = lines[d + 1].strip()
    if trailer == "orthogonal: true":
        orthogonal = True
    elif trailer == "orthogonal: false":
        orthogonal = False
    else:
        raise FormatError(f"{path}: bad trailer {trailer!r}")
    return LinearMap(d, np.asarray(rows), orthogonal=orthogonal)
