"""Adversarial alignment of two anchor spaces without a dictionary.

A two-hidden-layer discriminator learns to tell mapped source anchors from
target anchors; the linear map is trained to fool it and is pulled back toward
the orthogonal manifold after every batch.  Model selection and the
convergence verdict use an unsupervised criterion: the mean CSLS similarity of
the most frequent mapped source anchors to their CSLS-nearest targets,
compared against the same quantity for a random rotation of the same data.

Everything runs single-threaded numpy with one seeded generator, so reports
and learned maps are reproducible bit for bit.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .align_supervised import LinearMap, TrainingPairs, fit_procrustes, random_orthogonal
from .embed_io import AnchorTable
from .errors import RefinementError, TrainingDivergedError
from .retrieval_eval import CslsScorer

_LEAK = 0.2


@dataclass(frozen=True)
class AdvConfig:
    seed: int = 0
    epochs: int = 5
    batches_per_epoch: int = 500
    batch_size: int = 64
    disc_hidden: int = 256
    disc_input_dropout: float = 0.1
    label_smoothing: float = 0.2
    lr_disc: float = 0.1
    lr_map: float = 0.05
    lr_decay: float = 0.95
    ortho_beta: float = 0.01
    top_k_vocab: int = 50_000
    convergence_margin: float = 0.5
    criterion_words: int = 10_000
    criterion_knn: int = 10


@dataclass
class EpochStats:
    epoch: int
    disc_loss: float
    disc_accuracy: float
    criterion: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_criterion: float = float("-inf")
    baseline_criterion: float = 0.0
    convergence_threshold: float = 0.0
    converged: bool = False
    orthogonality_defect: float = 0.0

    def to_dict(self) -> dict:
        return {
            "epochs": [
                {
                    "epoch": e.epoch,
                    "disc_loss": e.disc_loss,
                    "disc_accuracy": e.disc_accuracy,
                    "criterion": e.criterion,
                }
                for e in self.epochs
            ],
            "best_epoch": self.best_epoch,
            "best_criterion": self.best_criterion,
            "baseline_criterion": self.baseline_criterion,
            "convergence_threshold": self.convergence_threshold,
            "converged": self.converged,
            "orthogonality_defect": self.orthogonality_defect,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def orthogonalize_step(w: np.ndarray, beta: float = 0.01) -> np.ndarray:
    """One pull toward the orthogonal manifold: ``(1+b) W - b (W W^T) W``.

    Orthogonal matrices are fixed points; for nearby matrices the defect
    contracts by roughly ``1 - 2 beta`` per application.
    """
    return (1.0 + beta) * w - beta * (w @ w.T) @ w


def unsupervised_criterion(
    w: np.ndarray | LinearMap,
    src_vectors: np.ndarray,
    tgt_vectors: np.ndarray,
    knn: int = 10,
    n_words: int = 10_000,
    context_cap: int = 50_000,
) -> float:
    """Mean best CSLS score of the first ``n_words`` mapped source rows."""
    matrix = w.matrix if isinstance(w, LinearMap) else np.asarray(w, dtype=np.float64)
    mapped_ctx = np.asarray(src_vectors[:context_cap], dtype=np.float64) @ matrix.T
    scorer = CslsScorer(np.asarray(tgt_vectors[:context_cap], dtype=np.float64), mapped_ctx, knn)
    n = min(n_words, len(mapped_ctx))
    total = 0.0
    for start in range(0, n, 2048):
        block = scorer.score_block(mapped_ctx[start : start + min(2048, n - start)])
        total += float(block.max(axis=1).sum())
    return total / n


class _Discriminator:
    """Two-hidden-layer leaky-ReLU MLP with a sigmoid head, trained by SGD."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        def xavier(n_out, n_in):
            a = np.sqrt(6.0 / (n_in + n_out))
            return rng.uniform(-a, a, size=(n_out, n_in))

        self.w1 = xavier(hidden, dim)
        self.b1 = np.zeros(hidden)
        self.w2 = xavier(hidden, hidden)
        self.b2 = np.zeros(hidden)
        self.w3 = xavier(1, hidden)[0]
        self.b3 = 0.0

    def forward(self, x: np.ndarray, mask: np.ndarray):
        xd = x * mask
        a1 = xd @ self.w1.T + self.b1
        z1 = np.where(a1 > 0, a1, _LEAK * a1)
        a2 = z1 @ self.w2.T + self.b2
        z2 = np.where(a2 > 0, a2, _LEAK * a2)
        logit = z2 @ self.w3 + self.b3
        prob = 1.0 / (1.0 + np.exp(-logit))
        return prob, (xd, mask, a1, z1, a2, z2)

    def backward(self, cache, dlogit: np.ndarray, need_dx: bool):
        xd, mask, a1, z1, a2, z2 = cache
        dz2 = dlogit[:, None] * self.w3[None, :]
        da2 = dz2 * np.where(a2 > 0, 1.0, _LEAK)
        dz1 = da2 @ self.w2
        da1 = dz1 * np.where(a1 > 0, 1.0, _LEAK)
        grads = {
            "w3": z2.T @ dlogit,
            "b3": float(dlogit.sum()),
            "w2": da2.T @ z1,
            "b2": da2.sum(axis=0),
            "w1": da1.T @ xd,
            "b1": da1.sum(axis=0),
        }
        dx = (da1 @ self.w1) * mask if need_dx else None
        return grads, dx

    def sgd(self, grads: dict, lr: float) -> None:
        self.w1 -= lr * grads["w1"]
        self.b1 -= lr * grads["b1"]
        self.w2 -= lr * grads["w2"]
        self.b2 -= lr * grads["b2"]
        self.w3 -= lr * grads["w3"]
        self.b3 -= lr * grads["b3"]


def _bce(prob: np.ndarray, y: np.ndarray):
    eps = 1e-12
    loss = -float(np.mean(y * np.log(prob + eps) + (1 - y) * np.log(1 - prob + eps)))
    dlogit = (prob - y) / len(y)
    return loss, dlogit


def _frequent_rows(table: AnchorTable, k: int) -> np.ndarray:
    """The ``k`` highest-count rows as float64 vectors, ties kept in table order.

    Tables whose rows were replaced by cluster anchors keep each cluster row at
    its parent's position, so position alone no longer reflects frequency;
    ranking by the per-row counts restores the most-frequent-rows semantics.
    """
    order = np.argsort(-table.counts, kind="stable")[:k]
    order.sort()
    return np.asarray(table.vectors[order], dtype=np.float64)


def train_adversarial(
    src: AnchorTable, tgt: AnchorTable, cfg: AdvConfig = AdvConfig()
) -> tuple[LinearMap, TrainReport]:
    """Adversarially learn a source-to-target map; returns it with its report.

    The map from the best epoch by criterion is returned.  ``converged`` holds
    iff that criterion beats the random-rotation baseline by the configured
    margin; callers decide what to do with a non-converged map.
    """
    if src.dim != tgt.dim:
        raise TrainingDivergedError(-1, "source and target dims differ")
    d = src.dim
    if len(src) < cfg.top_k_vocab or len(tgt) < cfg.top_k_vocab:
        warnings.warn(
            f"tables smaller than top_k_vocab={cfg.top_k_vocab}, using all rows",
            stacklevel=2,
        )
    s = _frequent_rows(src, cfg.top_k_vocab)
    t = _frequent_rows(tgt, cfg.top_k_vocab)

    rng = np.random.default_rng([cfg.seed, 0xAD])
    baseline_rng = np.random.default_rng([cfg.seed, 0xBA5E])
    baseline = unsupervised_criterion(
        random_orthogonal(d, baseline_rng), s, t, cfg.criterion_knn, cfg.criterion_words
    )
    threshold = baseline + cfg.convergence_margin * abs(baseline)

    disc = _Discriminator(d, cfg.disc_hidden, rng)
    w = np.eye(d)
    bs = cfg.batch_size
    smooth = cfg.label_smoothing
    p_drop = cfg.disc_input_dropout
    y_disc = np.concatenate([np.full(bs, 1.0 - smooth), np.full(bs, smooth)])
    y_gen = np.concatenate([np.full(bs, smooth), np.full(bs, 1.0 - smooth)])
    hard = np.concatenate([np.ones(bs), np.zeros(bs)])

    report = TrainReport(baseline_criterion=baseline, convergence_threshold=threshold)
    best_w = w.copy()
    for epoch in range(cfg.epochs):
        lr_d = cfg.lr_disc * cfg.lr_decay**epoch
        lr_m = cfg.lr_map * cfg.lr_decay**epoch
        loss_sum = 0.0
        acc_sum = 0.0
        for _ in range(cfg.batches_per_epoch):
            si = rng.integers(0, len(s), bs)
            ti = rng.integers(0, len(t), bs)
            x = np.concatenate([s[si] @ w.T, t[ti]])
            mask = (rng.random(x.shape) >= p_drop) / (1.0 - p_drop)
            prob, cache = disc.forward(x, mask)
            loss, dlogit = _bce(prob, y_disc)
            grads, _ = disc.backward(cache, dlogit, need_dx=False)
            disc.sgd(grads, lr_d)
            loss_sum += loss
            acc_sum += float(np.mean((prob >= 0.5) == (hard == 1.0)))

            si = rng.integers(0, len(s), bs)
            ti = rng.integers(0, len(t), bs)
            sb = s[si]
            x = np.concatenate([sb @ w.T, t[ti]])
            mask = (rng.random(x.shape) >= p_drop) / (1.0 - p_drop)
            prob, cache = disc.forward(x, mask)
            _, dlogit = _bce(prob, y_gen)
            _, dx = disc.backward(cache, dlogit, need_dx=True)
            w -= lr_m * (dx[:bs].T @ sb)
            w = orthogonalize_step(w, cfg.ortho_beta)
            if not np.isfinite(w).all():
                raise TrainingDivergedError(epoch, "non-finite map")

        criterion = unsupervised_criterion(
            w, s, t, cfg.criterion_knn, cfg.criterion_words
        )
        if not np.isfinite(criterion):
            raise TrainingDivergedError(epoch, "non-finite criterion")
        report.epochs.append(
            EpochStats(
                epoch,
                loss_sum / cfg.batches_per_epoch,
                acc_sum / cfg.batches_per_epoch,
                criterion,
            )
        )
        if criterion > report.best_criterion:
            report.best_criterion = criterion
            report.best_epoch = epoch
            best_w = w.copy()

    report.converged = bool(report.best_criterion >= threshold)
    lm = LinearMap(d, best_w, orthogonal=False)
    report.orthogonality_defect = lm.orthogonality_defect()
    if report.orthogonality_defect > 0.01 * d:
        warnings.warn(
            f"map drifted off the orthogonal manifold (defect {report.orthogonality_defect:.3g})",
            stacklevel=2,
        )
    return lm, report


def _mutual_csls_pairs(
    mapped: np.ndarray, tgt: np.ndarray, knn: int
) -> list[tuple[int, int]]:
    scorer = CslsScorer(tgt, mapped, knn)
    # The reverse-direction CSLS score matrix is the transpose of the forward
    # one (the two r-terms swap roles), so mutual nearest neighbors come from
    # row and column argmaxes of a single matrix.
    n = len(mapped)
    fwd = np.empty(n, dtype=np.int64)
    col_best = np.full(tgt.shape[0], -np.inf)
    col_arg = np.zeros(tgt.shape[0], dtype=np.int64)
    for start in range(0, n, 2048):
        block = scorer.score_block(mapped[start : start + 2048])
        fwd[start : start + block.shape[0]] = np.argmax(block, axis=1)
        bmax = block.max(axis=0)
        barg = np.argmax(block, axis=0) + start
        better = bmax > col_best
        col_best[better] = bmax[better]
        col_arg[better] = barg[better]
    return [(i, int(fwd[i])) for i in range(n) if col_arg[fwd[i]] == i]


def refine_procrustes(
    lm: LinearMap,
    src: AnchorTable,
    tgt: AnchorTable,
    rounds: int,
    n_top: int = 10_000,
    knn: int = 10,
) -> LinearMap:
    """Iterate (induce mutual-CSLS lexicon, refit Procrustes) from a rough map.

    The candidate maximizing the unsupervised criterion wins, the input map
    included, so refinement never makes the returned map worse by that
    measure.  Raises ``RefinementError`` if no mutual pairs exist.
    """
    s = _frequent_rows(src, n_top)
    t = _frequent_rows(tgt, n_top)
    s_full = src.vectors
    t_full = tgt.vectors

    def crit(m: LinearMap) -> float:
        return unsupervised_criterion(m, s_full, t_full, knn, n_top)

    best = lm
    best_score = crit(lm)
    current = lm
    for _ in range(max(rounds, 0)):
        mapped = s @ current.matrix.T
        pairs = _mutual_csls_pairs(mapped, t, knn)
        if not pairs:
            raise RefinementError("no mutual CSLS nearest neighbors")
        xi = np.asarray([i for i, _ in pairs])
        yi = np.asarray([j for _, j in pairs])
        x = s[xi]
        y = t[yi]
        xn = np.linalg.norm(x, axis=1)
        yn = np.linalg.norm(y, axis=1)
        ok = (xn > 0) & (yn > 0)
        tp = TrainingPairs(
            x[ok] / xn[ok, None],
            y[ok] / yn[ok, None],
            [(str(i), str(j)) for i, j in zip(xi[ok], yi[ok])],
        )
        current = fit_procrustes(tp)
        score = crit(current)
        if score > best_score:
            best, best_score = current, score
    return best
