"""Synthetic cross-lingual benchmark with planted senses and a planted rotation.

Word centers are drawn on the unit sphere, then scaled per axis and shifted by
a common offset.  The shaping matters: a perfectly isotropic center cloud is
invariant under every rotation, so no distribution-level method could prefer
the planted map over any other.  Multi-sense words get one center per sense
(a regular simplex of side ``sense_separation * sigma``); the target language
has one word per sense, tokens mapped through the planted rotation with fresh
identities.  ``sigma`` is the r.m.s. radius of a sense's token cloud and is
fixed so the closest pair of word centers sits 8 sigma apart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .align_supervised import LinearMap, random_orthogonal, write_map
from .anchors import AnchorAccumulator
from .embed_io import Vocab, save_vocab, write_token_arrays
from .errors import SpecError
from .lexicon import BilingualLexicon, MultiSenseList, save_lexicon
from .retrieval_eval import GoldLexicon


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    dim: int = 32
    n_words: int = 5000
    n_multisense: int = 250
    senses_per_word: tuple[int, int] = (2, 3)
    tokens_per_sense: tuple[int, int] = (200, 400)
    sense_separation: float = 8.0
    sense_skew: float = 0.25
    noise_std: float = 0.05
    anisotropy: float = 4.0
    center_shift: float = 1.0
    sense_axis_mix: float = 0.5
    target_center_jitter: float = 0.0

    def validate(self) -> None:
        if self.dim < 2:
            raise SpecError("dim must be at least 2")
        if self.n_words < 2:
            raise SpecError("need at least 2 words")
        if not 0 <= self.n_multisense <= self.n_words:
            raise SpecError("n_multisense must lie in [0, n_words]")
        lo, hi = self.senses_per_word
        if not 2 <= lo <= hi:
            raise SpecError("senses_per_word range must satisfy 2 <= lo <= hi")
        if hi - 1 > self.dim:
            raise SpecError(
                f"cannot place {hi} equidistant sense centers in dimension {self.dim}"
            )
        tlo, thi = self.tokens_per_sense
        if not 1 <= tlo <= thi:
            raise SpecError("tokens_per_sense range must satisfy 1 <= lo <= hi")
        if not 0 < self.sense_skew <= 1:
            raise SpecError("sense_skew must lie in (0, 1]")
        if self.sense_separation <= 0:
            raise SpecError("sense_separation must be positive")
        if self.noise_std < 0 or self.target_center_jitter < 0:
            raise SpecError("noise levels must be non-negative")
        if self.anisotropy < 1:
            raise SpecError("anisotropy must be >= 1")


class TokenArrays(NamedTuple):
    word_ids: np.ndarray
    context_ids: np.ndarray
    vectors: np.ndarray


@dataclass
class SenseInfo:
    centers: np.ndarray
    counts: np.ndarray
    targets: list[str]
    src_context_ranges: list[tuple[int, int]]


@dataclass
class SynthBundle:
    spec: SynthSpec
    sigma: float
    src_tokens: TokenArrays
    src_vocab: Vocab
    tgt_tokens: TokenArrays
    tgt_vocab: Vocab
    planted_map: LinearMap
    gold_word: GoldLexicon
    gold_sense: dict[tuple[str, int], str]
    multisense: MultiSenseList
    sense_info: dict[str, SenseInfo] = field(default_factory=dict)


def _simplex(k: int, edge: float) -> np.ndarray:
    """k equidistant points in R^(k-1), centered, pairwise distance ``edge``."""
    if k == 1:
        return np.zeros((1, 0))
    m = np.eye(k) - np.full((k, k), 1.0 / k)
    u, s, _ = np.linalg.svd(m)
    coords = u[:, : k - 1] * s[: k - 1]
    return coords * (edge / np.sqrt(2.0))


def _min_pairwise_distance(x: np.ndarray, block: int = 512) -> float:
    n = len(x)
    sq = np.sum(x * x, axis=1)
    best = np.inf
    for start in range(0, n, block):
        xb = x[start : start + block]
        d2 = sq[start : start + block, None] + sq[None, :] - 2.0 * (xb @ x.T)
        for i in range(len(xb)):
            d2[i, start + i] = np.inf
        best = min(best, float(d2.min()))
    return float(np.sqrt(max(best, 0.0)))


def _orient_frame(rng: np.random.Generator, dim: int, width: int, shared: np.ndarray, mix: float) -> np.ndarray:
    """Orthonormal (dim, width) frame whose first axis can lean on a shared direction."""
    g = rng.standard_normal((dim, width))
    if width >= 1 and mix > 0:
        lead = mix * shared + (1.0 - mix) * (g[:, 0] / np.linalg.norm(g[:, 0]))
        g[:, 0] = lead / np.linalg.norm(lead)
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def generate(spec: SynthSpec) -> SynthBundle:
    """Build a full bundle (streams, vocabs, gold, planted map) from a spec.

    Deterministic per seed: one generator drives every draw in a fixed order.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    d = spec.dim

    scales = np.geomspace(1.0, 1.0 / spec.anisotropy, d)
    scales *= np.sqrt(d / np.sum(scales**2))
    shift_dir = rng.standard_normal(d)
    shift = spec.center_shift * shift_dir / np.linalg.norm(shift_dir)
    shared_axis = rng.standard_normal(d)
    shared_axis /= np.linalg.norm(shared_axis)

    g = rng.standard_normal((spec.n_words, d))
    g /= np.linalg.norm(g, axis=1)[:, None]
    word_centers = shift[None, :] + g * scales[None, :]

    sigma = _min_pairwise_distance(word_centers) / 8.0
    comp = sigma / np.sqrt(d)

    ms_idx = set(int(i) for i in rng.choice(spec.n_words, spec.n_multisense, replace=False))
    bases = rng.integers(
        spec.tokens_per_sense[0], spec.tokens_per_sense[1] + 1, size=spec.n_words
    )
    edge = spec.sense_separation * sigma

    rotation = random_orthogonal(d, rng)

    word_senses: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(spec.n_words):
        if i in ms_idx:
            k = int(rng.integers(spec.senses_per_word[0], spec.senses_per_word[1] + 1))
            frame = _orient_frame(rng, d, k - 1, shared_axis, spec.sense_axis_mix)
            centers = word_centers[i][None, :] + _simplex(k, edge) @ frame.T
            counts = np.concatenate(
                [[bases[i]], np.maximum(1, np.rint(bases[i] * spec.sense_skew)).astype(np.int64) * np.ones(k - 1, dtype=np.int64)]
            )
        else:
            centers = word_centers[i][None, :]
            counts = np.asarray([bases[i]], dtype=np.int64)
        word_senses.append((centers, counts.astype(np.int64)))

    totals = np.asarray([c.sum() for _, c in word_senses])
    rank_order = np.argsort(-totals, kind="stable")

    src_surfaces = [f"s{i:05d}" for i in range(spec.n_words)]
    tgt_names: dict[tuple[int, int], str] = {}
    tgt_rows: list[tuple[int, int]] = []
    for i in range(spec.n_words):
        centers, counts = word_senses[i]
        for j in range(len(counts)):
            name = f"t{i:05d}" if len(counts) == 1 else f"t{i:05d}.{j}"
            tgt_names[(i, j)] = name
            tgt_rows.append((i, j))
    tgt_totals = np.asarray([word_senses[i][1][j] for i, j in tgt_rows])
    tgt_order = np.argsort(-tgt_totals, kind="stable")

    src_vocab = Vocab([src_surfaces[i] for i in rank_order])
    tgt_vocab = Vocab([tgt_names[tgt_rows[o]] for o in tgt_order])
    tgt_rank = {tgt_rows[o]: r for r, o in enumerate(tgt_order)}

    n_src_tokens = int(totals.sum())
    src_word_ids = np.empty(n_src_tokens, dtype=np.int64)
    src_context_ids = np.arange(n_src_tokens, dtype=np.int64)
    src_vectors = np.empty((n_src_tokens, d), dtype=np.float32)
    sense_slices: dict[tuple[int, int], tuple[int, int]] = {}

    cursor = 0
    sense_info: dict[str, SenseInfo] = {}
    for rank, i in enumerate(rank_order):
        centers, counts = word_senses[i]
        ranges = []
        for j, c in enumerate(counts):
            c = int(c)
            block = centers[j][None, :] + comp * rng.standard_normal((c, d))
            src_vectors[cursor : cursor + c] = block.astype(np.float32)
            src_word_ids[cursor : cursor + c] = rank
            sense_slices[(int(i), j)] = (cursor, cursor + c)
            ranges.append((cursor, cursor + c))
            cursor += c
        if len(counts) > 1:
            sense_info[src_surfaces[i]] = SenseInfo(
                centers=centers.copy(),
                counts=counts.copy(),
                targets=[tgt_names[(int(i), j)] for j in range(len(counts))],
                src_context_ranges=ranges,
            )

    jitter = {}
    noise_comp = spec.noise_std * sigma / np.sqrt(d)
    jitter_comp = spec.target_center_jitter * sigma / np.sqrt(d)
    tgt_word_ids = np.empty(n_src_tokens, dtype=np.int64)
    tgt_vectors = np.empty((n_src_tokens, d), dtype=np.float32)
    tgt_cursor = 0
    for o in tgt_order:
        i, j = tgt_rows[o]
        lo, hi = sense_slices[(i, j)]
        block = src_vectors[lo:hi].astype(np.float64) @ rotation.T
        if jitter_comp > 0:
            delta = jitter_comp * rng.standard_normal(d)
            jitter[(i, j)] = delta
            block += delta[None, :]
        if noise_comp > 0:
            block += noise_comp * rng.standard_normal(block.shape)
        c = hi - lo
        tgt_vectors[tgt_cursor : tgt_cursor + c] = block.astype(np.float32)
        tgt_word_ids[tgt_cursor : tgt_cursor + c] = tgt_rank[(i, j)]
        tgt_cursor += c
    tgt_context_ids = np.arange(n_src_tokens, dtype=np.int64)

    gold_map: dict[str, set[str]] = {}
    gold_sense: dict[tuple[str, int], str] = {}
    for rank, i in enumerate(rank_order):
        w = src_surfaces[i]
        _, counts = word_senses[i]
        gold_map[w] = {tgt_names[(int(i), j)] for j in range(len(counts))}
        for j in range(len(counts)):
            gold_sense[(w, j)] = tgt_names[(int(i), j)]

    multisense = MultiSenseList(
        frozenset(src_surfaces[i] for i in sorted(ms_idx)), "source"
    )
    return SynthBundle(
        spec=spec,
        sigma=float(sigma),
        src_tokens=TokenArrays(src_word_ids, src_context_ids, src_vectors),
        src_vocab=src_vocab,
        tgt_tokens=TokenArrays(tgt_word_ids, tgt_context_ids, tgt_vectors),
        tgt_vocab=tgt_vocab,
        planted_map=LinearMap(d, rotation, orthogonal=True),
        gold_word=GoldLexicon(gold_map),
        gold_sense=gold_sense,
        multisense=multisense,
        sense_info=sense_info,
    )


def degrade_lexicon(bundle: SynthBundle, policy: str = "majority_only") -> BilingualLexicon:
    """Word-level training dictionary with deliberate sense loss.

    ``majority_only`` emits exactly one pair per source word: its majority
    sense translation.  Minority senses of multi-sense words are unrepresented,
    which is the supervision defect the dictionary filters are meant to detect.
    """
    if policy != "majority_only":
        raise SpecError(f"unknown degradation policy {policy!r}")
    pairs = []
    for w in bundle.src_vocab.surfaces:
        pairs.append((w, bundle.gold_sense[(w, 0)]))
    return BilingualLexicon(tuple(pairs), f"degraded:{policy}")


def anchor_table(tokens: TokenArrays, vocab: Vocab, dim: int, min_count: int = 1):
    """Plain average anchors straight from in-memory token arrays."""
    acc = AnchorAccumulator(dim, len(vocab))
    acc.accumulate_batch(tokens.word_ids, tokens.vectors)
    return acc.finalize(vocab, min_count)


def gold_pairs(gold: GoldLexicon) -> BilingualLexicon:
    pairs = []
    for w, targets in gold.mapping.items():
        for t in sorted(targets):
            pairs.append((w, t))
    return BilingualLexicon(tuple(pairs), "gold")


def write_bundle(bundle: SynthBundle, out_dir: str | Path) -> dict[str, str]:
    """Materialize a bundle as files; returns a name -> path map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "src_tokens": out / "src.tkeb",
        "src_vocab": out / "src.vocab.tsv",
        "tgt_tokens": out / "tgt.tkeb",
        "tgt_vocab": out / "tgt.vocab.tsv",
        "gold_word": out / "gold.word.txt",
        "gold_sense": out / "gold.sense.tsv",
        "multisense": out / "multisense.txt",
        "planted_map": out / "planted.map",
        "meta": out / "bundle.json",
    }
    write_token_arrays(
        paths["src_tokens"],
        bundle.src_tokens.word_ids,
        bundle.src_tokens.context_ids,
        bundle.src_tokens.vectors,
    )
    save_vocab(bundle.src_vocab, paths["src_vocab"])
    write_token_arrays(
        paths["tgt_tokens"],
        bundle.tgt_tokens.word_ids,
        bundle.tgt_tokens.context_ids,
        bundle.tgt_tokens.vectors,
    )
    save_vocab(bundle.tgt_vocab, paths["tgt_vocab"])
    save_lexicon(gold_pairs(bundle.gold_word), paths["gold_word"])
    with open(paths["gold_sense"], "w", encoding="utf-8", newline="\n") as fh:
        for (w, j), t in bundle.gold_sense.items():
            fh.write(f"{w}\t{j}\t{t}\n")
    with open(paths["multisense"], "w", encoding="utf-8", newline="\n") as fh:
        for w in sorted(bundle.multisense.words):
            fh.write(w + "\n")
    write_map(bundle.planted_map, paths["planted_map"])
    meta = {
        "sigma": bundle.sigma,
        "spec": {
            "seed": bundle.spec.seed,
            "dim": bundle.spec.dim,
            "n_words": bundle.spec.n_words,
            "n_multisense": bundle.spec.n_multisense,
            "senses_per_word": list(bundle.spec.senses_per_word),
            "tokens_per_sense": list(bundle.spec.tokens_per_sense),
            "sense_separation": bundle.spec.sense_separation,
            "sense_skew": bundle.spec.sense_skew,
            "noise_std": bundle.spec.noise_std,
            "anisotropy": bundle.spec.anisotropy,
            "center_shift": bundle.spec.center_shift,
            "sense_axis_mix": bundle.spec.sense_axis_mix,
            "target_center_jitter": bundle.spec.target_center_jitter,
        },
    }
    with open(paths["meta"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return {k: str(v) for k, v in paths.items()}
