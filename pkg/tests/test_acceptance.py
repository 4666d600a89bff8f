"""Acceptance gate: ten end-to-end checks with pinned targets and budgets.

Each test measures real behavior, registers one summary line through the
``criterion`` fixture (printed in the terminal summary), and asserts both the
quality target and the runtime budget.  Thresholds are frozen deliberately;
loosening one is a contract change, not a test fix.

Criterion 7 dominates the runtime (ten adversarial training pairs at full
budget); everything else completes in seconds.
"""

from __future__ import annotations

import json
import time
import warnings
from collections import defaultdict

import numpy as np
from sklearn.metrics import adjusted_rand_score

from oracles import csls_table, ranked_keys
from test_cli import manifest_for, manifest_modulo_time, run, sha
from xanchor.cli import rerun_from_manifest
from test_lexicon import BANK_LEMMAS, BANK_PAIRS, planted_dictionary
from test_retrieval_eval import hub_instance
from test_sense_cluster import planted_blobs, predicted_labels

from xanchor.align_supervised import (
    TrainingPairs,
    build_pairs,
    fit_procrustes,
    random_orthogonal,
)
from xanchor.align_unsupervised import AdvConfig, train_adversarial
from xanchor.embed_io import (
    AnchorTable,
    read_embedding_text,
    read_token_stream,
    write_embedding_text,
    write_token_stream,
)
from xanchor.lexicon import (
    BilingualLexicon,
    MultiSenseList,
    filter_form,
    filter_lemma,
    restrict_valid_pairs,
)
from xanchor.retrieval_eval import GoldLexicon, csls_retrieve, evaluate, nn_retrieve
from xanchor.sense_cluster import ClusterParams, cluster_word, replace_with_cluster_anchors
from xanchor.synthbench import SynthSpec, anchor_table, degrade_lexicon, generate


def test_criterion_1_filtering_semantics_exact(criterion):
    criterion(1, "dictionary filtering exactness")
    t0 = time.perf_counter()
    lex = BilingualLexicon(tuple(BANK_PAIRS), "fixture")
    listed = MultiSenseList(frozenset({"bank"}), "source")
    form = filter_form(lex, listed)
    lemma = filter_lemma(lex, listed, BANK_LEMMAS)
    big, big_listed, big_lemmas = planted_dictionary()
    big_form = filter_form(big, big_listed)
    big_lemma = filter_lemma(big, big_listed, big_lemmas)
    elapsed = time.perf_counter() - t0
    criterion(
        1,
        f"6-pair fixture: form removed {len(lex) - len(form)} (want 2), "
        f"lemma removed {len(lex) - len(lemma)} (want 6); 9496-pair fixture: "
        f"form {len(big) - len(big_form)} (want 335), "
        f"lemma {len(big) - len(big_lemma)} (want 420); "
        f"{elapsed:.3f}s (budget 1s)",
    )
    assert len(lex) - len(form) == 2
    assert form.pairs == tuple(p for p in BANK_PAIRS if p[0] != "bank")
    assert len(lex) - len(lemma) == 6
    assert len(big) == 9_496
    assert len(big) - len(big_form) == 335
    assert len(big) - len(big_lemma) == 420
    assert elapsed < 1.0


def test_criterion_2_procrustes_recovery(criterion):
    criterion(2, "planted rotation recovery")
    t0 = time.perf_counter()
    d, n = 32, 500
    rng = np.random.default_rng(0)
    planted = random_orthogonal(d, rng)
    x = rng.standard_normal((n, d))
    src_keys = [f"w{i:03d}" for i in range(n)]
    tgt_keys = [f"t{i:03d}" for i in range(n)]

    clean = fit_procrustes(TrainingPairs(x, x @ planted.T, list(zip(src_keys, tgt_keys))))
    err = float(np.linalg.norm(clean.matrix - planted))

    noisy_y = x @ planted.T + 0.01 * rng.standard_normal((n, d))
    noisy = fit_procrustes(TrainingPairs(x, noisy_y, list(zip(src_keys, tgt_keys))))
    src = AnchorTable(d, src_keys, x)
    tgt = AnchorTable(d, tgt_keys, noisy_y)
    gold = GoldLexicon({s: {t} for s, t in zip(src_keys, tgt_keys)})
    p1 = evaluate(noisy, src, tgt, gold, "nn").precision_at[1]
    elapsed = time.perf_counter() - t0
    criterion(
        2,
        f"noiseless |W-R|_F {err:.2e} (bound 1e-6); noise 0.01 nn P@1 {p1:.1f} "
        f"(need >= 99); {elapsed:.2f}s (budget 10s)",
    )
    assert err <= 1e-6
    assert p1 >= 99.0
    assert elapsed < 10.0


def test_criterion_3_csls_matches_brute_force(criterion):
    criterion(3, "csls rankings against exhaustive score tables")
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(50):
        n = int(rng.integers(2, 11))
        d = int(rng.integers(2, 9))
        m = int(rng.integers(2, 11))
        cands = rng.normal(size=(n, d))
        ctx = rng.normal(size=(m, d))
        table = AnchorTable(d, [f"c{i}" for i in range(n)], cands)
        q = rng.normal(size=d)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            got = [s for s, _ in csls_retrieve(q, ctx, table, n, knn=10)]
        assert got == ranked_keys(csls_table([q], cands, ctx, 10), table.keys, n)[0]
        checked += 1
    elapsed = time.perf_counter() - t0
    criterion(
        3,
        f"{checked}/50 random instances ranked identically to the oracle; "
        f"{elapsed:.2f}s (budget 5s)",
    )
    assert checked == 50
    assert elapsed < 5.0


def test_criterion_4_hub_share_drops_under_csls(criterion):
    criterion(4, "hub top-1 share, csls vs nn")
    t0 = time.perf_counter()
    wins = 0
    for seed in range(100):
        queries, table = hub_instance(seed)
        nn_top = sum(nn_retrieve(q, table, 1)[0][0] == "hub" for q in queries)
        cs_top = sum(csls_retrieve(q, queries, table, 1)[0][0] == "hub" for q in queries)
        if cs_top < nn_top:
            wins += 1
    elapsed = time.perf_counter() - t0
    criterion(
        4,
        f"csls hub share strictly below nn in {wins}/100 seeds (need >= 95); "
        f"{elapsed:.1f}s (budget 30s)",
    )
    assert wins >= 95
    assert elapsed < 30.0


def test_criterion_5_planted_sense_recovery(criterion):
    criterion(5, "spectral clustering on planted blobs")
    t0 = time.perf_counter()
    params = ClusterParams()
    ok = 0
    for seed in range(100):
        k = 2 + seed % 3
        tokens, labels, _ = planted_blobs(seed, k)
        model = cluster_word(f"w{seed}", tokens, params, seed)
        if model.k == k:
            ari = adjusted_rand_score(labels, predicted_labels(model, len(labels)))
            if ari >= 0.95:
                ok += 1
    elapsed = time.perf_counter() - t0
    criterion(
        5,
        f"correct k and ARI >= 0.95 in {ok}/100 seeds (need >= 95), k in 2..4, "
        f"separation 8, 200 points/cluster, d=16; {elapsed:.1f}s (budget 120s)",
    )
    assert ok >= 95
    assert elapsed < 120.0


def test_criterion_6_anchor_bias_and_cluster_anchors(criterion):
    criterion(6, "mean-anchor bias and cluster-anchor accuracy")
    t0 = time.perf_counter()
    spec = SynthSpec(
        seed=0,
        dim=32,
        n_words=200,
        n_multisense=40,
        senses_per_word=(2, 2),
        tokens_per_sense=(200, 400),
        sense_skew=0.25,
    )
    b = generate(spec)
    src = anchor_table(b.src_tokens, b.src_vocab, spec.dim)
    params = ClusterParams()
    closer = 0
    worst_err = 0.0
    for w in sorted(b.sense_info):
        info = b.sense_info[w]
        mean_anchor = src.vectors[src.keys.index(w)]
        d_major = np.linalg.norm(mean_anchor - info.centers[0])
        d_minor = np.linalg.norm(mean_anchor - info.centers[1])
        if d_major < d_minor:
            closer += 1
        tokens = []
        for lo, hi in info.src_context_ranges:
            for pos in range(lo, hi):
                tokens.append(
                    (
                        int(b.src_tokens.word_ids[pos]),
                        int(b.src_tokens.context_ids[pos]),
                        b.src_tokens.vectors[pos].astype(np.float64),
                    )
                )
        model = cluster_word(w, tokens, params, 0)
        for row in model.anchors:
            err = min(float(np.linalg.norm(row - c)) for c in info.centers)
            worst_err = max(worst_err, err)
    elapsed = time.perf_counter() - t0
    criterion(
        6,
        f"anchor closer to majority center for {closer}/{len(b.sense_info)} words "
        f"(need all); worst cluster-anchor error {worst_err / b.sigma:.2f} sigma "
        f"(bound 0.5); {elapsed:.1f}s (budget 30s)",
    )
    assert closer == len(b.sense_info) == 40
    assert worst_err <= 0.5 * b.sigma
    assert elapsed < 30.0


def _replace_source_table(bundle, src):
    """Swap each multi-sense word's anchor for its sense-cluster anchors."""
    buckets = defaultdict(list)
    wanted = {bundle.src_vocab.rank(w) for w in bundle.multisense.words}
    ids = bundle.src_tokens.word_ids
    cids = bundle.src_tokens.context_ids
    vecs = bundle.src_tokens.vectors
    for i in np.nonzero(np.isin(ids, list(wanted)))[0]:
        buckets[int(ids[i])].append((int(ids[i]), int(cids[i]), vecs[i]))
    models = [
        cluster_word(w, buckets[bundle.src_vocab.rank(w)], ClusterParams(), 0)
        for w in sorted(bundle.multisense.words)
    ]
    return replace_with_cluster_anchors(src, models)


def test_criterion_7_unsupervised_end_to_end(criterion):
    criterion(7, "adversarial alignment, baseline vs cluster-anchor replacement")
    t0 = time.perf_counter()
    train_kw = dict(
        epochs=20,
        batches_per_epoch=2000,
        batch_size=32,
        disc_hidden=128,
        lr_disc=0.3,
        lr_map=0.3,
        top_k_vocab=500,
    )
    baseline_p, replace_p = [], []
    for seed in range(10):
        spec = SynthSpec(seed=seed)
        b = generate(spec)
        src = anchor_table(b.src_tokens, b.src_vocab, spec.dim)
        tgt = anchor_table(b.tgt_tokens, b.tgt_vocab, spec.dim)
        src_replaced = _replace_source_table(b, src)
        for table, acc in ((src, baseline_p), (src_replaced, replace_p)):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                lm, _ = train_adversarial(table, tgt, AdvConfig(seed=seed, **train_kw))
                report = evaluate(lm, table, tgt, b.gold_word, "csls_knn_10")
            acc.append(report.precision_at[1])
    gap = float(np.mean(replace_p) - np.mean(baseline_p))
    elapsed = time.perf_counter() - t0
    criterion(
        7,
        f"csls P@1 10-seed means: baseline {np.mean(baseline_p):.1f}, "
        f"replace {np.mean(replace_p):.1f}, gap {gap:.1f} (need >= 5); "
        f"{elapsed / 60:.1f} min (budget 15 min)",
    )
    assert gap >= 5.0
    assert elapsed < 900.0


def _sense_eval_inputs(bundle):
    """Per-sense mean queries keyed ``word.sense<j>`` with exact sense gold."""
    keys, rows, gold = [], [], {}
    for w in sorted(bundle.sense_info):
        info = bundle.sense_info[w]
        for j, (lo, hi) in enumerate(info.src_context_ranges):
            key = f"{w}.sense{j}"
            keys.append(key)
            rows.append(bundle.src_tokens.vectors[lo:hi].astype(np.float64).mean(axis=0))
            gold[key] = {info.targets[j]}
    return AnchorTable(bundle.spec.dim, keys, np.asarray(rows)), GoldLexicon(gold)


def test_criterion_8_supervised_filtering_direction(criterion):
    criterion(8, "degraded vs form-filtered supervision")
    t0 = time.perf_counter()
    overall = {"degraded": [], "filtered": []}
    sense = {"degraded": [], "filtered": []}
    for seed in range(10):
        spec = SynthSpec(
            seed=seed,
            dim=16,
            n_words=300,
            n_multisense=240,
            senses_per_word=(2, 2),
            tokens_per_sense=(60, 120),
            sense_skew=1.0,
            sense_axis_mix=1.0,
            target_center_jitter=2.5,
        )
        b = generate(spec)
        src = anchor_table(b.src_tokens, b.src_vocab, spec.dim)
        tgt = anchor_table(b.tgt_tokens, b.tgt_vocab, spec.dim)
        squeries, sgold = _sense_eval_inputs(b)
        degraded = degrade_lexicon(b)
        lexica = {
            "degraded": degraded,
            "filtered": filter_form(degraded, b.multisense),
        }
        for arm, lex in lexica.items():
            pairs = build_pairs(restrict_valid_pairs(lex, src, tgt), src, tgt, True)
            lm = fit_procrustes(pairs)
            overall[arm].append(evaluate(lm, src, tgt, b.gold_word, "nn").precision_at[1])
            sense[arm].append(evaluate(lm, squeries, tgt, sgold, "nn").precision_at[1])
    gain = float(np.mean(sense["filtered"]) - np.mean(sense["degraded"]))
    overall_shift = float(np.mean(overall["filtered"]) - np.mean(overall["degraded"]))
    elapsed = time.perf_counter() - t0
    criterion(
        8,
        f"sense-gold P@1 10-seed means: degraded {np.mean(sense['degraded']):.1f}, "
        f"filtered {np.mean(sense['filtered']):.1f} (gain {gain:.1f}, need > 0); "
        f"overall shift {overall_shift:+.2f} (|bound| 1); {elapsed:.1f}s (budget 300s)",
    )
    assert gain >= 2.0
    assert abs(overall_shift) < 1.0
    assert elapsed < 300.0


def test_criterion_9_manifest_reruns_byte_identical(criterion, tmp_path):
    criterion(9, "pipeline reruns from manifests")
    t0 = time.perf_counter()
    bundle_dir = tmp_path / "bundle"
    assert (
        run(
            "synth", "--out-dir", bundle_dir, "--seed", 5, "--dim", 8,
            "--n-words", 60, "--n-multisense", 0,
            "--tokens-per-sense", "20,30", "--noise-std", 0.0,
        )
        == 0
    )

    sup_dir = tmp_path / "sup"
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "src_tokens": str(bundle_dir / "src.tkeb"),
                "src_vocab": str(bundle_dir / "src.vocab.tsv"),
                "tgt_tokens": str(bundle_dir / "tgt.tkeb"),
                "tgt_vocab": str(bundle_dir / "tgt.vocab.tsv"),
                "train_dict": str(bundle_dir / "gold.word.txt"),
                "gold_dict": str(bundle_dir / "gold.word.txt"),
                "out_dir": str(sup_dir),
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    assert run("pipeline-sup", "--config", config) == 0
    sup_report = sup_dir / "report.json"
    sup_before = sha(sup_dir / "W.map"), sha(sup_report)
    sup_manifest_before = manifest_modulo_time(manifest_for(sup_report))
    assert rerun_from_manifest(manifest_for(sup_report)) == 0
    sup_identical = (sha(sup_dir / "W.map"), sha(sup_report)) == sup_before
    sup_manifest_same = manifest_modulo_time(manifest_for(sup_report)) == sup_manifest_before

    for side in ("src", "tgt"):
        assert (
            run(
                "build-anchors",
                "--tokens", bundle_dir / f"{side}.tkeb",
                "--vocab", bundle_dir / f"{side}.vocab.tsv",
                "--out", tmp_path / f"{side}.anchors.txt",
            )
            == 0
        )
    adv_map, adv_report = tmp_path / "W.map", tmp_path / "train_report.json"
    adv_rc = run(
        "align-unsup",
        "--src-anchors", tmp_path / "src.anchors.txt",
        "--tgt-anchors", tmp_path / "tgt.anchors.txt",
        "--out", adv_map, "--report", adv_report,
        "--seed", 0, "--epochs", 3, "--batches-per-epoch", 80,
        "--batch-size", 16, "--disc-hidden", 32, "--top-k-vocab", 50,
    )
    assert adv_rc in (0, 3)
    adv_before = sha(adv_map), sha(adv_report)
    adv_manifest_before = manifest_modulo_time(manifest_for(adv_map))
    assert rerun_from_manifest(manifest_for(adv_map)) == adv_rc
    adv_identical = (sha(adv_map), sha(adv_report)) == adv_before
    adv_manifest_same = manifest_modulo_time(manifest_for(adv_map)) == adv_manifest_before

    elapsed = time.perf_counter() - t0
    criterion(
        9,
        f"supervised pipeline rerun identical: {sup_identical}; adversarial rerun "
        f"identical (map + training report): {adv_identical}; manifests equal up "
        f"to wall time: {sup_manifest_same and adv_manifest_same}; {elapsed:.1f}s",
    )
    assert sup_identical and adv_identical
    assert sup_manifest_same and adv_manifest_same


def test_criterion_10_io_round_trips(criterion, tmp_path):
    criterion(10, "binary and text round trips at 10,000 records")
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    n, d = 10_000, 16
    word_ids = rng.integers(0, 500, size=n)
    context_ids = np.arange(n)
    vectors = rng.standard_normal((n, d)).astype(np.float32)
    stream_path = tmp_path / "big.tkeb"
    written = write_token_stream(stream_path, zip(word_ids, context_ids, vectors), d)
    assert written == n
    with read_token_stream(stream_path) as reader:
        assert reader.n_records == n
        got = list(reader.iter_batches())
    got_words = np.concatenate([b[0] for b in got])
    got_ctx = np.concatenate([b[1] for b in got])
    got_vecs = np.concatenate([b[2] for b in got])
    stream_ok = (
        np.array_equal(got_words, word_ids)
        and np.array_equal(got_ctx, context_ids)
        and np.array_equal(got_vecs, vectors)
    )

    table = AnchorTable(
        d, [f"word{i:05d}" for i in range(n)], rng.standard_normal((n, d))
    )
    text_path = tmp_path / "big.anchors.txt"
    write_embedding_text(table, text_path)
    back = read_embedding_text(text_path)
    text_ok = back.keys == table.keys and np.array_equal(back.vectors, table.vectors)
    elapsed = time.perf_counter() - t0
    criterion(
        10,
        f"token stream bit-exact: {stream_ok}; text table value-exact: {text_ok}; "
        f"{elapsed:.2f}s (budget 5s)",
    )
    assert stream_ok
    assert text_ok
    assert elapsed < 5.0
