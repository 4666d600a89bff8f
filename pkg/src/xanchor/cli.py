"""Command-line front end: anchor building, filtering, alignment, evaluation.

Every run writes a JSON manifest next to its primary output recording the
resolved flags, input digests, seed, tool version and wall time, so any
artifact can be traced and reproduced.  Exit codes: 0 success, 2 bad input or
configuration, 3 training finished without convergence, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .align_supervised import (
    build_pairs,
    fit_least_squares,
    fit_procrustes,
    read_map,
    write_map,
)
from .align_unsupervised import AdvConfig, refine_procrustes, train_adversarial
from .anchors import build_anchor_table
from .embed_io import (
    AnchorTable,
    export_projector,
    load_vocab,
    read_embedding_text,
    read_token_stream,
    write_embedding_text,
)
from .errors import (
    AmbiguityError,
    ConfigError,
    DataError,
    EvalError,
    FormatError,
    IneligibleError,
    RefinementError,
    SpecError,
    TrainingDivergedError,
    TruncationError,
    XanchorError,
)
from .lexicon import (
    filter_form,
    filter_lemma,
    load_lemmas,
    load_lexicon,
    load_multisense,
    remove_anchor_rows,
    restrict_valid_pairs,
    save_lexicon,
)
from .retrieval_eval import RETRIEVALS, evaluate, load_gold
from .sense_cluster import (
    ClusterParams,
    cluster_word,
    load_models,
    replace_with_cluster_anchors,
    save_models,
)
from .synthbench import SynthSpec, generate, write_bundle

log = logging.getLogger("xanchor")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_NUMERIC = 4

_INPUT_ERRORS = (
    FormatError,
    TruncationError,
    DataError,
    IneligibleError,
    EvalError,
    SpecError,
    ConfigError,
    FileNotFoundError,
)
_NUMERIC_ERRORS = (TrainingDivergedError, AmbiguityError, RefinementError)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest_path(primary_out: Path) -> Path:
    return primary_out.with_name(primary_out.name + ".manifest.json")


def write_manifest(
    primary_out: Path,
    subcommand: str,
    flags: dict,
    inputs: list[Path],
    seed: int | None,
    started: float,
) -> Path:
    payload = {
        "subcommand": subcommand,
        "flags": {k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items()},
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "seed": seed,
        "version": __version__,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    path = _manifest_path(primary_out)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _flags(args: argparse.Namespace) -> dict:
    skip = {"func", "subcommand"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def rerun_argv(manifest_path: str | Path) -> list[str]:
    """Reconstruct the argv of a recorded run (manifests are self-describing)."""
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    argv = [manifest["subcommand"]]
    for dest, value in sorted(manifest["flags"].items()):
        if value is None:
            continue
        flag = "--" + dest.replace("_", "-")
        if isinstance(value, bool):
            argv.append(f"{flag}={'yes' if value else 'no'}")
        elif isinstance(value, list) and value and all(isinstance(v, str) for v in value):
            for v in value:  # repeatable flags such as --set
                argv.extend([flag, v])
        elif isinstance(value, list):
            argv.extend([flag, ",".join(str(v) for v in value)])
        else:
            argv.extend([flag, str(value)])
    return argv


def rerun_from_manifest(manifest_path: str | Path) -> int:
    return main(rerun_argv(manifest_path))


def _bool_flag(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("yes", "true", "1"):
        return True
    if lowered in ("no", "false", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected yes/no, got {value!r}")


def _int_pair(value: str) -> tuple[int, int]:
    parts = value.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected 'lo,hi'")
    return int(parts[0]), int(parts[1])


def _int_list(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v]


# --- subcommand handlers -------------------------------------------------


def cmd_build_anchors(args) -> int:
    started = time.monotonic()
    vocab = load_vocab(args.vocab)
    with read_token_stream(args.tokens) as stream:
        table = build_anchor_table(stream, vocab, args.min_count)
    if len(table) == 0:
        log.warning("no word reached min_count=%d; writing empty table", args.min_count)
    write_embedding_text(table, args.out)
    write_manifest(
        Path(args.out), "build-anchors", _flags(args), [args.tokens, args.vocab], None, started
    )
    log.info("wrote %d anchors to %s", len(table), args.out)
    return EXIT_OK


def _collect_word_tokens(tokens_path: Path, vocab, words: list[str]):
    wanted = {vocab.rank(w) for w in words if w in vocab}
    buckets: dict[int, list] = {w: [] for w in wanted}
    with read_token_stream(tokens_path) as stream:
        for word_ids, context_ids, vectors in stream.iter_batches():
            mask = np.isin(word_ids, list(wanted)) if wanted else np.zeros(len(word_ids), bool)
            for i in np.nonzero(mask)[0]:
                buckets[int(word_ids[i])].append(
                    (int(word_ids[i]), int(context_ids[i]), np.array(vectors[i]))
                )
    return buckets


def cmd_cluster(args) -> int:
    started = time.monotonic()
    vocab = load_vocab(args.vocab)
    with open(args.words, encoding="utf-8") as fh:
        words = [w.strip() for w in fh if w.strip()]
    params = ClusterParams(
        min_tokens=args.min_tokens,
        max_sample=args.max_sample,
        k_max=args.k_max,
    )
    buckets = _collect_word_tokens(Path(args.tokens), vocab, words)
    models = []
    skipped = []
    for w in dict.fromkeys(words):
        if w not in vocab:
            skipped.append((w, "not-in-vocab"))
            continue
        toks = buckets.get(vocab.rank(w), [])
        if len(toks) < params.min_tokens:
            skipped.append((w, f"only {len(toks)} tokens"))
            continue
        models.append(cluster_word(w, toks, params, args.seed))
    for w, why in skipped:
        log.info("kept plain anchor for %r (%s)", w, why)
    save_models(models, args.out_models)
    dim = models[0].anchors.shape[1] if models else 1
    rows, keys, counts = [], [], []
    for m in models:
        if m.k < 2:
            continue
        for j in range(m.k):
            keys.append(f"{m.word}#{j}")
            rows.append(m.anchors[j])
            counts.append(int(m.counts[j]))
    table = AnchorTable(
        dim, keys, np.asarray(rows, dtype=np.float64).reshape(len(keys), dim), counts
    )
    write_embedding_text(table, args.out_anchors)
    write_manifest(
        Path(args.out_models),
        "cluster",
        _flags(args),
        [args.tokens, args.vocab, args.words],
        args.seed,
        started,
    )
    log.info("clustered %d words (%d skipped)", len(models), len(skipped))
    return EXIT_OK


def cmd_filter_dict(args) -> int:
    started = time.monotonic()
    lex = load_lexicon(args.dict)
    ms = load_multisense(args.multisense, args.side)
    inputs = [args.dict, args.multisense]
    if args.mode == "form":
        out = filter_form(lex, ms)
    else:
        if not args.lemmas:
            raise ConfigError("--lemmas is required for lemma-based filtering")
        inputs.append(args.lemmas)
        out = filter_lemma(lex, ms, load_lemmas(args.lemmas))
    save_lexicon(out, args.out)
    write_manifest(Path(args.out), "filter-dict", _flags(args), inputs, None, started)
    log.info("kept %d of %d pairs", len(out), len(lex))
    return EXIT_OK


def cmd_edit_anchors(args) -> int:
    started = time.monotonic()
    table = read_embedding_text(args.anchors)
    inputs = [args.anchors]
    if not args.remove and not args.replace_models:
        raise ConfigError("nothing to do: pass --remove and/or --replace-models")
    if args.remove:
        ms = load_multisense(args.remove, args.side)
        result = remove_anchor_rows(table, ms)
        table = result.table
        inputs.append(args.remove)
        log.info("removed %d rows (%d listed words had none)", result.removed, result.missing)
    if args.replace_models:
        models = load_models(args.replace_models)
        table = replace_with_cluster_anchors(table, models)
        inputs.append(args.replace_models)
    write_embedding_text(table, args.out)
    write_manifest(Path(args.out), "edit-anchors", _flags(args), inputs, None, started)
    return EXIT_OK


def cmd_align_sup(args) -> int:
    started = time.monotonic()
    src = read_embedding_text(args.src_anchors)
    tgt = read_embedding_text(args.tgt_anchors)
    lex = load_lexicon(args.dict)
    usable = restrict_valid_pairs(lex, src, tgt)
    if len(usable) < len(lex):
        log.info("dropped %d pairs without anchors", len(lex) - len(usable))
    normalize = args.normalize
    if normalize is None:
        normalize = args.method == "procrustes"
    pairs = build_pairs(usable, src, tgt, normalize)
    lm = fit_least_squares(pairs) if args.method == "lstsq" else fit_procrustes(pairs)
    write_map(lm, args.out)
    write_manifest(
        Path(args.out),
        "align-sup",
        _flags(args),
        [args.dict, args.src_anchors, args.tgt_anchors],
        None,
        started,
    )
    log.info("fit %s on %d pairs, residual %.6g", args.method, len(pairs), lm.residual)
    return EXIT_OK


def _adv_config(args) -> AdvConfig:
    return AdvConfig(
        seed=args.seed,
        epochs=args.epochs,
        batches_per_epoch=args.batches_per_epoch,
        batch_size=args.batch_size,
        disc_hidden=args.disc_hidden,
        lr_disc=args.lr_disc,
        lr_map=args.lr_map,
        top_k_vocab=args.top_k_vocab,
    )


def cmd_align_unsup(args) -> int:
    started = time.monotonic()
    src = read_embedding_text(args.src_anchors)
    tgt = read_embedding_text(args.tgt_anchors)
    lm, report = train_adversarial(src, tgt, _adv_config(args))
    if args.refine_rounds > 0 and report.converged:
        lm = refine_procrustes(lm, src, tgt, args.refine_rounds)
    write_map(lm, args.out)
    with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json() + "\n")
    write_manifest(
        Path(args.out),
        "align-unsup",
        _flags(args),
        [args.src_anchors, args.tgt_anchors],
        args.seed,
        started,
    )
    if not report.converged:
        log.warning(
            "criterion %.4f below threshold %.4f: not converged",
            report.best_criterion,
            report.convergence_threshold,
        )
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.monotonic()
    lm = read_map(args.map)
    src = read_embedding_text(args.src_anchors)
    tgt = read_embedding_text(args.tgt_anchors)
    gold = load_gold(args.gold)
    report = evaluate(lm, src, tgt, gold, args.retrieval, tuple(args.ks))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json() + "\n")
    write_manifest(
        Path(args.out),
        "eval",
        _flags(args),
        [args.map, args.src_anchors, args.tgt_anchors, args.gold],
        None,
        started,
    )
    log.info("P@k: %s over %d queries", report.precision_at, report.n_queries)
    return EXIT_OK


def cmd_synth(args) -> int:
    started = time.monotonic()
    spec = SynthSpec(
        seed=args.seed,
        dim=args.dim,
        n_words=args.n_words,
        n_multisense=args.n_multisense,
        senses_per_word=args.senses,
        tokens_per_sense=args.tokens_per_sense,
        sense_separation=args.separation,
        sense_skew=args.skew,
        noise_std=args.noise_std,
        anisotropy=args.anisotropy,
        center_shift=args.center_shift,
        sense_axis_mix=args.sense_axis_mix,
        target_center_jitter=args.target_center_jitter,
    )
    bundle = generate(spec)
    paths = write_bundle(bundle, args.out_dir)
    write_manifest(Path(paths["meta"]), "synth", _flags(args), [], args.seed, started)
    log.info("bundle written to %s (sigma=%.5g)", args.out_dir, bundle.sigma)
    return EXIT_OK


def cmd_export_projector(args) -> int:
    started = time.monotonic()
    vocab = load_vocab(args.vocab)
    with open(args.words, encoding="utf-8") as fh:
        words = [w.strip() for w in fh if w.strip()]
    wanted = {vocab.rank(w) for w in words if w in vocab}
    for w in words:
        if w not in vocab:
            log.warning("word %r not in vocab, skipped", w)

    def labeled_tokens():
        with read_token_stream(args.tokens) as stream:
            for word_ids, _, vectors in stream.iter_batches():
                for i in np.nonzero(np.isin(word_ids, list(wanted)))[0]:
                    yield vocab.surface(int(word_ids[i])), vectors[i]

    vec_path, _ = export_projector(labeled_tokens(), args.out)
    write_manifest(
        Path(vec_path),
        "export-projector",
        _flags(args),
        [args.tokens, args.vocab, args.words],
        None,
        started,
    )
    return EXIT_OK


# --- pipelines -----------------------------------------------------------


def _require(config: dict, keys: list[str], where: str) -> None:
    missing = [k for k in keys if k not in config]
    if missing:
        raise ConfigError(f"{where}: missing config keys {missing}")
    for k in keys:
        v = config[k]
        if isinstance(v, str) and (k.endswith("_tokens") or k.endswith("_vocab") or k.endswith("_dict")):
            if not Path(v).exists():
                raise ConfigError(f"{where}: {k} file not found: {v}")


def _stage(name: str):
    log.info("stage: %s", name)


def _build_side_anchors(tokens_path: str, vocab_path: str, min_count: int) -> AnchorTable:
    vocab = load_vocab(vocab_path)
    with read_token_stream(tokens_path) as stream:
        return build_anchor_table(stream, vocab, min_count)


def pipeline_supervised(config: dict) -> dict:
    """anchors -> dictionary filtering -> supervised fit -> evaluation."""
    _require(
        config,
        ["src_tokens", "src_vocab", "tgt_tokens", "tgt_vocab", "train_dict", "gold_dict", "out_dir"],
        "pipeline-sup",
    )
    out_dir = Path(config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    method = config.get("method", "procrustes")
    if method not in ("procrustes", "lstsq"):
        raise ConfigError(f"unknown method {method!r}")
    retrieval = config.get("retrieval", "nn")
    if retrieval not in RETRIEVALS:
        raise ConfigError(f"unknown retrieval {retrieval!r}")
    min_count = int(config.get("min_count", 1))

    _stage("build-anchors")
    src = _build_side_anchors(config["src_tokens"], config["src_vocab"], min_count)
    tgt = _build_side_anchors(config["tgt_tokens"], config["tgt_vocab"], min_count)

    _stage("filter-dict")
    lex = load_lexicon(config["train_dict"])
    filt = config.get("filter") or {}
    mode = filt.get("mode", "none")
    if mode != "none":
        ms = load_multisense(filt["multisense"], filt.get("side", "source"))
        if mode == "form":
            lex = filter_form(lex, ms)
        elif mode == "lemma":
            lex = filter_lemma(lex, ms, load_lemmas(filt["lemmas"]))
        else:
            raise ConfigError(f"unknown filter mode {mode!r}")
    lex = restrict_valid_pairs(lex, src, tgt)

    _stage("align-sup")
    normalize = config.get("normalize")
    if normalize is None:
        normalize = method == "procrustes"
    pairs = build_pairs(lex, src, tgt, bool(normalize))
    lm = fit_least_squares(pairs) if method == "lstsq" else fit_procrustes(pairs)
    map_path = out_dir / "W.map"
    write_map(lm, map_path)

    _stage("eval")
    gold = load_gold(config["gold_dict"])
    report = evaluate(lm, src, tgt, gold, retrieval)
    report_path = out_dir / "report.json"
    payload = {"method": method, "n_pairs": len(pairs), "eval": report.to_dict()}
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return {"map": str(map_path), "report": str(report_path), "eval": report}


def pipeline_unsupervised(config: dict) -> dict:
    """anchors -> anchor-table policy -> adversarial fit -> refinement -> eval."""
    _require(
        config,
        ["src_tokens", "src_vocab", "tgt_tokens", "tgt_vocab", "gold_dict", "out_dir"],
        "pipeline-unsup",
    )
    out_dir = Path(config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    policy = config.get("policy", "baseline")
    if policy not in ("baseline", "remove", "replace"):
        raise ConfigError(f"unknown policy {policy!r}")
    if policy in ("remove", "replace") and "multisense" not in config:
        raise ConfigError(f"policy {policy!r} needs a multisense list")
    retrieval = config.get("retrieval", "csls_knn_10")
    if retrieval not in RETRIEVALS:
        raise ConfigError(f"unknown retrieval {retrieval!r}")
    min_count = int(config.get("min_count", 1))
    seed = int(config.get("seed", 0))

    _stage("build-anchors")
    src = _build_side_anchors(config["src_tokens"], config["src_vocab"], min_count)
    tgt = _build_side_anchors(config["tgt_tokens"], config["tgt_vocab"], min_count)

    _stage(f"policy-{policy}")
    if policy == "remove":
        ms = load_multisense(config["multisense"], config.get("side", "source"))
        src = remove_anchor_rows(src, ms).table
    elif policy == "replace":
        ms = load_multisense(config["multisense"], config.get("side", "source"))
        cluster_cfg = config.get("cluster") or {}
        params = ClusterParams(
            min_tokens=int(cluster_cfg.get("min_tokens", 160)),
            max_sample=int(cluster_cfg.get("max_sample", 10_000)),
            k_max=int(cluster_cfg.get("k_max", 10)),
        )
        vocab = load_vocab(config["src_vocab"])
        buckets = _collect_word_tokens(Path(config["src_tokens"]), vocab, sorted(ms.words))
        models = []
        for w in sorted(ms.words):
            if w not in vocab:
                continue
            toks = buckets.get(vocab.rank(w), [])
            if len(toks) < params.min_tokens:
                log.info("kept plain anchor for %r (%d tokens)", w, len(toks))
                continue
            models.append(cluster_word(w, toks, params, seed))
        src = replace_with_cluster_anchors(src, models)

    _stage("align-unsup")
    adv_cfg = config.get("adv") or {}
    cfg = AdvConfig(seed=seed, **{k: v for k, v in adv_cfg.items() if k != "seed"})
    lm, train_report = train_adversarial(src, tgt, cfg)
    refine_rounds = int(config.get("refine_rounds", 0))
    if refine_rounds > 0 and train_report.converged:
        _stage("refine")
        lm = refine_procrustes(lm, src, tgt, refine_rounds)
    map_path = out_dir / "W.map"
    write_map(lm, map_path)

    _stage("eval")
    gold = load_gold(config["gold_dict"])
    report = evaluate(lm, src, tgt, gold, retrieval)
    report_path = out_dir / "report.json"
    payload = {
        "policy": policy,
        "train": train_report.to_dict(),
        "eval": report.to_dict(),
    }
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return {
        "map": str(map_path),
        "report": str(report_path),
        "eval": report,
        "train": train_report,
        "converged": train_report.converged,
    }


def _load_config(args) -> dict:
    with open(args.config, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.config}: {e}") from None
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return config


def cmd_pipeline_sup(args) -> int:
    started = time.monotonic()
    config = _load_config(args)
    result = pipeline_supervised(config)
    inputs = [config[k] for k in ("src_tokens", "src_vocab", "tgt_tokens", "tgt_vocab", "train_dict", "gold_dict")]
    write_manifest(
        Path(result["report"]), "pipeline-sup", _flags(args), inputs, config.get("seed"), started
    )
    return EXIT_OK


def cmd_pipeline_unsup(args) -> int:
    started = time.monotonic()
    config = _load_config(args)
    result = pipeline_unsupervised(config)
    inputs = [config[k] for k in ("src_tokens", "src_vocab", "tgt_tokens", "tgt_vocab", "gold_dict")]
    if "multisense" in config:
        inputs.append(config["multisense"])
    write_manifest(
        Path(result["report"]), "pipeline-unsup", _flags(args), inputs, config.get("seed"), started
    )
    return EXIT_OK if result["converged"] else EXIT_NOT_CONVERGED


# --- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xanchor",
        description="Cross-lingual anchor alignment toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("build-anchors", help="average token embeddings into anchors")
    p.add_argument("--tokens", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-count", type=int, default=1)
    p.set_defaults(func=cmd_build_anchors)

    p = sub.add_parser("cluster", help="sense-cluster listed words' tokens")
    p.add_argument("--tokens", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--words", required=True, help="file with one word per line")
    p.add_argument("--out-models", required=True)
    p.add_argument("--out-anchors", required=True)
    p.add_argument("--min-tokens", type=int, default=160)
    p.add_argument("--max-sample", type=int, default=10_000)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("filter-dict", help="drop multi-sense pairs from a dictionary")
    p.add_argument("--dict", required=True)
    p.add_argument("--multisense", required=True)
    p.add_argument("--side", choices=("source", "target"), default="source")
    p.add_argument("--mode", choices=("form", "lemma"), default="form")
    p.add_argument("--lemmas")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter_dict)

    p = sub.add_parser("edit-anchors", help="remove or replace anchor rows")
    p.add_argument("--anchors", required=True)
    p.add_argument("--remove", help="multisense list whose rows to delete")
    p.add_argument("--side", choices=("source", "target"), default="source")
    p.add_argument("--replace-models", help="cluster models JSON to splice in")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edit_anchors)

    p = sub.add_parser("align-sup", help="fit a supervised linear map")
    p.add_argument("--dict", required=True)
    p.add_argument("--src-anchors", required=True)
    p.add_argument("--tgt-anchors", required=True)
    p.add_argument("--method", choices=("procrustes", "lstsq"), default="procrustes")
    p.add_argument("--normalize", type=_bool_flag, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align_sup)

    p = sub.add_parser("align-unsup", help="fit a map adversarially, no dictionary")
    p.add_argument("--src-anchors", required=True)
    p.add_argument("--tgt-anchors", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batches-per-epoch", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--disc-hidden", type=int, default=256)
    p.add_argument("--lr-disc", type=float, default=0.1)
    p.add_argument("--lr-map", type=float, default=0.05)
    p.add_argument("--top-k-vocab", type=int, default=50_000)
    p.add_argument("--refine-rounds", type=int, default=0)
    p.set_defaults(func=cmd_align_unsup)

    p = sub.add_parser("eval", help="precision@k of a map against gold pairs")
    p.add_argument("--map", required=True)
    p.add_argument("--src-anchors", required=True)
    p.add_argument("--tgt-anchors", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--retrieval", choices=RETRIEVALS, default="nn")
    p.add_argument("--ks", type=_int_list, default=[1, 5, 10])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic benchmark bundle")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--n-words", type=int, default=5000)
    p.add_argument("--n-multisense", type=int, default=250)
    p.add_argument("--senses", type=_int_pair, default=(2, 3))
    p.add_argument("--tokens-per-sense", type=_int_pair, default=(200, 400))
    p.add_argument("--separation", type=float, default=8.0)
    p.add_argument("--skew", type=float, default=0.25)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--anisotropy", type=float, default=4.0)
    p.add_argument("--center-shift", type=float, default=1.0)
    p.add_argument("--sense-axis-mix", type=float, default=0.5)
    p.add_argument("--target-center-jitter", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("export-projector", help="write Embedding Projector TSVs")
    p.add_argument("--tokens", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--words", required=True, help="file with one word per line")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_export_projector)

    p = sub.add_parser("pipeline-sup", help="run the supervised pipeline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", help="override config: key=value")
    p.set_defaults(func=cmd_pipeline_sup)

    p = sub.add_parser("pipeline-unsup", help="run the adversarial pipeline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", help="override config: key=value")
    p.set_defaults(func=cmd_pipeline_unsup)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as e:
        log.error("%s", e)
        return EXIT_INPUT
    except _NUMERIC_ERRORS as e:
        log.error("%s", e)
        return EXIT_NUMERIC
    except XanchorError as e:
        log.error("%s", e)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
