"""Command-line surface: pretrain, train, score, gradcheck, negatives.

All randomness flows from the --seed flag. Options may also come from a
``key = value`` config file (--config); explicit flags win. Exit codes:
0 success, 2 parse, 3 validation, 4 numeric, 5 I/O.
"""

from __future__ import annotations

import argparse
import sys
from types import SimpleNamespace

import numpy as np

from . import corpus as corpus_mod
from .corpus import PhraseTable, build_pools, read_corpus
from .embeddings import (
    PretrainConfig,
    load_embeddings,
    pretrain_bilingual,
    save_embeddings,
)
from .errors import (
    CorpusParseError,
    KinkProximityError,
    NoCandidateError,
    NumericError,
    ValidationError,
)
from .model import ModelConfig, TranslationMatcher, load_model, save_model
from .trainer import TrainConfig, grad_check, run_curriculum, write_trace

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

_REQUIRED = object()

# name -> (type, default); _REQUIRED values must come from a flag or config file
_MODEL_OPTS = {
    "window": (int, 3),
    "feature_maps": (int, 100),
    "source_layers": (int, 4),
    "target_layers": (int, 3),
    "hidden": (int, 100),
    "hidden2": (int, 100),
    "source_width": (int, 40),
    "target_width": (int, 15),
    "max_phrase_len": (int, 7),
    "init_scale": (float, 0.05),
}

_TRAIN_OPTS = {
    "corpus": (str, _REQUIRED),
    "phrase_table": (str, _REQUIRED),
    "source_embeddings": (str, _REQUIRED),
    "target_embeddings": (str, _REQUIRED),
    "out": (str, _REQUIRED),
    "seed": (int, _REQUIRED),
    "eta": (float, 0.02),
    "embed_lr_factor": (float, 0.01),
    "n_steps": (int, 3),
    "stage_budget": (int, None),
    "convergence_tol": (float, 1e-4),
    **_MODEL_OPTS,
}

_PRETRAIN_OPTS = {
    "corpus": (str, _REQUIRED),
    "out_source": (str, _REQUIRED),
    "out_target": (str, _REQUIRED),
    "seed": (int, _REQUIRED),
    "embed_dim": (int, 50),
    "hidden": (int, 50),
    "epochs": (int, 5),
    "negatives": (int, 1),
    "learning_rate": (float, 0.02),
}

_SCORE_OPTS = {
    "model": (str, _REQUIRED),
    "queries": (str, _REQUIRED),
    "out": (str, None),
}

_GRADCHECK_OPTS = {
    "seed": (int, 0),
    "h": (float, 1e-5),
    "threshold": (float, 1e-4),
    "retries": (int, 5),
}

_NEGATIVES_OPTS = {
    "corpus": (str, _REQUIRED),
    "phrase_table": (str, None),
    "seed": (int, _REQUIRED),
    "count": (int, 5),
    "max_phrase_len": (int, 7),
}


def _read_config_file(path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise CorpusParseError("expected 'key = value'", line_no, path)
            key, _, value = stripped.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args, spec) -> SimpleNamespace:
    """Merge defaults, config-file values, and explicit flags (flags win)."""
    file_values = _read_config_file(args.config) if args.config else {}
    for key in file_values:
        if key not in spec:
            raise ValidationError(f"unknown config key {key!r}")
    merged = {}
    for name, (typ, default) in spec.items():
        flag_val = getattr(args, name, None)
        if flag_val is not None:
            merged[name] = flag_val
        elif name in file_values:
            merged[name] = typ(file_values[name])
        elif default is _REQUIRED:
            raise ValidationError(f"missing required option --{name.replace('_', '-')}")
        else:
            merged[name] = default
    return SimpleNamespace(**merged)


def _add_opts(parser, spec):
    parser.add_argument("--config", help="key = value config file; flags override it")
    for name, (typ, default) in spec.items():
        flag = "--" + name.replace("_", "-")
        parser.add_argument(flag, type=typ, default=None,
                            help=f"default: {'required' if default is _REQUIRED else default}")


def _model_config(opts, embed_dim: int) -> ModelConfig:
    return ModelConfig(
        embed_dim=embed_dim, window=opts.window, feature_maps=opts.feature_maps,
        source_layers=opts.source_layers, target_layers=opts.target_layers,
        hidden=opts.hidden, hidden2=opts.hidden2, source_width=opts.source_width,
        target_width=opts.target_width, max_phrase_len=opts.max_phrase_len,
        init_scale=opts.init_scale,
    )


def cmd_pretrain(args) -> int:
    opts = _resolve(args, _PRETRAIN_OPTS)
    pairs = read_corpus(opts.corpus)
    config = PretrainConfig(embed_dim=opts.embed_dim, hidden=opts.hidden,
                            epochs=opts.epochs, negatives=opts.negatives,
                            learning_rate=opts.learning_rate, seed=opts.seed)
    result = pretrain_bilingual(pairs, config)
    save_embeddings(opts.out_source, result.source_vocab, result.source_table)
    save_embeddings(opts.out_target, result.target_vocab, result.target_table)
    print(f"pretrained {result.source_table.size} source and "
          f"{result.target_table.size} target embeddings (dim {config.embed_dim})")
    return EXIT_OK


def cmd_train(args) -> int:
    opts = _resolve(args, _TRAIN_OPTS)
    pairs = read_corpus(opts.corpus)
    for k, pair in enumerate(pairs):
        if len(pair.src_tokens) > opts.source_width:
            raise ValidationError(
                f"corpus sentence {k + 1} has {len(pair.src_tokens)} tokens, "
                f"limit {opts.source_width}; long sentences are rejected, not truncated"
            )
    table = PhraseTable.load(opts.phrase_table, max_len=opts.max_phrase_len)
    src_vocab, src_embed = load_embeddings(opts.source_embeddings)
    tgt_vocab, tgt_embed = load_embeddings(opts.target_embeddings)
    if src_embed.dim != tgt_embed.dim:
        raise ValidationError("source and target embedding dims differ")

    pool_seed, init_seed, train_seed = np.random.SeedSequence(opts.seed).spawn(3)
    pools = build_pools(pairs, table, opts.max_phrase_len, np.random.default_rng(pool_seed))
    print(f"pools: easy={len(pools.easy)} medium={len(pools.medium)} "
          f"difficult={len(pools.difficult)} "
          f"(dropped: medium={pools.dropped_medium} difficult={pools.dropped_difficult})")

    config = _model_config(opts, src_embed.dim)
    model = TranslationMatcher.initialize(config, src_vocab, tgt_vocab,
                                          np.random.default_rng(init_seed),
                                          src_embed, tgt_embed)
    train_config = TrainConfig(eta=opts.eta, embed_lr_factor=opts.embed_lr_factor,
                               n=opts.n_steps, t=opts.stage_budget, seed=train_seed,
                               convergence_tol=opts.convergence_tol)
    result = run_curriculum(model, pools, train_config)
    for k, snapshot in enumerate(result.snapshots, start=1):
        save_model(snapshot, f"{opts.out}.stage{k}.model")
    save_model(result.model, f"{opts.out}.model")
    write_trace(f"{opts.out}.trace", result.trace)
    print(f"presentations: {result.presentations}")
    print(f"wrote {opts.out}.model and stage snapshots")
    return EXIT_OK


def _parse_query(line: str, line_no: int):
    parts = [p.strip() for p in line.split("|||")]
    if len(parts) != 3:
        raise CorpusParseError("expected 'sentence ||| i j ||| target phrase'", line_no)
    tokens = tuple(parts[0].split())
    span_fields = parts[1].split()
    if len(span_fields) != 2:
        raise CorpusParseError("span must be two indices", line_no)
    try:
        span = (int(span_fields[0]), int(span_fields[1]))
    except ValueError:
        raise CorpusParseError("span must be two integers", line_no) from None
    phrase = tuple(parts[2].split())
    if not tokens or not phrase:
        raise CorpusParseError("empty sentence or phrase", line_no)
    return tokens, span, phrase


def cmd_score(args) -> int:
    opts = _resolve(args, _SCORE_OPTS)
    model = load_model(opts.model)
    lines_out = []
    failures = 0
    with open(opts.queries, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                tokens, span, phrase = _parse_query(line, line_no)
                i, j = span
                if not (0 <= i <= j < len(tokens)):
                    raise ValidationError(f"span {span} out of range")
                score = model.score(tokens, span, phrase)
                lines_out.append(f"{line_no}\t{score!r}")
            except (CorpusParseError, ValidationError) as exc:
                failures += 1
                lines_out.append(f"{line_no}\tERROR\t{exc}")
    text = "\n".join(lines_out) + ("\n" if lines_out else "")
    if opts.out:
        with open(opts.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if failures:
        print(f"{failures} query line(s) failed", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def miniature_model_and_triple(seed: int):
    """A small random model plus one random training triple, used by the
    gradient-check command and tests. 2 source / 1 target conv layers keep
    the 10/5-column widths admissible."""
    rng = np.random.default_rng(seed)
    src_words = [f"s{i}" for i in range(12)]
    tgt_words = [f"t{i}" for i in range(10)]
    from .embeddings import Vocabulary

    config = ModelConfig(embed_dim=4, window=3, feature_maps=3, source_layers=2,
                         target_layers=1, hidden=4, hidden2=3, source_width=10,
                         target_width=5, max_phrase_len=5, init_scale=0.5)
    model = TranslationMatcher.initialize(config, Vocabulary(src_words),
                                          Vocabulary(tgt_words), rng)
    n = int(rng.integers(5, 9))
    sent_src = tuple(src_words[int(rng.integers(len(src_words)))] for _ in range(n))
    sent_tgt = tuple(tgt_words[int(rng.integers(len(tgt_words)))] for _ in range(n))
    alignment = frozenset((i, i) for i in range(n))
    pair = corpus_mod.AlignedSentencePair(sent_src, sent_tgt, alignment)
    i = int(rng.integers(n))
    j = min(n - 1, i + int(rng.integers(0, 2)))
    pos = sent_tgt[i : j + 1]
    neg = pos
    while neg == pos:
        neg = tuple(tgt_words[int(rng.integers(len(tgt_words)))]
                    for _ in range(int(rng.integers(1, 4))))
    example = corpus_mod.ContextualExample(pair, (i, j), pos)
    triple = corpus_mod.TrainingTriple(example, neg, corpus_mod.Difficulty.EASY)
    return model, triple


def cmd_gradcheck(args) -> int:
    opts = _resolve(args, _GRADCHECK_OPTS)
    report = None
    for attempt in range(opts.retries):
        model, triple = miniature_model_and_triple(opts.seed + attempt)
        try:
            report = grad_check(model, triple, h=opts.h)
            break
        except KinkProximityError as exc:
            print(f"attempt {attempt + 1}: resampling ({exc})")
    if report is None:
        print("INCONCLUSIVE: every probe point was rejected near a kink")
        return EXIT_NUMERIC
    print(f"{'group':<32} {'params':>7} {'max rel err':>12}  worst")
    for group in report.groups:
        print(f"{group.name:<32} {group.checked:>7} {group.max_error:>12.3e}  "
              f"{group.worst_index}")
    print(f"hinge active: {report.hinge_active}")
    print(f"overall max relative error: {report.max_error:.3e}")
    if report.max_error < opts.threshold:
        print("PASS")
        return EXIT_OK
    print("FAIL")
    return EXIT_NUMERIC


def cmd_negatives(args) -> int:
    opts = _resolve(args, _NEGATIVES_OPTS)
    pairs = read_corpus(opts.corpus)
    if opts.phrase_table:
        table = PhraseTable.load(opts.phrase_table, max_len=opts.max_phrase_len)
    else:
        table = PhraseTable.from_corpus(pairs, opts.max_phrase_len)
    rng = np.random.default_rng(opts.seed)
    pools = build_pools(pairs, table, opts.max_phrase_len, rng)
    print(f"pools: easy={len(pools.easy)} medium={len(pools.medium)} "
          f"difficult={len(pools.difficult)}")
    for pool in (pools.easy, pools.medium, pools.difficult):
        if not pool:
            continue
        for _ in range(min(opts.count, len(pool))):
            triple = pool[int(rng.integers(len(pool)))]
            ex = triple.example
            i, j = ex.src_span
            print(f"{triple.difficulty.value} ||| {' '.join(ex.sentence.src_tokens)} "
                  f"||| {i} {j} ||| {' '.join(ex.positive_tgt)} "
                  f"||| {' '.join(triple.negative_tgt)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convmatch",
        description="Context-dependent convolutional matching of phrase pairs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, spec, func in (
        ("pretrain", _PRETRAIN_OPTS, cmd_pretrain),
        ("train", _TRAIN_OPTS, cmd_train),
        ("score", _SCORE_OPTS, cmd_score),
        ("gradcheck", _GRADCHECK_OPTS, cmd_gradcheck),
        ("negatives", _NEGATIVES_OPTS, cmd_negatives),
    ):
        p = sub.add_parser(name)
        _add_opts(p, spec)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CorpusParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValidationError, NoCandidateError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def run():
    sys.exit(main())
