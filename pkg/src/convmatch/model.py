"""The complete matcher bundle: embeddings, both encoder stacks, and the
matching head, plus its versioned text serialization.

The file format round-trips bit-exactly: floats are written with repr and
parsed back with float().
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .convnet import ConvLayerParams, EncoderStack, encode, min_input_length
from .corpus import Tokens
from .embeddings import EmbeddingTable, TaggedSentenceMatrix, Vocabulary, lookup_tagged
from .errors import CorpusParseError, LengthError, ShapeError, ValidationError
from .matcher import MatcherParams, match_score

FORMAT_HEADER = "convmatch-model v1"


@dataclass
class ModelConfig:
    """Architecture knobs; the stated defaults follow the reference setup
    (k=3 windows, 100 feature maps, 50-dim embeddings, 4 source / 3 target
    conv layers, phrases of 1..7 tokens)."""

    embed_dim: int = 50
    window: int = 3
    feature_maps: int = 100
    source_layers: int = 4
    target_layers: int = 3
    hidden: int = 100
    hidden2: int = 100
    source_width: int = 40
    target_width: int = 15
    max_phrase_len: int = 7
    init_scale: float = 0.05

    def __post_init__(self):
        for name in ("embed_dim", "window", "feature_maps", "source_layers",
                     "target_layers", "hidden", "hidden2", "source_width",
                     "target_width", "max_phrase_len"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.max_phrase_len > self.target_width:
            raise ValidationError("max_phrase_len cannot exceed target_width")

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


@dataclass
class TranslationMatcher:
    """All trainable state: vocabularies, embedding tables, encoder stacks,
    and matcher parameters."""

    config: ModelConfig
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    src_embed: EmbeddingTable
    tgt_embed: EmbeddingTable
    src_stack: EncoderStack
    tgt_stack: EncoderStack
    matcher: MatcherParams

    @classmethod
    def initialize(cls, config: ModelConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                   rng, src_embed: EmbeddingTable | None = None,
                   tgt_embed: EmbeddingTable | None = None) -> "TranslationMatcher":
        """Random parameters; embedding tables may be supplied (pretrained)."""
        if src_embed is None:
            src_embed = EmbeddingTable.random(len(src_vocab), config.embed_dim, rng,
                                              config.init_scale)
        if tgt_embed is None:
            tgt_embed = EmbeddingTable.random(len(tgt_vocab), config.embed_dim, rng,
                                              config.init_scale)
        if src_embed.dim != config.embed_dim or tgt_embed.dim != config.embed_dim:
            raise ValidationError("embedding tables disagree with config.embed_dim")
        input_dim = config.embed_dim + 1  # span-tag row
        src_stack = EncoderStack.build(input_dim, config.source_layers, config.window,
                                       config.feature_maps, rng, config.init_scale, "source")
        tgt_stack = EncoderStack.build(input_dim, config.target_layers, config.window,
                                       config.feature_maps, rng, config.init_scale, "target")
        model = cls(config, src_vocab, tgt_vocab, src_embed, tgt_embed, src_stack, tgt_stack,
                    MatcherParams.random(src_stack.output_dim, tgt_stack.output_dim,
                                         config.hidden, config.hidden2, rng, config.init_scale))
        model.validate_widths()
        return model

    def validate_widths(self):
        need_src = min_input_length(self.src_stack)
        if self.config.source_width < need_src:
            raise ShapeError(
                f"source stack needs width >= {need_src}, configured {self.config.source_width}"
            )
        need_tgt = min_input_length(self.tgt_stack)
        if self.config.target_width < need_tgt:
            raise ShapeError(
                f"target stack needs width >= {need_tgt}, configured {self.config.target_width}"
            )

    def copy(self) -> "TranslationMatcher":
        return TranslationMatcher(
            config=self.config,
            src_vocab=self.src_vocab,
            tgt_vocab=self.tgt_vocab,
            src_embed=self.src_embed.copy(),
            tgt_embed=self.tgt_embed.copy(),
            src_stack=self.src_stack.copy(),
            tgt_stack=self.tgt_stack.copy(),
            matcher=self.matcher.copy(),
        )

    def source_matrix(self, tokens: Tokens, span: tuple[int, int]) -> TaggedSentenceMatrix:
        """Tagged source-sentence matrix; sentences over the width are rejected."""
        if len(tokens) > self.config.source_width:
            raise LengthError(
                f"source sentence of {len(tokens)} tokens exceeds width "
                f"{self.config.source_width}"
            )
        return lookup_tagged(self.src_vocab, self.src_embed, tokens, span,
                             self.config.source_width)

    def target_matrix(self, tokens: Tokens) -> TaggedSentenceMatrix:
        """Tagged target-phrase matrix; every phrase word carries tag 1."""
        if len(tokens) > self.config.max_phrase_len:
            raise LengthError(
                f"target phrase of {len(tokens)} tokens exceeds max phrase length "
                f"{self.config.max_phrase_len}"
            )
        span = (0, len(tokens) - 1) if tokens else None
        return lookup_tagged(self.tgt_vocab, self.tgt_embed, tokens, span,
                             self.config.target_width)

    def score(self, src_tokens: Tokens, span: tuple[int, int], tgt_tokens: Tokens) -> float:
        """Matching score of a target phrase against a source span in context."""
        x, _ = encode(self.source_matrix(src_tokens, span), self.src_stack)
        y, _ = encode(self.target_matrix(tgt_tokens), self.tgt_stack)
        return match_score(x, y, self.matcher)


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_matrix(fh, mat: np.ndarray):
    for row in np.atleast_2d(mat):
        fh.write(" ".join(_fmt(v) for v in row) + "\n")


def save_model(model: TranslationMatcher, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FORMAT_HEADER + "\n")
        fh.write("[config]\n")
        for name, value in model.config.items():
            fh.write(f"{name} {value!r}\n")
        for section, vocab, table in (
            ("source", model.src_vocab, model.src_embed),
            ("target", model.tgt_vocab, model.tgt_embed),
        ):
            fh.write(f"[{section}_vocab]\n{len(vocab)}\n")
            for tok in vocab.tokens:
                fh.write(tok + "\n")
            fh.write(f"[{section}_embeddings]\n{table.size} {table.dim}\n")
            _write_matrix(fh, table.vectors)
        for section, stack in (("source_stack", model.src_stack),
                               ("target_stack", model.tgt_stack)):
            fh.write(f"[{section}]\nlayers {len(stack.layers)}\n")
            for layer in stack.layers:
                fh.write(f"layer {layer.maps} {layer.window} {layer.input_dim}\n")
                _write_matrix(fh, layer.weights)
                _write_matrix(fh, layer.bias)
        m = model.matcher
        fh.write("[matcher]\n")
        fh.write(f"dims {m.w_c.shape[0]} {m.w_h.shape[0]} {m.w_c.shape[1]}\n")
        _write_matrix(fh, m.w_c)
        _write_matrix(fh, m.b_c)
        _write_matrix(fh, m.w_h)
        _write_matrix(fh, m.b_h)
        _write_matrix(fh, m.w_o)
        fh.write(_fmt(m.b_o) + "\n")


class _Reader:
    def __init__(self, fh, path):
        self.fh = fh
        self.path = path
        self.line_no = 0

    def line(self) -> str:
        raw = self.fh.readline()
        if not raw:
            raise CorpusParseError("unexpected end of model file", self.line_no, self.path)
        self.line_no += 1
        return raw.rstrip("\n")

    def expect(self, text: str):
        got = self.line()
        if got != text:
            raise CorpusParseError(f"expected {text!r}, got {got!r}", self.line_no, self.path)

    def floats(self, n: int) -> np.ndarray:
        parts = self.line().split()
        if len(parts) != n:
            raise CorpusParseError(f"expected {n} values, got {len(parts)}",
                                   self.line_no, self.path)
        return np.array([float(p) for p in parts], dtype=np.float64)

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        return np.stack([self.floats(cols) for _ in range(rows)])


def load_model(path) -> TranslationMatcher:
    with open(path, encoding="utf-8") as fh:
        r = _Reader(fh, path)
        r.expect(FORMAT_HEADER)
        r.expect("[config]")
        cfg_kwargs = {}
        for f in fields(ModelConfig):
            name, value = r.line().split(maxsplit=1)
            if name != f.name:
                raise CorpusParseError(f"expected config key {f.name}, got {name}",
                                       r.line_no, path)
            cfg_kwargs[name] = float(value) if f.name == "init_scale" else int(value)
        config = ModelConfig(**cfg_kwargs)

        vocabs, tables = [], []
        for section in ("source", "target"):
            r.expect(f"[{section}_vocab]")
            count = int(r.line())
            vocabs.append(Vocabulary.from_ordered([r.line() for _ in range(count)]))
            r.expect(f"[{section}_embeddings]")
            size, dim = (int(v) for v in r.line().split())
            if size != count:
                raise CorpusParseError("embedding rows disagree with vocab size",
                                       r.line_no, path)
            tables.append(EmbeddingTable(r.matrix(size, dim)))

        stacks = []
        for section, side in (("source_stack", "source"), ("target_stack", "target")):
            r.expect(f"[{section}]")
            tag, n = r.line().split()
            if tag != "layers":
                raise CorpusParseError("expected 'layers N'", r.line_no, path)
            layers = []
            for _ in range(int(n)):
                parts = r.line().split()
                if parts[0] != "layer" or len(parts) != 4:
                    raise CorpusParseError("expected 'layer J k d_in'", r.line_no, path)
                maps, window, d_in = int(parts[1]), int(parts[2]), int(parts[3])
                weights = r.matrix(maps, window * d_in)
                bias = r.floats(maps)
                layers.append(ConvLayerParams(weights, bias, window))
            stacks.append(EncoderStack(layers, side=side))

        r.expect("[matcher]")
        parts = r.line().split()
        if parts[0] != "dims" or len(parts) != 4:
            raise CorpusParseError("expected 'dims H H2 in'", r.line_no, path)
        hidden, hidden2, in_dim = int(parts[1]), int(parts[2]), int(parts[3])
        matcher = MatcherParams(
            w_c=r.matrix(hidden, in_dim),
            b_c=r.floats(hidden),
            w_h=r.matrix(hidden2, hidden),
            b_h=r.floats(hidden2),
            w_o=r.floats(hidden2),
            b_o=float(r.line()),
        )

    model = TranslationMatcher(config, vocabs[0], vocabs[1], tables[0], tables[1],
                               stacks[0], stacks[1], matcher)
    model.validate_widths()
    return model
