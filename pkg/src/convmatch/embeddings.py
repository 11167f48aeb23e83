"""Vocabularies, embedding tables, tagged input matrices, and the
context-window bilingual pretrainer.

Word vectors are plain rows of a (V, d) float64 matrix. CDCM inputs get one
extra 0/1 row marking phrase-span membership and are zero-padded on the
right to a fixed width. The pretrainer scores aligned word pairs through
their 5-word context windows and trains embeddings plus a small ReLU scorer
with a max-margin objective against center-word-replacement negatives.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .corpus import AlignedSentencePair
from .errors import LengthError, NoTrainingDataError, ValidationError

UNK = "<unk>"
BOS = "<s>"
EOS = "</s>"
RESERVED = (UNK, BOS, EOS)

WINDOW_RADIUS = 2  # two words of context on each side of the center word


class Vocabulary:
    """Dense token -> index map with reserved <unk>, <s>, </s> entries."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._index: dict[str, int] = {}
        self._tokens: list[str] = []
        for tok in RESERVED:
            self.add(tok)
        for tok in tokens:
            self.add(tok)

    @classmethod
    def from_ordered(cls, tokens: Sequence[str]) -> "Vocabulary":
        """Rebuild a vocabulary from an explicit token order (file loading)."""
        vocab = cls.__new__(cls)
        vocab._index = {}
        vocab._tokens = []
        for tok in tokens:
            if tok in vocab._index:
                raise ValidationError(f"duplicate vocabulary token {tok!r}")
            vocab._index[tok] = len(vocab._tokens)
            vocab._tokens.append(tok)
        for tok in RESERVED:
            if tok not in vocab._index:
                raise ValidationError(f"vocabulary is missing reserved token {tok!r}")
        return vocab

    def add(self, token: str) -> int:
        idx = self._index.get(token)
        if idx is None:
            idx = len(self._tokens)
            self._index[token] = idx
            self._tokens.append(token)
        return idx

    def index(self, token: str) -> int:
        """Index of token, falling back to the shared <unk> row."""
        return self._index.get(token, self._index[UNK])

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self._tokens)

    def real_tokens(self) -> tuple[str, ...]:
        """Tokens excluding the reserved entries (negative-sampling domain)."""
        return tuple(t for t in self._tokens if t not in RESERVED)


def build_vocab(sentences: Iterable[Sequence[str]]) -> Vocabulary:
    """Vocabulary over all tokens of the given sentences, sorted for determinism."""
    seen = set()
    for sent in sentences:
        seen.update(sent)
    return Vocabulary(sorted(seen))


@dataclass
class EmbeddingTable:
    """Row-per-word dense vectors, float64."""

    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValidationError("embedding table must be a 2-d matrix")
        if not np.all(np.isfinite(self.vectors)):
            raise ValidationError("embedding table contains non-finite values")

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def random(cls, size: int, dim: int, rng, scale: float = 0.05) -> "EmbeddingTable":
        return cls(rng.uniform(-scale, scale, size=(size, dim)))

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.vectors.copy())


def save_embeddings(path, vocab: Vocabulary, table: EmbeddingTable):
    """Text format: header ``V d``, then ``word v1 ... vd`` per row.

    Values are written with repr for exact round-tripping.
    """
    if table.size != len(vocab):
        raise ValidationError("table rows do not match vocabulary size")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{table.size} {table.dim}\n")
        for tok, row in zip(vocab.tokens, table.vectors):
            fh.write(tok + " " + " ".join(repr(float(v)) for v in row) + "\n")


def load_embeddings(path) -> tuple[Vocabulary, EmbeddingTable]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValidationError(f"{path}: expected 'V d' header")
        size, dim = int(header[0]), int(header[1])
        tokens = []
        rows = np.empty((size, dim), dtype=np.float64)
        for k in range(size):
            parts = fh.readline().split()
            if len(parts) != dim + 1:
                raise ValidationError(f"{path}: row {k} has wrong field count")
            tokens.append(parts[0])
            rows[k] = [float(v) for v in parts[1:]]
    return Vocabulary.from_ordered(tokens), EmbeddingTable(rows)


@dataclass
class TaggedSentenceMatrix:
    """(d+1, width) matrix: embedding columns plus a 0/1 span-tag row,
    all-zero padding columns beyond the actual length."""

    data: np.ndarray
    length: int

    @property
    def tag_row(self) -> np.ndarray:
        return self.data[-1]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def lookup_tagged(
    vocab: Vocabulary,
    table: EmbeddingTable,
    tokens: Sequence[str],
    span: tuple[int, int] | None,
    width: int,
) -> TaggedSentenceMatrix:
    """Embed tokens column-wise, set the tag row to 1 on the span, pad with zeros.

    span=None leaves the tag row all-zero. Out-of-vocabulary tokens map to
    the shared <unk> row.
    """
    if len(tokens) > width:
        raise LengthError(f"sequence of {len(tokens)} tokens exceeds width {width}")
    d = table.dim
    mat = np.zeros((d + 1, width), dtype=np.float64)
    for t, tok in enumerate(tokens):
        mat[:d, t] = table.vectors[vocab.index(tok)]
    if span is not None:
        i, j = span
        if not (0 <= i <= j < len(tokens)):
            raise ValidationError(f"span {span} out of range for {len(tokens)} tokens")
        mat[d, i : j + 1] = 1.0
    return TaggedSentenceMatrix(mat, len(tokens))


def context_window(tokens: Sequence[str], i: int) -> tuple[str, ...]:
    """5-token window centered at i; <s>/</s> fill past the sentence edges."""
    if not 0 <= i < len(tokens):
        raise ValidationError(f"index {i} out of range for {len(tokens)} tokens")
    window = []
    for k in range(i - WINDOW_RADIUS, i + WINDOW_RADIUS + 1):
        if k < 0:
            window.append(BOS)
        elif k >= len(tokens):
            window.append(EOS)
        else:
            window.append(tokens[k])
    return tuple(window)


@dataclass
class WordPairScorer:
    """Parameters of the window-pair scorer: one affine+ReLU map per side,
    a combiner layer, and a two-layer ReLU MLP with linear scalar output."""

    w_f: np.ndarray
    b_f: np.ndarray
    w_e: np.ndarray
    b_e: np.ndarray
    w_c: np.ndarray
    b_c: np.ndarray
    w_h: np.ndarray
    b_h: np.ndarray
    w_o: np.ndarray
    b_o: float

    @classmethod
    def random(cls, embed_dim: int, hidden: int, rng, scale: float = 0.05) -> "WordPairScorer":
        """Weight matrices use fan-in-scaled bounds (sqrt(6/fan_in)) so the
        stacked ReLU layers neither crush nor blow up the signal; biases use
        the plain +-scale bound."""
        window = 2 * WINDOW_RADIUS + 1
        w = lambda rows, fan: rng.uniform(-1, 1, size=(rows, fan)) * np.sqrt(6.0 / fan)
        u = lambda *shape: rng.uniform(-scale, scale, size=shape)
        return cls(
            w_f=w(hidden, window * embed_dim), b_f=u(hidden),
            w_e=w(hidden, window * embed_dim), b_e=u(hidden),
            w_c=w(hidden, 2 * hidden), b_c=u(hidden),
            w_h=w(hidden, hidden), b_h=u(hidden),
            w_o=w(1, hidden)[0], b_o=float(u(1)[0]),
        )

    @classmethod
    def zeros_like(cls, other: "WordPairScorer") -> "WordPairScorer":
        vals = {}
        for f in fields(cls):
            v = getattr(other, f.name)
            vals[f.name] = 0.0 if np.isscalar(v) else np.zeros_like(v)
        return cls(**vals)

    def copy(self) -> "WordPairScorer":
        vals = {}
        for f in fields(self):
            v = getattr(self, f.name)
            vals[f.name] = v if np.isscalar(v) else v.copy()
        return WordPairScorer(**vals)

    def arrays(self):
        """(name, array-or-scalar) pairs in a fixed order."""
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


def window_vector(vocab: Vocabulary, table: EmbeddingTable, window: Sequence[str]) -> np.ndarray:
    """Concatenated embeddings of a 5-token window."""
    return np.concatenate([table.vectors[vocab.index(tok)] for tok in window])


def _relu(z):
    return np.where(z > 0.0, z, 0.0)


def _scorer_forward(scorer: WordPairScorer, lf: np.ndarray, le: np.ndarray):
    pre_f = scorer.w_f @ lf + scorer.b_f
    x = _relu(pre_f)
    pre_e = scorer.w_e @ le + scorer.b_e
    y = _relu(pre_e)
    z = np.concatenate([x, y])
    pre_c = scorer.w_c @ z + scorer.b_c
    hc = _relu(pre_c)
    pre_h = scorer.w_h @ hc + scorer.b_h
    h2 = _relu(pre_h)
    s = float(scorer.w_o @ h2 + scorer.b_o)
    cache = (lf, le, pre_f, x, pre_e, y, z, pre_c, hc, pre_h, h2)
    return s, cache


def _scorer_backward(scorer: WordPairScorer, cache, ds: float):
    lf, le, pre_f, x, pre_e, y, z, pre_c, hc, pre_h, h2 = cache
    g = WordPairScorer.zeros_like(scorer)
    g.w_o = ds * h2
    g.b_o = ds
    dh2 = ds * scorer.w_o
    dpre_h = dh2 * (pre_h > 0.0)
    g.w_h = np.outer(dpre_h, hc)
    g.b_h = dpre_h
    dhc = scorer.w_h.T @ dpre_h
    dpre_c = dhc * (pre_c > 0.0)
    g.w_c = np.outer(dpre_c, z)
    g.b_c = dpre_c
    dz = scorer.w_c.T @ dpre_c
    h = x.shape[0]
    dx, dy = dz[:h], dz[h:]
    dpre_f = dx * (pre_f > 0.0)
    g.w_f = np.outer(dpre_f, lf)
    g.b_f = dpre_f
    dpre_e = dy * (pre_e > 0.0)
    g.w_e = np.outer(dpre_e, le)
    g.b_e = dpre_e
    dlf = scorer.w_f.T @ dpre_f
    dle = scorer.w_e.T @ dpre_e
    return g, dlf, dle


def word_pair_score(
    f_window: Sequence[str],
    e_window: Sequence[str],
    scorer: WordPairScorer,
    src_vocab: Vocabulary,
    src_table: EmbeddingTable,
    tgt_vocab: Vocabulary,
    tgt_table: EmbeddingTable,
) -> float:
    """Matching score of a source/target context-window pair."""
    if len(f_window) != 2 * WINDOW_RADIUS + 1 or len(e_window) != 2 * WINDOW_RADIUS + 1:
        raise ValidationError("windows must hold exactly 5 tokens")
    lf = window_vector(src_vocab, src_table, f_window)
    le = window_vector(tgt_vocab, tgt_table, e_window)
    s, _ = _scorer_forward(scorer, lf, le)
    return s


@dataclass(frozen=True)
class WordPairCase:
    """A frozen pretraining instance: positive windows plus the negative's
    replaced side ('src' or 'tgt') and replacement center token."""

    f_window: tuple[str, ...]
    e_window: tuple[str, ...]
    neg_side: str
    neg_token: str

    def negative_windows(self):
        mid = WINDOW_RADIUS
        if self.neg_side == "src":
            f = list(self.f_window)
            f[mid] = self.neg_token
            return tuple(f), self.e_window
        e = list(self.e_window)
        e[mid] = self.neg_token
        return self.f_window, tuple(e)


@dataclass
class PretrainConfig:
    embed_dim: int = 50
    hidden: int = 50
    epochs: int = 5
    negatives: int = 1
    learning_rate: float = 0.02
    init_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim < 1 or self.hidden < 1:
            raise ValidationError("dimensions must be >= 1")
        if self.epochs < 0 or self.negatives < 1:
            raise ValidationError("epochs must be >= 0 and negatives >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be > 0")


@dataclass
class PretrainResult:
    source_vocab: Vocabulary
    target_vocab: Vocabulary
    source_table: EmbeddingTable
    target_table: EmbeddingTable
    scorer: WordPairScorer
    validation_losses: list[float]


def _replacement_token(original: str, candidates: Sequence[str], rng) -> str:
    pool = [t for t in candidates if t != original]
    if not pool:
        raise NoTrainingDataError("vocabulary too small for negative sampling")
    return pool[int(rng.integers(len(pool)))]


def make_word_pair_case(
    pair: AlignedSentencePair,
    link: tuple[int, int],
    src_candidates: Sequence[str],
    tgt_candidates: Sequence[str],
    rng,
) -> WordPairCase:
    """Positive windows for one alignment link plus a center-replacement negative."""
    s, t = link
    f_window = context_window(pair.src_tokens, s)
    e_window = context_window(pair.tgt_tokens, t)
    if rng.random() < 0.5:
        side, original, candidates = "src", pair.src_tokens[s], src_candidates
    else:
        side, original, candidates = "tgt", pair.tgt_tokens[t], tgt_candidates
    return WordPairCase(f_window, e_window, side, _replacement_token(original, candidates, rng))


def case_scores(case: WordPairCase, scorer, src_vocab, src_table, tgt_vocab, tgt_table):
    s_pos = word_pair_score(case.f_window, case.e_window, scorer,
                            src_vocab, src_table, tgt_vocab, tgt_table)
    nf, ne = case.negative_windows()
    s_neg = word_pair_score(nf, ne, scorer, src_vocab, src_table, tgt_vocab, tgt_table)
    return s_pos, s_neg


def mean_case_loss(cases, scorer, src_vocab, src_table, tgt_vocab, tgt_table) -> float:
    """Mean hinge loss over a frozen case set."""
    total = 0.0
    for case in cases:
        s_pos, s_neg = case_scores(case, scorer, src_vocab, src_table, tgt_vocab, tgt_table)
        total += max(0.0, 1.0 + s_neg - s_pos)
    return total / len(cases)


def margin_accuracy(cases, scorer, src_vocab, src_table, tgt_vocab, tgt_table) -> float:
    """Fraction of cases whose positive outscores its negative."""
    won = 0
    for case in cases:
        s_pos, s_neg = case_scores(case, scorer, src_vocab, src_table, tgt_vocab, tgt_table)
        if s_pos > s_neg:
            won += 1
    return won / len(cases)


def pretrain_bilingual(
    corpus: Sequence[AlignedSentencePair],
    config: PretrainConfig,
    validation_cases: Sequence[WordPairCase] | None = None,
) -> PretrainResult:
    """Train bilingual word embeddings from alignment links.

    Every aligned word pair contributes its 5-word windows as a positive;
    negatives replace the center word on one uniformly chosen side with a
    different token from that side's vocabulary. Scorer parameters and the
    touched embedding rows take plain SGD steps on the hinge loss.

    With validation_cases given, the mean hinge loss over them is recorded
    before training and after every epoch.
    """
    links = [(pair, (s, t)) for pair in corpus for (s, t) in sorted(pair.alignment)]
    if not links:
        raise NoTrainingDataError("corpus has no alignment links")

    src_vocab = build_vocab(p.src_tokens for p in corpus)
    tgt_vocab = build_vocab(p.tgt_tokens for p in corpus)
    rng = np.random.default_rng(config.seed)
    src_table = EmbeddingTable.random(len(src_vocab), config.embed_dim, rng, config.init_scale)
    tgt_table = EmbeddingTable.random(len(tgt_vocab), config.embed_dim, rng, config.init_scale)
    scorer = WordPairScorer.random(config.embed_dim, config.hidden, rng, config.init_scale)
    src_candidates = src_vocab.real_tokens()
    tgt_candidates = tgt_vocab.real_tokens()

    losses = []

    def validation_loss():
        return mean_case_loss(validation_cases, scorer,
                              src_vocab, src_table, tgt_vocab, tgt_table)

    if validation_cases:
        losses.append(validation_loss())

    lr = config.learning_rate
    for _ in range(config.epochs):
        order = rng.permutation(len(links))
        for li in order:
            pair, link = links[int(li)]
            for _ in range(config.negatives):
                case = make_word_pair_case(pair, link, src_candidates, tgt_candidates, rng)
                _sgd_word_pair(case, scorer, src_vocab, src_table, tgt_vocab, tgt_table, lr)
        if validation_cases:
            losses.append(validation_loss())

    return PretrainResult(src_vocab, tgt_vocab, src_table, tgt_table, scorer, losses)


def _sgd_word_pair(case, scorer, src_vocab, src_table, tgt_vocab, tgt_table, lr):
    """One hinge-loss SGD step on a word-pair case; no-op when the margin holds."""
    lf_pos = window_vector(src_vocab, src_table, case.f_window)
    le_pos = window_vector(tgt_vocab, tgt_table, case.e_window)
    nf, ne = case.negative_windows()
    lf_neg = window_vector(src_vocab, src_table, nf)
    le_neg = window_vector(tgt_vocab, tgt_table, ne)

    s_pos, cache_pos = _scorer_forward(scorer, lf_pos, le_pos)
    s_neg, cache_neg = _scorer_forward(scorer, lf_neg, le_neg)
    if 1.0 + s_neg - s_pos <= 0.0:
        return 0.0

    g_pos, dlf_pos, dle_pos = _scorer_backward(scorer, cache_pos, -1.0)
    g_neg, dlf_neg, dle_neg = _scorer_backward(scorer, cache_neg, 1.0)

    for (name, gp), (_, gn) in zip(g_pos.arrays(), g_neg.arrays()):
        current = getattr(scorer, name)
        setattr(scorer, name, current - lr * (gp + gn))

    d = src_table.dim
    src_rows: dict[int, np.ndarray] = {}
    tgt_rows: dict[int, np.ndarray] = {}

    def scatter(rows, vocab, window, grad):
        for k, tok in enumerate(window):
            seg = grad[k * d : (k + 1) * d]
            row = vocab.index(tok)
            acc = rows.get(row)
            if acc is None:
                rows[row] = seg.copy()
            else:
                acc += seg

    scatter(src_rows, src_vocab, case.f_window, dlf_pos)
    scatter(src_rows, src_vocab, nf, dlf_neg)
    scatter(tgt_rows, tgt_vocab, case.e_window, dle_pos)
    scatter(tgt_rows, tgt_vocab, ne, dle_neg)
    for row, grad in src_rows.items():
        src_table.vectors[row] -= lr * grad
    for row, grad in tgt_rows.items():
        tgt_table.vectors[row] -= lr * grad
    return 1.0 + s_neg - s_pos
