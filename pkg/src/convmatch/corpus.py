"""Word-aligned parallel corpora: parsing, phrase extraction, negatives.

File formats (one record per line, fields separated by ``|||``):

* corpus:        ``src tokens ||| tgt tokens ||| 0-0 1-2 ...``
* phrase table:  ``src phrase ||| tgt phrase ||| count``

Alignment links are 0-based ``src-tgt`` index pairs. A phrase pair is
*consistent* when no word inside either span is aligned to a word outside
the other span and at least one link lies inside both spans.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .errors import (
    CorpusParseError,
    NoCandidateError,
    PoolExhaustedError,
    ValidationError,
)

Tokens = tuple[str, ...]
Span = tuple[int, int]


@dataclass(frozen=True)
class AlignedSentencePair:
    """A tokenized sentence pair plus its word alignment."""

    src_tokens: Tokens
    tgt_tokens: Tokens
    alignment: frozenset[tuple[int, int]]

    def __post_init__(self):
        if not self.src_tokens or not self.tgt_tokens:
            raise ValidationError("sentences must be non-empty")
        for s, t in self.alignment:
            if not 0 <= s < len(self.src_tokens):
                raise ValidationError(f"src alignment index {s} out of range")
            if not 0 <= t < len(self.tgt_tokens):
                raise ValidationError(f"tgt alignment index {t} out of range")


@dataclass(frozen=True)
class ContextualExample:
    """A source span in its sentence with its aligned target phrase."""

    sentence: AlignedSentencePair
    src_span: Span
    positive_tgt: Tokens
    tgt_span: Span | None = None

    def __post_init__(self):
        i, j = self.src_span
        if not (0 <= i <= j < len(self.sentence.src_tokens)):
            raise ValidationError(f"src span {self.src_span} out of range")
        if not self.positive_tgt:
            raise ValidationError("positive target phrase must be non-empty")

    @property
    def src_phrase(self) -> Tokens:
        i, j = self.src_span
        return self.sentence.src_tokens[i : j + 1]


class Difficulty(enum.Enum):
    EASY = "easy"
    MEDIUM = "medium"
    DIFFICULT = "difficult"


@dataclass(frozen=True)
class TrainingTriple:
    """A contextual example paired with one negative target phrase."""

    example: ContextualExample
    negative_tgt: Tokens
    difficulty: Difficulty

    def __post_init__(self):
        if tuple(self.negative_tgt) == tuple(self.example.positive_tgt):
            raise ValidationError("negative must differ from the positive phrase")


def _parse_line(line: str, line_no: int, path=None) -> AlignedSentencePair:
    parts = [p.strip() for p in line.split("|||")]
    if len(parts) != 3:
        raise CorpusParseError(
            f"expected 'src ||| tgt ||| alignment', got {len(parts)} fields",
            line_no=line_no, path=path,
        )
    src = tuple(parts[0].split())
    tgt = tuple(parts[1].split())
    links = set()
    for item in parts[2].split():
        pieces = item.split("-")
        if len(pieces) != 2:
            raise CorpusParseError(
                f"malformed alignment link {item!r}", line_no=line_no, path=path
            )
        try:
            s, t = int(pieces[0]), int(pieces[1])
        except ValueError:
            raise CorpusParseError(
                f"malformed alignment link {item!r}", line_no=line_no, path=path
            ) from None
        links.add((s, t))
    if not src or not tgt:
        raise CorpusParseError("empty sentence", line_no=line_no, path=path)
    try:
        return AlignedSentencePair(src, tgt, frozenset(links))
    except ValidationError as exc:
        raise ValidationError(f"line {line_no}: {exc}") from exc


def parse_corpus(stream: Iterable[str], path=None) -> Iterator[AlignedSentencePair]:
    """Parse a line-oriented corpus; blank lines are skipped."""
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        yield _parse_line(line, line_no, path=path)


def read_corpus(path) -> list[AlignedSentencePair]:
    with open(path, encoding="utf-8") as fh:
        return list(parse_corpus(fh, path=path))


def write_corpus(path, pairs: Iterable[AlignedSentencePair]):
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            links = " ".join(f"{s}-{t}" for s, t in sorted(pair.alignment))
            fh.write(f"{' '.join(pair.src_tokens)} ||| {' '.join(pair.tgt_tokens)} ||| {links}\n")


def consistent_span_pairs(pair: AlignedSentencePair, max_len: int) -> list[tuple[Span, Span]]:
    """All consistent (src_span, tgt_span) pairs with both sides <= max_len.

    For each source span the aligned target indices are projected to their
    minimal covering span; back-projection is checked, and every widening
    over adjacent unaligned target words is enumerated. This yields exactly
    the span pairs satisfying the consistency predicate.
    """
    if max_len < 1:
        raise ValidationError("max_len must be >= 1")
    links = sorted(pair.alignment)
    if not links:
        return []
    n_tgt = len(pair.tgt_tokens)
    aligned_tgt = {t for _, t in links}
    out = []
    for i1 in range(len(pair.src_tokens)):
        for i2 in range(i1, min(i1 + max_len, len(pair.src_tokens))):
            inside = [t for s, t in links if i1 <= s <= i2]
            if not inside:
                continue
            jmin, jmax = min(inside), max(inside)
            # every link landing in the minimal target span must come from inside
            if any(jmin <= t <= jmax and not i1 <= s <= i2 for s, t in links):
                continue
            lo = jmin
            while lo > 0 and (lo - 1) not in aligned_tgt:
                lo -= 1
            hi = jmax
            while hi < n_tgt - 1 and (hi + 1) not in aligned_tgt:
                hi += 1
            for j1 in range(lo, jmin + 1):
                for j2 in range(jmax, hi + 1):
                    if j2 - j1 + 1 <= max_len:
                        out.append(((i1, i2), (j1, j2)))
    out.sort()
    return out


def extract_phrase_pairs(pair: AlignedSentencePair, max_len: int) -> list[ContextualExample]:
    """One ContextualExample per consistent span pair, in span order."""
    examples = []
    for src_span, tgt_span in consistent_span_pairs(pair, max_len):
        j1, j2 = tgt_span
        examples.append(
            ContextualExample(
                sentence=pair,
                src_span=src_span,
                positive_tgt=pair.tgt_tokens[j1 : j2 + 1],
                tgt_span=tgt_span,
            )
        )
    return examples


class PhraseTable:
    """Multimap from source phrase to target-phrase candidates with counts."""

    def __init__(self):
        self._entries: dict[Tokens, dict[Tokens, int]] = {}
        self._distinct_targets: tuple[Tokens, ...] | None = None

    def add(self, src: Sequence[str], tgt: Sequence[str], count: int = 1):
        if count < 1:
            raise ValidationError(f"count must be >= 1, got {count}")
        src, tgt = tuple(src), tuple(tgt)
        if not src or not tgt:
            raise ValidationError("phrases must be non-empty")
        slot = self._entries.setdefault(src, {})
        slot[tgt] = slot.get(tgt, 0) + count
        self._distinct_targets = None

    def __contains__(self, src_phrase) -> bool:
        return tuple(src_phrase) in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def candidates(self, src_phrase) -> tuple[Tokens, ...]:
        """Distinct target phrases recorded for this source phrase, sorted."""
        return tuple(sorted(self._entries.get(tuple(src_phrase), {})))

    def count(self, src_phrase, tgt_phrase) -> int:
        return self._entries.get(tuple(src_phrase), {}).get(tuple(tgt_phrase), 0)

    def distinct_targets(self) -> tuple[Tokens, ...]:
        """All distinct target phrases across the table, sorted."""
        if self._distinct_targets is None:
            seen = set()
            for slot in self._entries.values():
                seen.update(slot)
            self._distinct_targets = tuple(sorted(seen))
        return self._distinct_targets

    def source_phrases(self) -> tuple[Tokens, ...]:
        return tuple(sorted(self._entries))

    @classmethod
    def from_corpus(cls, pairs: Iterable[AlignedSentencePair], max_len: int) -> "PhraseTable":
        table = cls()
        for pair in pairs:
            for ex in extract_phrase_pairs(pair, max_len):
                table.add(ex.src_phrase, ex.positive_tgt)
        return table

    @classmethod
    def load(cls, path, max_len: int | None = None) -> "PhraseTable":
        table = cls()
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                parts = [p.strip() for p in line.split("|||")]
                if len(parts) != 3:
                    raise CorpusParseError(
                        "expected 'src ||| tgt ||| count'", line_no=line_no, path=path
                    )
                try:
                    count = int(parts[2])
                except ValueError:
                    raise CorpusParseError(
                        f"malformed count {parts[2]!r}", line_no=line_no, path=path
                    ) from None
                src, tgt = tuple(parts[0].split()), tuple(parts[1].split())
                if max_len is not None and (len(src) > max_len or len(tgt) > max_len):
                    raise ValidationError(
                        f"{path}:{line_no}: phrase longer than max_len={max_len}"
                    )
                table.add(src, tgt, count)
        return table

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for src in self.source_phrases():
                for tgt in self.candidates(src):
                    fh.write(
                        f"{' '.join(src)} ||| {' '.join(tgt)} ||| {self._entries[src][tgt]}\n"
                    )


def _uniform_choice(seq, rng):
    return seq[int(rng.integers(len(seq)))]


def gen_easy_negative(example: ContextualExample, table: PhraseTable, rng) -> Tokens:
    """Uniform draw from the table's distinct target phrases, never the positive."""
    positive = tuple(example.positive_tgt)
    candidates = [t for t in table.distinct_targets() if t != positive]
    if not candidates:
        raise NoCandidateError(
            "phrase table holds no target phrase besides the positive"
        )
    return _uniform_choice(candidates, rng)


def gen_medium_negative(example: ContextualExample, rng, max_len: int = 7) -> Tokens:
    """Target phrase of a non-overlapping source phrase from the same sentence."""
    i, j = example.src_span
    positive = tuple(example.positive_tgt)
    pool = set()
    for other in extract_phrase_pairs(example.sentence, max_len):
        oi, oj = other.src_span
        if oj < i or oi > j:  # disjoint from the positive span
            if other.positive_tgt != positive:
                pool.add(other.positive_tgt)
    if not pool:
        raise NoCandidateError("sentence yields no non-overlapping phrase candidates")
    return _uniform_choice(sorted(pool), rng)


def gen_difficult_negative(example: ContextualExample, table: PhraseTable, rng) -> Tokens:
    """Another table candidate for exactly the same source phrase."""
    positive = tuple(example.positive_tgt)
    candidates = [t for t in table.candidates(example.src_phrase) if t != positive]
    if not candidates:
        raise NoCandidateError(
            f"source phrase {' '.join(example.src_phrase)!r} has no rival candidate"
        )
    return _uniform_choice(candidates, rng)


def mix_probabilities(n_pools: int, step: int) -> tuple[float, ...]:
    """Pool-selection distribution: [0.5, 0.5] for two pools, else
    [1/(s+2), 1/(s+2), s/(s+2)] for three."""
    if step < 0:
        raise ValidationError("step must be >= 0")
    if n_pools == 2:
        return (0.5, 0.5)
    if n_pools == 3:
        denom = step + 2.0
        return (1.0 / denom, 1.0 / denom, step / denom)
    raise ValidationError(f"mix sampling expects 2 or 3 pools, got {n_pools}")


def mix_sample(pools: Sequence[Sequence[TrainingTriple]], step: int, rng) -> TrainingTriple:
    """Pick a pool by the mixture distribution, then a triple uniformly in it."""
    probs = mix_probabilities(len(pools), step)
    u = rng.random()
    acc = 0.0
    index = len(pools) - 1
    for k, p in enumerate(probs):
        acc += p
        if u < acc:
            index = k
            break
    pool = pools[index]
    if not pool:
        raise PoolExhaustedError(f"selected pool {index} is empty")
    return _uniform_choice(pool, rng)


@dataclass
class TriplePools:
    """Pre-generated training triples, one pool per difficulty."""

    easy: list[TrainingTriple] = field(default_factory=list)
    medium: list[TrainingTriple] = field(default_factory=list)
    difficult: list[TrainingTriple] = field(default_factory=list)
    dropped_medium: int = 0
    dropped_difficult: int = 0


def build_pools(
    pairs: Iterable[AlignedSentencePair],
    table: PhraseTable,
    max_len: int,
    rng,
) -> TriplePools:
    """Extract every contextual example and attach one negative per difficulty.

    Examples with no non-overlapping sentence phrase are absent from the
    medium pool; examples whose source phrase has fewer than two table
    candidates are dropped from the difficult pool only.
    """
    pools = TriplePools()
    for pair in pairs:
        for ex in extract_phrase_pairs(pair, max_len):
            easy = gen_easy_negative(ex, table, rng)
            pools.easy.append(TrainingTriple(ex, easy, Difficulty.EASY))
            try:
                medium = gen_medium_negative(ex, rng, max_len=max_len)
                pools.medium.append(TrainingTriple(ex, medium, Difficulty.MEDIUM))
            except NoCandidateError:
                pools.dropped_medium += 1
            if len(table.candidates(ex.src_phrase)) >= 2:
                try:
                    hard = gen_difficult_negative(ex, table, rng)
                    pools.difficult.append(TrainingTriple(ex, hard, Difficulty.DIFFICULT))
                except NoCandidateError:
                    pools.dropped_difficult += 1
            else:
                pools.dropped_difficult += 1
    return pools
