"""A tiny cue-controlled parallel language for end-to-end evaluation.

Every sentence holds exactly one ambiguous source token (from a fixed set of
phrase types), exactly one cue token, and a few filler words. Each phrase
type has two possible translations and the cue decides which one is correct,
so ranking the right candidate above the wrong one is impossible without
reading the context. Alignments are monotone one-to-one, which keeps the
extracted phrase inventory rich and the gold signal unambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import AlignedSentencePair, Span, Tokens

CUE_A = "ka"
CUE_B = "mo"


@dataclass(frozen=True)
class ToyLanguage:
    """Lexicon: ambiguous phrase tokens, their cue-dependent translations,
    unambiguous fillers, and the two cue tokens."""

    phrases: dict[str, tuple[str, str]]  # token -> (translation under A, under B)
    fillers: dict[str, str]
    cues: dict[str, str]

    def translate(self, token: str, cue: str) -> str:
        if token in self.phrases:
            a, b = self.phrases[token]
            return a if cue == CUE_A else b
        if token in self.fillers:
            return self.fillers[token]
        return self.cues[token]


def make_toy_language(n_phrases: int = 20, n_fillers: int = 10) -> ToyLanguage:
    phrases = {f"p{i:02d}": (f"qa{i:02d}", f"qb{i:02d}") for i in range(1, n_phrases + 1)}
    fillers = {f"f{i:02d}": f"F{i:02d}" for i in range(1, n_fillers + 1)}
    return ToyLanguage(phrases=phrases, fillers=fillers,
                       cues={CUE_A: "KA", CUE_B: "MO"})


def generate_corpus(lang: ToyLanguage, n_sentences: int, rng,
                    min_fillers: int = 1, max_fillers: int = 3) -> list[AlignedSentencePair]:
    """Random sentences: one phrase token, one cue, 1..3 fillers, shuffled;
    the target mirrors the source token-by-token (monotone alignment)."""
    phrase_tokens = sorted(lang.phrases)
    filler_tokens = sorted(lang.fillers)
    sentences = []
    for _ in range(n_sentences):
        cue = CUE_A if rng.random() < 0.5 else CUE_B
        k = int(rng.integers(min_fillers, max_fillers + 1))
        tokens = [phrase_tokens[int(rng.integers(len(phrase_tokens)))], cue]
        tokens += [filler_tokens[int(rng.integers(len(filler_tokens)))] for _ in range(k)]
        order = rng.permutation(len(tokens))
        src = tuple(tokens[i] for i in order)
        tgt = tuple(lang.translate(tok, cue) for tok in src)
        alignment = frozenset((i, i) for i in range(len(src)))
        sentences.append(AlignedSentencePair(src, tgt, alignment))
    return sentences


@dataclass(frozen=True)
class RankingCase:
    """A held-out judgment: in this sentence, the positive phrase must
    outscore the negative one."""

    src_tokens: Tokens
    span: Span
    positive: Tokens
    negative: Tokens


def ranking_cases(lang: ToyLanguage, sentences) -> list[RankingCase]:
    """One case per sentence: the ambiguous token's two candidates, ordered
    by what the sentence's cue says is correct."""
    cases = []
    for pair in sentences:
        cue = next(tok for tok in pair.src_tokens if tok in lang.cues)
        for i, tok in enumerate(pair.src_tokens):
            if tok in lang.phrases:
                a, b = lang.phrases[tok]
                pos, neg = (a, b) if cue == CUE_A else (b, a)
                cases.append(RankingCase(pair.src_tokens, (i, i), (pos,), (neg,)))
    return cases


def ranking_accuracy(model, cases) -> float:
    """Fraction of cases where the correct candidate outscores the wrong one."""
    wins = 0
    for case in cases:
        s_pos = model.score(case.src_tokens, case.span, case.positive)
        s_neg = model.score(case.src_tokens, case.span, case.negative)
        if s_pos > s_neg:
            wins += 1
    return wins / len(cases)
